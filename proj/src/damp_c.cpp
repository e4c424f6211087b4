// Copyright 2026 The damp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "damp/damp.h"

#include <cstring>
#include <exception>
#include <new>
#include <set>
#include <string>

#include "damp/checkpoint.hpp"
#include "damp/config.hpp"
#include "damp/data.hpp"
#include "damp/error.hpp"
#include "damp/metrics.hpp"
#include "damp/model.hpp"
#include "damp/pipeline.hpp"
#include "damp/surgery.hpp"
#include "damp/train.hpp"

struct damp_model {
  damp::nn::StageModel model;
};

struct damp_dataset {
  damp::data::LabeledDataset data;
};

namespace {

thread_local std::string g_last_error;

damp_status status_of(damp::ErrorKind kind) {
  using damp::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return DAMP_ERR_INVALID_ARGUMENT;
    case ErrorKind::InvalidState: return DAMP_ERR_INVALID_STATE;
    case ErrorKind::Format: return DAMP_ERR_FORMAT;
    case ErrorKind::Consistency: return DAMP_ERR_CONSISTENCY;
    case ErrorKind::Corruption: return DAMP_ERR_CORRUPTION;
    case ErrorKind::Version: return DAMP_ERR_VERSION;
    case ErrorKind::MissingClass: return DAMP_ERR_MISSING_CLASS;
    case ErrorKind::Contamination: return DAMP_ERR_CONTAMINATION;
    case ErrorKind::InsufficientData: return DAMP_ERR_INSUFFICIENT_DATA;
    case ErrorKind::DegenerateFeature: return DAMP_ERR_DEGENERATE_FEATURE;
    case ErrorKind::Config: return DAMP_ERR_CONFIG;
    case ErrorKind::Dependency: return DAMP_ERR_DEPENDENCY;
    case ErrorKind::Staleness: return DAMP_ERR_STALENESS;
    case ErrorKind::Io: return DAMP_ERR_IO;
    case ErrorKind::Numeric: return DAMP_ERR_NUMERIC;
  }
  return DAMP_ERR_INTERNAL;
}

// Runs `f`, turning every exception into a status and a thread-local message.
template <class F>
damp_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return DAMP_OK;
  } catch (const damp::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DAMP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DAMP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DAMP_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  damp::require(p != nullptr, damp::ErrorKind::InvalidArgument, std::string(name) + " is null");
}

}  // namespace

extern "C" {

const char* damp_version(void) { return "1.0.0"; }

const char* damp_status_name(damp_status status) {
  switch (status) {
    case DAMP_OK: return "ok";
    case DAMP_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DAMP_ERR_INVALID_STATE: return "invalid_state";
    case DAMP_ERR_FORMAT: return "format";
    case DAMP_ERR_CONSISTENCY: return "consistency";
    case DAMP_ERR_CORRUPTION: return "corruption";
    case DAMP_ERR_VERSION: return "version";
    case DAMP_ERR_MISSING_CLASS: return "missing_class";
    case DAMP_ERR_CONTAMINATION: return "contamination";
    case DAMP_ERR_INSUFFICIENT_DATA: return "insufficient_data";
    case DAMP_ERR_DEGENERATE_FEATURE: return "degenerate_feature";
    case DAMP_ERR_CONFIG: return "config";
    case DAMP_ERR_DEPENDENCY: return "dependency";
    case DAMP_ERR_STALENESS: return "staleness";
    case DAMP_ERR_IO: return "io";
    case DAMP_ERR_NUMERIC: return "numeric";
    case DAMP_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* damp_last_error(void) { return g_last_error.c_str(); }

int damp_exit_code(damp_status status) {
  using damp::ErrorKind;
  switch (status) {
    case DAMP_OK: return 0;
    case DAMP_ERR_INVALID_ARGUMENT: return damp::exit_code(ErrorKind::InvalidArgument);
    case DAMP_ERR_INVALID_STATE: return damp::exit_code(ErrorKind::InvalidState);
    case DAMP_ERR_FORMAT: return damp::exit_code(ErrorKind::Format);
    case DAMP_ERR_CONSISTENCY: return damp::exit_code(ErrorKind::Consistency);
    case DAMP_ERR_CORRUPTION: return damp::exit_code(ErrorKind::Corruption);
    case DAMP_ERR_VERSION: return damp::exit_code(ErrorKind::Version);
    case DAMP_ERR_MISSING_CLASS: return damp::exit_code(ErrorKind::MissingClass);
    case DAMP_ERR_CONTAMINATION: return damp::exit_code(ErrorKind::Contamination);
    case DAMP_ERR_INSUFFICIENT_DATA: return damp::exit_code(ErrorKind::InsufficientData);
    case DAMP_ERR_DEGENERATE_FEATURE: return damp::exit_code(ErrorKind::DegenerateFeature);
    case DAMP_ERR_CONFIG: return damp::exit_code(ErrorKind::Config);
    case DAMP_ERR_DEPENDENCY: return damp::exit_code(ErrorKind::Dependency);
    case DAMP_ERR_STALENESS: return damp::exit_code(ErrorKind::Staleness);
    case DAMP_ERR_IO: return damp::exit_code(ErrorKind::Io);
    case DAMP_ERR_NUMERIC: return damp::exit_code(ErrorKind::Numeric);
    case DAMP_ERR_INTERNAL: return 4;
  }
  return 4;
}

void damp_options_init(damp_options* options) {
  if (options == nullptr) return;
  options->out_dir = nullptr;
  options->has_seed = 0;
  options->seed = 0;
  options->methods = nullptr;
  options->adversarial = -1;
}

damp_status damp_run(const char* command, const char* config_path, const damp_options* options) {
  return guarded([&] {
    need(command, "command");
    damp::require(config_path != nullptr, damp::ErrorKind::Config, "--config is required");
    auto cfg = damp::config::load(config_path);
    if (options != nullptr) {
      damp::config::Overrides o;
      if (options->out_dir != nullptr) o.out_dir = options->out_dir;
      if (options->has_seed != 0) o.seed = options->seed;
      if (options->methods != nullptr) o.methods = damp::config::split_list(options->methods);
      if (options->adversarial >= 0) o.adversarial = options->adversarial != 0;
      damp::config::apply(cfg, o);
    }
    damp::pipeline::run_command(command, cfg);
  });
}

damp_status damp_model_build(const char* arch, int channels, int height, int width,
                             int class_count, uint64_t seed, damp_model** out) {
  return guarded([&] {
    need(arch, "arch");
    need(out, "out");
    damp::require(channels > 0 && height > 0 && width > 0 && class_count >= 2,
                  damp::ErrorKind::InvalidArgument, "invalid model dimensions");
    auto m = damp::nn::build_model(damp::nn::arch_from_name(arch), {channels, height, width},
                                   class_count, seed);
    *out = new damp_model{std::move(m)};
  });
}

damp_status damp_model_load(const char* path, damp_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new damp_model{damp::io::load_checkpoint(path)};
  });
}

damp_status damp_model_save(const damp_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    damp::io::save_checkpoint(model->model, path);
  });
}

void damp_model_free(damp_model* model) { delete model; }

damp_status damp_model_class_count(const damp_model* model, int* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = model->model.class_count;
  });
}

damp_status damp_model_fingerprint(const damp_model* model, char* buffer, size_t capacity) {
  return guarded([&] {
    need(model, "model");
    need(buffer, "buffer");
    const auto fp = damp::nn::fingerprint(model->model);
    damp::require(capacity > fp.size(), damp::ErrorKind::InvalidArgument,
                  "fingerprint buffer needs " + std::to_string(fp.size() + 1) + " bytes");
    std::memcpy(buffer, fp.c_str(), fp.size() + 1);
  });
}

damp_status damp_model_train(damp_model* model, const damp_dataset* data, int epochs,
                             double learning_rate, uint64_t seed) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    damp::nn::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.learning_rate = learning_rate;
    cfg.seed = seed;
    damp::nn::train(model->model, data->data, cfg);
  });
}

damp_status damp_dataset_synthetic(int class_count, int per_class, int channels, int height,
                                   int width, double separation, double noise, uint64_t seed,
                                   int test_split, damp_dataset** out) {
  return guarded([&] {
    need(out, "out");
    damp::data::BlobConfig cfg;
    cfg.class_count = class_count;
    cfg.per_class = per_class;
    cfg.shape = {channels, height, width};
    cfg.separation = separation;
    cfg.noise = noise;
    cfg.seed = seed;
    auto d = damp::data::synth_blobs(cfg, test_split != 0 ? damp::data::Split::Test
                                                           : damp::data::Split::Train);
    *out = new damp_dataset{std::move(d)};
  });
}

damp_status damp_dataset_from_manifest(const char* manifest_path, int test_split,
                                       damp_dataset** out) {
  return guarded([&] {
    need(manifest_path, "manifest_path");
    need(out, "out");
    const auto m = damp::data::read_manifest(manifest_path);
    auto d = test_split != 0
                 ? damp::data::load_idx(m.test_images, m.test_labels, m.class_count,
                                        m.normalization, damp::data::Split::Test)
                 : damp::data::load_idx(m.train_images, m.train_labels, m.class_count,
                                        m.normalization, damp::data::Split::Train);
    *out = new damp_dataset{std::move(d)};
  });
}

void damp_dataset_free(damp_dataset* data) { delete data; }

damp_status damp_dataset_size(const damp_dataset* data, size_t* out) {
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    *out = data->data.size();
  });
}

damp_status damp_accuracy(const damp_model* model, const damp_dataset* data, const int* classes,
                          size_t count, double* out) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    if (count == 0) {
      *out = damp::metrics::accuracy(model->model, data->data);
      return;
    }
    need(classes, "classes");
    const std::set<int> keep(classes, classes + count);
    *out = damp::metrics::accuracy(model->model, damp::data::filter_classes(data->data, keep));
  });
}

damp_status damp_unlearn(const damp_model* model, const damp_dataset* train, const int* forget,
                         size_t count, uint64_t seed, const char* trace_path, damp_model** out) {
  return guarded([&] {
    need(model, "model");
    need(train, "train");
    need(forget, "forget");
    need(out, "out");
    damp::surgery::UnlearnConfig cfg;
    cfg.forget.classes.insert(forget, forget + count);
    cfg.probe.seed = seed;
    auto r = damp::surgery::unlearn(model->model, train->data, cfg);
    if (trace_path != nullptr) {
      damp::io::write_text(trace_path, damp::surgery::to_json(r.trace).dump(2) + "\n");
    }
    *out = new damp_model{std::move(r.model)};
  });
}

damp_status damp_cus(double retain, double newly_forgotten, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = damp::metrics::cus(retain, newly_forgotten);
  });
}

}  // extern "C"
