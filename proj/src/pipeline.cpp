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

#include "damp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "damp/baselines.hpp"
#include "damp/checkpoint.hpp"
#include "damp/error.hpp"
#include "damp/surgery.hpp"
#include "damp/train.hpp"

namespace damp::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void note(const std::string& msg) { std::cerr << "damp: " << msg << "\n"; }

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::Config,
          "output directory " + dir.string() + " is not writable");
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Dependency,
          "missing " + what + " (" + path.string() + ")");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

// Timings live next to the payloads, never inside them.
void write_timing(const fs::path& path, json timings) {
  json j;
  j["created_at"] = utc_now();
  j["seconds"] = std::move(timings);
  write_json(path, j);
}

std::vector<int> as_vector(const std::set<int>& s) { return {s.begin(), s.end()}; }

std::set<int> retain_of(const data::LabeledDataset& d, const data::ForgetSpec& f) {
  std::set<int> out;
  for (int c : data::present_classes(d)) {
    if (f.classes.count(c) == 0) out.insert(c);
  }
  return out;
}

probe::ProbeConfig probe_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto p = cfg.unlearn.probe;
  p.seed = seed;
  return p;
}

nn::TrainConfig train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto t = cfg.pretrain;
  t.seed = seed;
  return t;
}

baselines::BaselineConfig baseline_config(const ExperimentConfig& cfg, const std::string& tag,
                                          std::uint64_t seed) {
  auto it = cfg.baselines.find(tag);
  auto b = it != cfg.baselines.end() ? it->second
                                     : baselines::default_config(baselines::method_from_tag(tag));
  b.seed = seed;
  return b;
}

json hyperparameters(const std::string& tag, const ExperimentConfig& cfg, std::uint64_t seed) {
  json h;
  if (tag == "damp") {
    h["residual_tol"] = cfg.unlearn.residual_tol;
    h["probe_fraction"] = cfg.unlearn.probe.train_fraction;
    h["probe_c"] = cfg.unlearn.probe.inverse_l2;
    h["alpha_boost"] = cfg.unlearn.alpha_boost;
    h["max_per_class"] = cfg.unlearn.max_per_class;
    h["seed"] = seed;
    return h;
  }
  if (tag == "retrain") {
    const auto t = train_config(cfg, seed);
    h["optimizer"] = t.optimizer == nn::OptimizerKind::Adam ? "adam" : "sgd";
    h["learning_rate"] = t.learning_rate;
    h["epochs"] = t.epochs;
    h["batch_size"] = t.batch_size;
    h["weight_decay"] = t.weight_decay;
    h["seed"] = seed;
    return h;
  }
  const auto b = baseline_config(cfg, tag, seed);
  h["epochs"] = b.epochs;
  h["learning_rate"] = b.learning_rate;
  h["batch_size"] = b.batch_size;
  if (tag == "gau") h["lambda"] = b.lambda_gau;
  if (tag == "kdu") {
    h["lambda"] = b.lambda_kdu;
    h["temperature"] = b.temperature;
  }
  h["seed"] = seed;
  return h;
}

fs::path unlearn_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return seed_dir(cfg, seed) / "unlearn";
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string out;
  for (const auto& c : cells) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out + "\n";
}

}  // namespace

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s(buf);
  if (s == "-0.00" || s == "-0.0" || s == "-0.000000") s.erase(0, 1);
  return s;
}

// ---------------------------------------------------------------------------

Datasets load_datasets(const ExperimentConfig& cfg, std::uint64_t seed) {
  Datasets out;
  const auto& d = cfg.data;
  if (d.source == config::DataSource::Idx) {
    const auto m = data::read_manifest(d.manifest);
    out.train = data::load_idx(m.train_images, m.train_labels, m.class_count, m.normalization,
                               data::Split::Train);
    out.test = data::load_idx(m.test_images, m.test_labels, m.class_count, m.normalization,
                              data::Split::Test);
    return out;
  }
  auto blobs = d.blobs;
  blobs.seed = d.data_seed.value_or(seed);
  out.train = data::synth_blobs(blobs, data::Split::Train);
  blobs.per_class = d.per_class_test;
  out.test = data::synth_blobs(blobs, data::Split::Test);
  return out;
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.out_dir / ("seed-" + std::to_string(seed));
}

fs::path baseline_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  return seed_dir(cfg, seed) / "baseline.dampckpt";
}

nn::StageModel load_baseline(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto path = baseline_path(cfg, seed);
  require(fs::exists(path), ErrorKind::Dependency,
          "baseline checkpoint " + path.string() + " does not exist; run pretrain first");
  auto model = io::load_checkpoint(path);
  if (!cfg.expected_fingerprint.empty()) {
    const auto fp = nn::fingerprint(model);
    require(fp == cfg.expected_fingerprint, ErrorKind::Staleness,
            "checkpoint " + path.string() + " has fingerprint " + fp + ", config expects " +
                cfg.expected_fingerprint);
  }
  require(model.arch.tag == cfg.arch, ErrorKind::Staleness,
          "checkpoint architecture " + model.arch.tag + " does not match config arch " + cfg.arch);
  return model;
}

PretrainResult pretrain(const ExperimentConfig& cfg, const Datasets& data, std::uint64_t seed) {
  PretrainResult out;
  out.model = nn::build_model(nn::arch_from_name(cfg.arch), data.train.shape,
                              data.train.class_count, seed);
  out.epoch_loss = nn::train(out.model, data.train, train_config(cfg, seed)).epoch_loss;
  return out;
}

MethodResult run_method(const std::string& tag, const nn::StageModel& base, const Datasets& data,
                        const data::ForgetSpec& forget, const ExperimentConfig& cfg,
                        std::uint64_t seed) {
  require(config::is_known_method(tag), ErrorKind::Config, "unknown method '" + tag + "'");
  data::validate(forget, base.class_count);
  MethodResult out;
  out.tag = tag;
  const auto start_fp = nn::fingerprint(base);
  const auto t0 = Clock::now();
  json trace;
  trace["method"] = tag;
  trace["hyperparameters"] = hyperparameters(tag, cfg, seed);
  trace["start_fingerprint"] = start_fp;
  trace["forget_classes"] = as_vector(forget.classes);
  trace["retain_classes"] = as_vector(retain_of(data.train, forget));
  if (tag == "damp") {
    auto ucfg = cfg.unlearn;
    ucfg.forget = forget;
    ucfg.probe.seed = seed;
    auto r = surgery::unlearn(base, data.train, ucfg);
    out.model = std::move(r.model);
    out.surgery_seconds = r.trace.surgery_seconds;
    out.statistics_seconds = r.trace.statistics_seconds;
    trace["damp"] = surgery::to_json(r.trace);
  } else {
    out.model = baselines::run(baselines::method_from_tag(tag), base, data.train, forget,
                               baseline_config(cfg, tag, seed), train_config(cfg, seed));
  }
  out.seconds = seconds_since(t0);
  // Every method starts from the same weights; a mutated input would be a bug.
  require(nn::fingerprint(base) == start_fp, ErrorKind::InvalidState,
          "method " + tag + " modified its starting model");
  trace["fingerprint"] = nn::fingerprint(out.model);
  trace["output_mask"] = out.model.output_mask;
  const auto split = data::split_retain_forget(data.test, forget);
  trace["retain_accuracy"] = metrics::accuracy(out.model, split.retain);
  trace["forget_accuracy"] = metrics::accuracy(out.model, split.forget);
  out.trace = std::move(trace);
  return out;
}

std::vector<metrics::LayerStats> probe_stats(const nn::StageModel& model,
                                             const data::LabeledDataset& test,
                                             const data::ForgetSpec& forget,
                                             const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto split = data::split_retain_forget(test, forget);
  return metrics::layer_stats(model, split.forget, split.retain, probe_config(cfg, seed));
}

MethodEval evaluate(const std::string& tag, const nn::StageModel& model,
                    const nn::StageModel& baseline,
                    const std::vector<metrics::LayerStats>& baseline_layers,
                    const data::LabeledDataset& test, const data::ForgetSpec& forget,
                    const ExperimentConfig& cfg, const metrics::Rdm* reference) {
  MethodEval out;
  out.tag = tag;
  const auto split = data::split_retain_forget(test, forget);
  out.retain_acc = metrics::accuracy(model, split.retain);
  out.forget_acc = metrics::accuracy(model, split.forget);

  if (cfg.eval.adversarial) {
    nn::AttackConfig fgsm;
    fgsm.attack = nn::Attack::Fgsm;
    fgsm.epsilon = cfg.eval.epsilon;
    nn::AttackConfig pgd = fgsm;
    pgd.attack = nn::Attack::Pgd;
    pgd.steps = cfg.eval.pgd_steps;
    pgd.step_size = cfg.eval.epsilon / 4.0;
    out.adversarial = std::array<double, 4>{
        metrics::adversarial_accuracy(model, split.retain, fgsm),
        metrics::adversarial_accuracy(model, split.forget, fgsm),
        metrics::adversarial_accuracy(model, split.retain, pgd),
        metrics::adversarial_accuracy(model, split.forget, pgd)};
  }

  const std::uint64_t probe_seed = cfg.unlearn.probe.seed;
  out.layers = metrics::layer_stats(model, split.forget, split.retain, probe_config(cfg, probe_seed));
  require(out.layers.size() == baseline_layers.size(), ErrorKind::InvalidState,
          "stage count differs from the baseline");
  for (std::size_t s = 0; s < out.layers.size(); ++s) {
    out.selectivity.push_back(metrics::selectivity(baseline_layers[s], out.layers[s]));
  }

  if (cfg.eval.rdm) {
    const int stage = cfg.eval.rdm_stage == 0 ? model.stage_count() : cfg.eval.rdm_stage;
    const auto retain = as_vector(retain_of(test, forget));
    out.rdm = metrics::rdm(model, test, retain, stage, cfg.eval.rdm_samples);
    if (reference != nullptr) out.rdm_diff = metrics::diff_to(*out.rdm, *reference).mean_abs;
  }
  out.bias_shift = metrics::bias_shift(model, baseline);
  return out;
}

metrics::ContinualLog run_continual(const std::string& method, const nn::StageModel& base,
                                    const Datasets& data, const std::vector<int>& sequence,
                                    const ExperimentConfig& cfg, std::uint64_t seed) {
  std::set<int> seen;
  for (int c : sequence) {
    require(seen.insert(c).second, ErrorKind::Config,
            "continual sequence repeats class " + std::to_string(c));
  }
  metrics::ContinualLog log;
  nn::StageModel current = base;
  data::ForgetSpec forget;
  for (int cls : sequence) {
    forget.classes.insert(cls);
    // Retraining always starts from scratch; every other method edits the
    // model left by the previous round.
    const auto& start = method == "retrain" ? base : current;
    current = run_method(method, start, data, forget, cfg, seed).model;
    metrics::continual_round(log, current, cls, data.test);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_pretrain(const ExperimentConfig& cfg) {
  for (auto seed : cfg.seeds) {
    const auto dir = seed_dir(cfg, seed);
    ensure_dir(dir);
    const auto data = load_datasets(cfg, seed);
    const auto t0 = Clock::now();
    auto r = pretrain(cfg, data, seed);
    const double secs = seconds_since(t0);
    const auto ckpt = dir / "baseline.dampckpt";
    io::save_checkpoint(r.model, ckpt);

    std::string log(kTrainLogHeader);
    log += "\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
      log += csv_row({std::to_string(e + 1), format_fixed(r.epoch_loss[e], 6)});
    }
    io::write_text(dir / "train_log.csv", log);

    json manifest;
    manifest["checkpoint"] = ckpt.filename().string();
    manifest["fingerprint"] = nn::fingerprint(r.model);
    manifest["arch"] = cfg.arch;
    manifest["seed"] = seed;
    manifest["class_count"] = r.model.class_count;
    manifest["input_shape"] = {r.model.input.channels, r.model.input.height, r.model.input.width};
    manifest["train_samples"] = data.train.size();
    manifest["test_samples"] = data.test.size();
    manifest["data_source"] = cfg.data.source == config::DataSource::Idx ? "idx" : "synthetic";
    manifest["train_accuracy"] = metrics::accuracy(r.model, data.train);
    manifest["test_accuracy"] = metrics::accuracy(r.model, data.test);
    manifest["final_loss"] = r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back();
    write_json(dir / "manifest.json", manifest);
    write_timing(dir / "pretrain.timing.json", json{{"pretrain", secs}});
    note("seed " + std::to_string(seed) + ": baseline " + manifest["fingerprint"].get<std::string>() +
         " test accuracy " + format_fixed(manifest["test_accuracy"].get<double>(), 2));
  }
}

void cmd_unlearn(const ExperimentConfig& cfg) {
  for (auto seed : cfg.seeds) {
    const auto dir = unlearn_dir(cfg, seed);
    ensure_dir(dir);
    const auto base = load_baseline(cfg, seed);
    const auto data = load_datasets(cfg, seed);
    const auto base_fp = nn::fingerprint(base);
    json timings;
    for (const auto& tag : cfg.methods) {
      auto r = run_method(tag, base, data, cfg.forget, cfg, seed);
      require(r.trace["start_fingerprint"] == base_fp, ErrorKind::InvalidState,
              "method " + tag + " did not start from the shared baseline");
      if (tag == "lm") {
        // Weightless: the evaluator re-applies the mask to the baseline.
        json desc;
        desc["method"] = "lm";
        desc["base_checkpoint"] = fs::absolute(baseline_path(cfg, seed)).string();
        desc["base_fingerprint"] = base_fp;
        desc["masked_classes"] = r.model.output_mask;
        write_json(dir / "lm.evaluator.json", desc);
      } else {
        io::save_checkpoint(r.model, dir / (tag + ".dampckpt"));
      }
      write_json(dir / (tag + ".trace.json"), r.trace);
      timings[tag] = r.seconds;
      if (tag == "damp") {
        timings["damp_surgery"] = r.surgery_seconds;
        timings["damp_statistics"] = r.statistics_seconds;
      }
      note("seed " + std::to_string(seed) + ": " + tag + " retain " +
           format_fixed(r.trace["retain_accuracy"].get<double>(), 2) + " forget " +
           format_fixed(r.trace["forget_accuracy"].get<double>(), 2) + " (" +
           format_fixed(r.seconds, 2) + " s)");
    }
    write_timing(dir / "timing.json", timings);
  }
}

namespace {

// Reloads the artifact cmd_unlearn left for `tag` and checks it belongs to
// this baseline and forget set.
nn::StageModel load_artifact(const ExperimentConfig& cfg, std::uint64_t seed,
                             const std::string& tag, const nn::StageModel& base) {
  const auto dir = unlearn_dir(cfg, seed);
  const auto trace = read_json(dir / (tag + ".trace.json"), tag + " trace; run unlearn first");
  const auto base_fp = nn::fingerprint(base);
  require(trace.value("start_fingerprint", "") == base_fp, ErrorKind::Staleness,
          tag + " artifacts were produced from a different baseline checkpoint");
  require(trace.value("forget_classes", std::vector<int>{}) == as_vector(cfg.forget.classes),
          ErrorKind::Staleness, tag + " artifacts were produced for a different forget set");
  if (tag == "lm") {
    const auto desc = read_json(dir / "lm.evaluator.json", "lm evaluator descriptor");
    require(desc.value("base_fingerprint", "") == base_fp, ErrorKind::Staleness,
            "lm descriptor refers to a different baseline");
    nn::StageModel m = base;
    m.output_mask = desc.at("masked_classes").get<std::vector<int>>();
    return m;
  }
  const auto path = dir / (tag + ".dampckpt");
  require(fs::exists(path), ErrorKind::Dependency, "missing " + path.string());
  auto m = io::load_checkpoint(path);
  require(nn::fingerprint(m) == trace.value("fingerprint", ""), ErrorKind::Staleness,
          path.string() + " does not match its trace");
  return m;
}

json eval_json(const MethodEval& e) {
  json j;
  j["method"] = e.tag;
  j["R_acc"] = e.retain_acc;
  j["F_acc"] = e.forget_acc;
  if (e.adversarial) {
    const auto& a = *e.adversarial;
    j["adversarial"] = {{"FGSM_R_acc", a[0]}, {"FGSM_F_acc", a[1]},
                        {"PGD_R_acc", a[2]}, {"PGD_F_acc", a[3]}};
  }
  json layers = json::array();
  for (std::size_t s = 0; s < e.layers.size(); ++s) {
    layers.push_back({{"stage", e.layers[s].stage},
                      {"auc_forget", e.layers[s].auc_forget},
                      {"acc_retain", e.layers[s].acc_retain},
                      {"selectivity", e.selectivity[s]}});
  }
  j["layers"] = layers;
  j["selectivity"] = e.selectivity.empty() ? 0.0 : e.selectivity.back();
  if (e.rdm) {
    j["rdm"] = {{"stage", e.rdm->stage}, {"classes", e.rdm->classes}};
    if (e.rdm_diff) j["rdm"]["mean_abs_diff_to_retrain"] = *e.rdm_diff;
  }
  j["bias_shift"] = std::vector<double>(e.bias_shift.data(), e.bias_shift.data() + e.bias_shift.size());
  return j;
}

}  // namespace

void cmd_eval(const ExperimentConfig& cfg) {
  for (auto seed : cfg.seeds) {
    const auto dir = seed_dir(cfg, seed) / "eval";
    ensure_dir(dir);
    const auto base = load_baseline(cfg, seed);
    const auto data = load_datasets(cfg, seed);
    const auto t0 = Clock::now();

    std::optional<metrics::Rdm> reference;
    if (cfg.eval.rdm) {
      const auto ref_path = unlearn_dir(cfg, seed) / "retrain.dampckpt";
      require(fs::exists(ref_path), ErrorKind::Dependency,
              "RDM differences need the retrained reference " + ref_path.string() +
                  "; run unlearn with retrain or set [eval] rdm = off");
      const auto ref = load_artifact(cfg, seed, "retrain", base);
      const int stage = cfg.eval.rdm_stage == 0 ? ref.stage_count() : cfg.eval.rdm_stage;
      reference = metrics::rdm(ref, data.test, as_vector(retain_of(data.test, cfg.forget)), stage,
                               cfg.eval.rdm_samples);
    }

    const auto base_layers = probe_stats(base, data.test, cfg.forget, cfg, cfg.unlearn.probe.seed);
    std::vector<MethodEval> rows;
    rows.push_back(evaluate("baseline", base, base, base_layers, data.test, cfg.forget, cfg,
                            reference ? &*reference : nullptr));
    for (const auto& tag : cfg.methods) {
      const auto model = load_artifact(cfg, seed, tag, base);
      rows.push_back(evaluate(tag, model, base, base_layers, data.test, cfg.forget, cfg,
                              reference ? &*reference : nullptr));
    }

    const std::string s = std::to_string(seed);
    std::string table(kTableHeader);
    if (cfg.eval.adversarial) table += kAdversarialColumns;
    table += "\n";
    std::string sel(kSelectivityHeader);
    sel += "\n";
    std::string bias(kBiasShiftHeader);
    bias += "\n";
    std::string rdm(kRdmHeader);
    rdm += "\n";
    json report;
    report["seed"] = seed;
    report["baseline_fingerprint"] = nn::fingerprint(base);
    report["forget_classes"] = as_vector(cfg.forget.classes);
    report["adversarial"] = cfg.eval.adversarial;
    if (cfg.eval.adversarial) {
      report["attack"] = {{"epsilon", cfg.eval.epsilon}, {"pgd_steps", cfg.eval.pgd_steps},
                          {"pgd_step_size", cfg.eval.epsilon / 4.0}};
    }
    report["notes"] = {
        "selectivity = (AUC_base - AUC_method) - (ACC_base - ACC_method) in percentage points; "
        "the headline value is the deepest stage",
        "forget AUC uses the unlearning probe recipe: standardized GAP features, balanced "
        "L2 logistic regression, stratified 80/20 split",
        "retain accuracy term is a multinomial probe over retain classes only",
        "RDM distance is 1 - Pearson correlation of class-mean GAP features"};
    report["methods"] = json::array();
    for (const auto& e : rows) {
      std::string line = s + "," + e.tag + "," + format_fixed(e.retain_acc, 2) + "," +
                         format_fixed(e.forget_acc, 2);
      if (e.adversarial) {
        for (double v : *e.adversarial) line += "," + format_fixed(v, 2);
      }
      table += line + "\n";
      for (std::size_t k = 0; k < e.layers.size(); ++k) {
        sel += csv_row({s, e.tag, std::to_string(e.layers[k].stage),
                        format_fixed(e.layers[k].auc_forget, 4), format_fixed(e.layers[k].acc_retain, 4),
                        format_fixed(e.selectivity[k], 4)});
      }
      for (Eigen::Index c = 0; c < e.bias_shift.size(); ++c) {
        bias += csv_row({s, e.tag, std::to_string(c), format_fixed(e.bias_shift(c), 6)});
      }
      if (e.rdm_diff) {
        rdm += csv_row({s, e.tag, std::to_string(e.rdm->stage), format_fixed(*e.rdm_diff, 6)});
      }
      report["methods"].push_back(eval_json(e));
    }
    io::write_text(dir / "table.csv", table);
    io::write_text(dir / "selectivity.csv", sel);
    io::write_text(dir / "bias_shift.csv", bias);
    if (cfg.eval.rdm) io::write_text(dir / "rdm.csv", rdm);
    write_json(dir / "report.json", report);
    write_timing(dir / "timing.json", json{{"eval", seconds_since(t0)}});
    note("seed " + s + ": evaluated " + std::to_string(rows.size()) + " rows");
  }
}

void cmd_continual(const ExperimentConfig& cfg) {
  require(!cfg.continual.sequence.empty(), ErrorKind::Config,
          cfg.source.string() + ": [continual] sequence is required");
  for (auto seed : cfg.seeds) {
    const auto dir = seed_dir(cfg, seed) / "continual";
    ensure_dir(dir);
    const auto base = load_baseline(cfg, seed);
    const auto data = load_datasets(cfg, seed);
    const auto& method = cfg.continual.method;
    const auto t0 = Clock::now();
    const auto log = run_continual(method, base, data, cfg.continual.sequence, cfg, seed);

    std::string csv(kContinualHeader);
    csv += "\n";
    json j;
    j["method"] = method;
    j["seed"] = seed;
    j["baseline_fingerprint"] = nn::fingerprint(base);
    j["sequence"] = cfg.continual.sequence;
    j["cus_formula"] = "R * (1 - NF / 100), reconstructed from published tables";
    j["af_definition"] = "mean over forgotten classes of per-class accuracy";
    j["rounds"] = json::array();
    for (std::size_t k = 0; k < log.rounds.size(); ++k) {
      const auto& r = log.rounds[k];
      csv += csv_row({std::to_string(seed), method, std::to_string(k + 1),
                      std::to_string(r.forgotten_class), format_fixed(r.retain, 1),
                      format_fixed(r.newly_forgotten, 1), format_fixed(r.all_forgotten, 1),
                      format_fixed(metrics::round1(r.score), 1)});
      j["rounds"].push_back({{"round", k + 1},
                             {"class", r.forgotten_class},
                             {"R", r.retain},
                             {"NF", r.newly_forgotten},
                             {"AF", r.all_forgotten},
                             {"CUS", r.score}});
    }
    io::write_text(dir / (method + ".csv"), csv);
    write_json(dir / (method + ".json"), j);
    write_timing(dir / (method + ".timing.json"), json{{"continual", seconds_since(t0)}});
    note("seed " + std::to_string(seed) + ": " + std::to_string(log.rounds.size()) +
         " continual rounds with " + method);
  }
}

void cmd_sweep_bias(const ExperimentConfig& cfg) {
  for (auto seed : cfg.seeds) {
    const auto dir = seed_dir(cfg, seed) / "sweep";
    ensure_dir(dir);
    const auto base = load_baseline(cfg, seed);
    const auto data = load_datasets(cfg, seed);
    const auto points = baselines::bias_sweep(base, cfg.sweep.forget_class, cfg.sweep.offsets, data.test);
    std::string csv(kSweepHeader);
    csv += "\n";
    json j;
    j["seed"] = seed;
    j["forget_class"] = cfg.sweep.forget_class;
    j["baseline_fingerprint"] = nn::fingerprint(base);
    j["points"] = json::array();
    for (const auto& p : points) {
      csv += csv_row({std::to_string(seed), format_fixed(p.offset, 4),
                      format_fixed(p.retain_accuracy, 2), format_fixed(p.forget_accuracy, 2)});
      j["points"].push_back(
          {{"offset", p.offset}, {"R_acc", p.retain_accuracy}, {"F_acc", p.forget_accuracy}});
    }
    io::write_text(dir / "bias_sweep.csv", csv);
    write_json(dir / "bias_sweep.json", j);
  }
}

void cmd_report(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  // Row order: (method, seed), methods in config order after the baseline.
  std::vector<std::string> order{"baseline"};
  order.insert(order.end(), cfg.methods.begin(), cfg.methods.end());

  std::map<std::uint64_t, json> evals;
  std::map<std::uint64_t, json> continual;
  for (auto seed : cfg.seeds) {
    const auto e = seed_dir(cfg, seed) / "eval" / "report.json";
    if (fs::exists(e)) evals[seed] = read_json(e, "eval report");
    const auto c = seed_dir(cfg, seed) / "continual" / (cfg.continual.method + ".json");
    if (fs::exists(c)) continual[seed] = read_json(c, "continual log");
  }
  require(!evals.empty() || !continual.empty(), ErrorKind::Dependency,
          "nothing to report under " + cfg.out_dir.string() + "; run eval or continual first");

  const bool adversarial = std::any_of(evals.begin(), evals.end(), [](const auto& kv) {
    return kv.second.value("adversarial", false);
  });
  std::string table(kTableHeader);
  if (adversarial) table += kAdversarialColumns;
  table += "\n";
  std::string sel(kSelectivityHeader);
  sel += "\n";
  json summary;
  summary["seeds"] = cfg.seeds;
  summary["methods"] = json::object();
  for (const auto& tag : order) {
    json per_seed = json::array();
    double r_sum = 0.0, f_sum = 0.0, s_sum = 0.0;
    int n = 0;
    for (const auto& [seed, rep] : evals) {
      for (const auto& m : rep.at("methods")) {
        if (m.at("method") != tag) continue;
        const std::string s = std::to_string(seed);
        std::string line = s + "," + tag + "," + format_fixed(m.at("R_acc").get<double>(), 2) + "," +
                           format_fixed(m.at("F_acc").get<double>(), 2);
        if (adversarial) {
          const auto a = m.value("adversarial", json::object());
          for (const char* k : {"FGSM_R_acc", "FGSM_F_acc", "PGD_R_acc", "PGD_F_acc"}) {
            line += "," + (a.contains(k) ? format_fixed(a.at(k).get<double>(), 2) : std::string());
          }
        }
        table += line + "\n";
        for (const auto& l : m.at("layers")) {
          sel += csv_row({s, tag, std::to_string(l.at("stage").get<int>()),
                          format_fixed(l.at("auc_forget").get<double>(), 4),
                          format_fixed(l.at("acc_retain").get<double>(), 4),
                          format_fixed(l.at("selectivity").get<double>(), 4)});
        }
        r_sum += m.at("R_acc").get<double>();
        f_sum += m.at("F_acc").get<double>();
        s_sum += m.at("selectivity").get<double>();
        ++n;
        per_seed.push_back({{"seed", seed}, {"R_acc", m.at("R_acc")}, {"F_acc", m.at("F_acc")},
                            {"selectivity", m.at("selectivity")}});
      }
    }
    if (n > 0) {
      summary["methods"][tag] = {{"per_seed", per_seed},
                                 {"mean_R_acc", r_sum / n},
                                 {"mean_F_acc", f_sum / n},
                                 {"mean_selectivity", s_sum / n}};
    }
  }
  if (!evals.empty()) {
    io::write_text(cfg.out_dir / "table1.csv", table);
    io::write_text(cfg.out_dir / "selectivity.csv", sel);
  }

  if (!continual.empty()) {
    std::string s2(kContinualHeader);
    s2 += "\n";
    json rounds = json::array();
    for (const auto& [seed, log] : continual) {
      const auto method = log.at("method").get<std::string>();
      for (const auto& r : log.at("rounds")) {
        s2 += csv_row({std::to_string(seed), method, std::to_string(r.at("round").get<int>()),
                       std::to_string(r.at("class").get<int>()),
                       format_fixed(r.at("R").get<double>(), 1), format_fixed(r.at("NF").get<double>(), 1),
                       format_fixed(r.at("AF").get<double>(), 1),
                       format_fixed(metrics::round1(r.at("CUS").get<double>()), 1)});
      }
      rounds.push_back({{"seed", seed}, {"method", method}, {"rounds", log.at("rounds")}});
    }
    io::write_text(cfg.out_dir / "table_s2.csv", s2);
    summary["continual"] = rounds;
    summary["cus_formula"] = "R * (1 - NF / 100), reconstructed from published tables";
  }
  write_json(cfg.out_dir / "report.json", summary);
  note("report written to " + cfg.out_dir.string());
}

void run_command(std::string_view command, const ExperimentConfig& cfg) {
  if (command == "pretrain") return cmd_pretrain(cfg);
  if (command == "unlearn") return cmd_unlearn(cfg);
  if (command == "eval") return cmd_eval(cfg);
  if (command == "continual") return cmd_continual(cfg);
  if (command == "sweep-bias") return cmd_sweep_bias(cfg);
  if (command == "report") return cmd_report(cfg);
  fail(ErrorKind::Config, "unknown command '" + std::string(command) + "'");
}

}  // namespace damp::pipeline
