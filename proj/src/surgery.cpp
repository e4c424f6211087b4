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

#include "damp/surgery.hpp"

#include <algorithm>
#include <chrono>

#include "damp/error.hpp"
#include "damp/train.hpp"

namespace damp::surgery {

const Prototype& PrototypeTable::at(int cls, int stage) const {
  auto it = entries.find({cls, stage});
  require(it != entries.end(), ErrorKind::MissingClass,
          "no prototype for class " + std::to_string(cls) + " at stage " + std::to_string(stage));
  return it->second;
}

PrototypeTable compute_prototypes(const nn::StageModel& model, const data::LabeledDataset& data,
                                  const std::set<int>& classes, const std::vector<int>& stages,
                                  std::size_t max_per_class, std::size_t batch_size) {
  require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be positive");
  for (int s : stages) {
    require(s >= 1 && s <= model.stage_count(), ErrorKind::InvalidArgument,
            "stage index out of range");
  }
  PrototypeTable table;
  table.model_fingerprint = nn::fingerprint(model);

  for (int cls : classes) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels[i] == cls) idx.push_back(i);
      if (max_per_class > 0 && idx.size() == max_per_class) break;
    }
    require(!idx.empty(), ErrorKind::MissingClass,
            "class " + std::to_string(cls) + " has no samples");

    std::map<int, Vector> sums;
    std::map<int, std::size_t> counts;
    for (int s : stages) {
      sums[s] = Vector::Zero(nn::edit_dim(model, s));
      counts[s] = 0;
    }
    for (std::size_t b = 0; b < idx.size(); b += batch_size) {
      const std::size_t e = std::min(idx.size(), b + batch_size);
      const nn::FeatureMap batch =
          data::make_batch(data, std::span<const std::size_t>(idx.data() + b, e - b));
      const nn::ActivationTrace trace = nn::forward(model, batch, true);
      for (int s : stages) {
        const nn::EditSpace z =
            nn::edit_space_from_activation(model, trace.stages[static_cast<std::size_t>(s - 1)], s);
        sums[s] += z.vectors.rowwise().sum();
        counts[s] += z.locations;
      }
    }
    for (int s : stages) {
      table.entries[{cls, s}] = {sums[s] / static_cast<double>(counts[s]), counts[s]};
    }
  }
  return table;
}

std::vector<ResidualRecord> forget_directions(const PrototypeTable& table,
                                              const std::set<int>& retain,
                                              const std::set<int>& forget, int stage,
                                              double tol) {
  require(tol > 0.0, ErrorKind::InvalidArgument, "residual tolerance must be positive");
  std::vector<const Prototype*> retain_protos;
  for (int c : retain) {
    if (table.has(c, stage)) retain_protos.push_back(&table.at(c, stage));
  }
  require(!retain_protos.empty(), ErrorKind::InvalidState,
          "no retain prototypes at stage " + std::to_string(stage));

  const Eigen::Index dim = retain_protos.front()->mean.size();
  Matrix r(dim, static_cast<Eigen::Index>(retain_protos.size()));
  for (std::size_t j = 0; j < retain_protos.size(); ++j) {
    r.col(static_cast<Eigen::Index>(j)) = retain_protos[j]->mean;
  }
  const Matrix r_pinv = linalg::pseudoinverse(r);

  std::vector<ResidualRecord> out;
  for (int f : forget) {
    const Vector& mu = table.at(f, stage).mean;
    require(mu.size() == dim, ErrorKind::InvalidState, "prototype dimension mismatch");
    ResidualRecord rec;
    rec.cls = f;
    rec.residual = mu - r * (r_pinv * mu);
    rec.norm = rec.residual.norm();
    rec.skipped = rec.norm < tol;
    if (!rec.skipped) rec.direction = rec.residual / rec.norm;
    out.push_back(std::move(rec));
  }
  return out;
}

StageBasis build_basis(int stage, int dim, std::vector<ResidualRecord> directions, double tol) {
  StageBasis b;
  b.stage = stage;
  b.dim = dim;
  std::vector<const Vector*> kept;
  for (const auto& d : directions) {
    if (!d.skipped) {
      require(d.direction.size() == dim, ErrorKind::InvalidState, "direction dimension mismatch");
      kept.push_back(&d.direction);
    }
  }
  b.residuals = std::move(directions);
  if (kept.empty()) {
    b.basis = Matrix(dim, 0);
    return b;
  }
  Matrix q(dim, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) q.col(static_cast<Eigen::Index>(j)) = *kept[j];
  auto orth = linalg::orthonormal_basis(q, tol);
  b.basis = orth ? std::move(*orth) : Matrix(dim, 0);
  return b;
}

const StageBasis* ForgetBasis::find(int stage) const {
  for (const auto& s : stages) {
    if (s.stage == stage) return &s;
  }
  return nullptr;
}

LayerCoefficient layer_alpha(double probe_accuracy, int stage, int stage_count, double boost) {
  require(probe_accuracy >= 0.0 && probe_accuracy <= 1.0, ErrorKind::InvalidArgument,
          "probe accuracy must lie in [0, 1]");
  require(stage_count >= 1 && stage >= 1 && stage <= stage_count, ErrorKind::InvalidArgument,
          "stage index out of range");
  LayerCoefficient c;
  c.stage = stage;
  c.probe_accuracy = probe_accuracy;
  c.alpha_probe = std::min(1.0, std::max(0.0, 2.0 * probe_accuracy - 1.0));
  c.alpha_depth = static_cast<double>(stage) / static_cast<double>(stage_count);
  c.alpha = c.alpha_probe * c.alpha_depth;
  c.applied_alpha = c.alpha + boost;
  return c;
}

std::vector<Matrix> pooled_features(const nn::StageModel& model, const data::LabeledDataset& data,
                                    std::size_t batch_size) {
  std::vector<Matrix> out(static_cast<std::size_t>(model.stage_count()));
  for (int s = 0; s < model.stage_count(); ++s) {
    out[static_cast<std::size_t>(s)].resize(model.stages[static_cast<std::size_t>(s)].out_channels,
                                            static_cast<Eigen::Index>(data.size()));
  }
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    const nn::ActivationTrace t = nn::forward(model, data::make_batch(data, b, e), true);
    for (std::size_t s = 0; s < out.size(); ++s) {
      out[s].middleCols(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) =
          t.pooled[s];
    }
  }
  return out;
}

namespace {

double probe_from_features(const Matrix& forget, const Matrix& retain,
                           const probe::ProbeConfig& cfg) {
  require(static_cast<std::size_t>(forget.cols()) >= kMinProbePool &&
              static_cast<std::size_t>(retain.cols()) >= kMinProbePool,
          ErrorKind::InsufficientData, "probe pools need at least 5 samples each");
  Matrix x(forget.rows(), forget.cols() + retain.cols());
  x << forget, retain;
  std::vector<int> y(static_cast<std::size_t>(x.cols()), 0);
  std::fill(y.begin(), y.begin() + forget.cols(), 1);
  return probe::binary_probe(x, y, cfg).accuracy;
}

}  // namespace

double probe_separability(const nn::StageModel& model, int stage,
                          const data::LabeledDataset& forget_pool,
                          const data::LabeledDataset& retain_pool,
                          const probe::ProbeConfig& cfg) {
  require(stage >= 1 && stage <= model.stage_count(), ErrorKind::InvalidArgument,
          "stage index out of range");
  require(forget_pool.size() >= kMinProbePool && retain_pool.size() >= kMinProbePool,
          ErrorKind::InsufficientData, "probe pools need at least 5 samples each");
  const auto f = pooled_features(model, forget_pool);
  const auto r = pooled_features(model, retain_pool);
  return probe_from_features(f[static_cast<std::size_t>(stage - 1)],
                             r[static_cast<std::size_t>(stage - 1)], cfg);
}

void project_out(Matrix& weight, const Matrix& basis, double alpha) {
  require(weight.cols() == basis.rows(), ErrorKind::InvalidState,
          "basis dimension does not match the operator input");
  if (basis.cols() == 0 || alpha == 0.0) return;
  const Matrix wq = weight * basis;
  weight.noalias() -= alpha * (wq * basis.transpose());
}

SurgeryReport apply_surgery(nn::StageModel& model, const ForgetBasis& basis,
                            const std::vector<LayerCoefficient>& coefficients,
                            FingerprintCheck check) {
  if (check == FingerprintCheck::Enforce) {
    require(nn::fingerprint(model) == basis.model_fingerprint, ErrorKind::InvalidState,
            "surgery target is not the model the statistics were computed from");
  }
  const std::uint64_t passes_before = nn::backward_pass_count();
  SurgeryReport report;
  for (int stage = model.stage_count(); stage >= 1; --stage) {
    StageEdit edit;
    edit.stage = stage;
    const StageBasis* sb = basis.find(stage);
    auto coeff = std::find_if(coefficients.begin(), coefficients.end(),
                              [&](const LayerCoefficient& c) { return c.stage == stage; });
    Matrix& w = nn::next_operator_weight(model, stage);
    edit.weight_norm_before = w.norm();
    if (sb == nullptr || coeff == coefficients.end() || sb->rank() == 0) {
      edit.no_op = true;
      edit.weight_norm_after = edit.weight_norm_before;
      report.stages.push_back(edit);
      continue;
    }
    require(sb->basis.rows() == w.cols(), ErrorKind::InvalidState,
            "basis dimension " + std::to_string(sb->basis.rows()) + " does not match operator input " +
                std::to_string(w.cols()) + " at stage " + std::to_string(stage));
    edit.alpha = coeff->applied_alpha;
    edit.rank = sb->rank();
    const Matrix before = w;
    project_out(w, sb->basis, edit.alpha);
    edit.no_op = edit.alpha == 0.0;
    edit.weight_norm_after = w.norm();
    edit.frobenius_delta = (w - before).norm();
    report.stages.push_back(edit);
  }
  report.gradient_passes = nn::backward_pass_count() - passes_before;
  return report;
}

void validate(const UnlearnConfig& cfg) {
  require(cfg.residual_tol > 0.0, ErrorKind::InvalidArgument, "residual tolerance must be positive");
  probe::validate(cfg.probe);
  require(!cfg.forget.classes.empty(), ErrorKind::InvalidArgument, "forget spec is empty");
}

UnlearnResult unlearn(const nn::StageModel& model, const data::LabeledDataset& train,
                      const UnlearnConfig& cfg) {
  using clock = std::chrono::steady_clock;
  validate(cfg);
  data::validate(cfg.forget, model.class_count);
  const auto present = data::present_classes(train);
  for (int f : cfg.forget.classes) {
    require(present.count(f) > 0, ErrorKind::MissingClass,
            "forget class " + std::to_string(f) + " is absent from the training data");
  }
  std::set<int> retain;
  for (int c : present) {
    if (cfg.forget.classes.count(c) == 0) retain.insert(c);
  }
  require(!retain.empty(), ErrorKind::InvalidArgument, "no retain classes in the training data");

  const auto t0 = clock::now();
  const int stage_count = model.stage_count();
  std::vector<int> stages(static_cast<std::size_t>(stage_count));
  for (int s = 0; s < stage_count; ++s) stages[static_cast<std::size_t>(s)] = s + 1;

  DampTrace trace;
  trace.config = cfg;
  trace.model_fingerprint = nn::fingerprint(model);
  trace.forget_classes.assign(cfg.forget.classes.begin(), cfg.forget.classes.end());
  trace.retain_classes.assign(retain.begin(), retain.end());

  std::set<int> all = retain;
  all.insert(cfg.forget.classes.begin(), cfg.forget.classes.end());
  const PrototypeTable table = compute_prototypes(model, train, all, stages, cfg.max_per_class);
  for (int c : all) {
    std::size_t n = 0;
    for (int y : train.labels) n += y == c ? 1 : 0;
    trace.samples_per_class[c] =
        cfg.max_per_class > 0 ? std::min(n, cfg.max_per_class) : n;
  }

  // Probe pools: union of forget classes against all retain classes.
  const auto split = data::split_retain_forget(train, cfg.forget);
  const auto forget_feats = pooled_features(model, split.forget);
  const auto retain_feats = pooled_features(model, split.retain);

  trace.basis.model_fingerprint = table.model_fingerprint;
  for (int s : stages) {
    trace.edit_dims.push_back(nn::edit_dim(model, s));
    const double a = probe_from_features(forget_feats[static_cast<std::size_t>(s - 1)],
                                         retain_feats[static_cast<std::size_t>(s - 1)], cfg.probe);
    trace.coefficients.push_back(layer_alpha(a, s, stage_count, cfg.alpha_boost));
    auto dirs = forget_directions(table, retain, cfg.forget.classes, s, cfg.residual_tol);
    trace.basis.stages.push_back(build_basis(s, nn::edit_dim(model, s), std::move(dirs)));
  }
  const auto t1 = clock::now();

  UnlearnResult out{model, {}};
  trace.surgery = apply_surgery(out.model, trace.basis, trace.coefficients);
  const auto t2 = clock::now();
  trace.statistics_seconds = std::chrono::duration<double>(t1 - t0).count();
  trace.surgery_seconds = std::chrono::duration<double>(t2 - t1).count();
  trace.edited_fingerprint = nn::fingerprint(out.model);
  out.trace = std::move(trace);
  return out;
}

nlohmann::json to_json(const DampTrace& t) {
  using nlohmann::json;
  json j;
  j["method"] = "damp";
  j["model_fingerprint"] = t.model_fingerprint;
  j["edited_fingerprint"] = t.edited_fingerprint;
  j["forget_classes"] = t.forget_classes;
  j["retain_classes"] = t.retain_classes;
  j["config"] = {{"residual_tol", t.config.residual_tol},
                 {"probe_train_fraction", t.config.probe.train_fraction},
                 {"probe_inverse_l2", t.config.probe.inverse_l2},
                 {"probe_max_iter", t.config.probe.max_iter},
                 {"probe_seed", t.config.probe.seed},
                 {"alpha_boost", t.config.alpha_boost},
                 {"max_per_class", t.config.max_per_class}};
  json counts = json::object();
  for (const auto& [c, n] : t.samples_per_class) counts[std::to_string(c)] = n;
  j["prototype_samples_per_class"] = counts;

  json stages = json::array();
  for (std::size_t i = 0; i < t.coefficients.size(); ++i) {
    const auto& c = t.coefficients[i];
    json s;
    s["stage"] = c.stage;
    s["edit_dim"] = t.edit_dims[i];
    s["probe_accuracy"] = c.probe_accuracy;
    s["alpha_probe"] = c.alpha_probe;
    s["alpha_depth"] = c.alpha_depth;
    s["alpha"] = c.alpha;
    s["applied_alpha"] = c.applied_alpha;
    if (const StageBasis* b = t.basis.find(c.stage)) {
      s["rank"] = b->rank();
      json res = json::array();
      for (const auto& r : b->residuals) {
        res.push_back({{"class", r.cls}, {"norm", r.norm}, {"skipped", r.skipped}});
      }
      s["residuals"] = res;
    }
    for (const auto& e : t.surgery.stages) {
      if (e.stage != c.stage) continue;
      s["no_op"] = e.no_op;
      s["weight_norm_before"] = e.weight_norm_before;
      s["weight_norm_after"] = e.weight_norm_after;
      s["frobenius_delta"] = e.frobenius_delta;
    }
    stages.push_back(s);
  }
  j["stages"] = stages;
  json order = json::array();
  for (const auto& e : t.surgery.stages) order.push_back(e.stage);
  j["application_order"] = order;
  j["gradient_passes"] = t.surgery.gradient_passes;
  return j;
}

}  // namespace damp::surgery
