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

#include "damp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "damp/error.hpp"
#include "damp/surgery.hpp"

namespace damp::metrics {

namespace {

std::vector<int> predictions(const nn::StageModel& model, const data::LabeledDataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < data.size(); b += kChunk) {
    const std::size_t e = std::min(data.size(), b + kChunk);
    const auto t = nn::forward(model, data::make_batch(data, b, e), false);
    const auto p = nn::predict(t.logits);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  require(!labels.empty(), ErrorKind::InvalidArgument, "accuracy of an empty dataset");
  require(predictions.size() == labels.size(), ErrorKind::InvalidArgument,
          "prediction/label count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const nn::StageModel& model, const data::LabeledDataset& data) {
  require(!data.empty(), ErrorKind::InvalidArgument, "accuracy of an empty dataset");
  return accuracy(predictions(model, data), data.labels);
}

std::vector<std::pair<int, double>> class_accuracies(const nn::StageModel& model,
                                                     const data::LabeledDataset& data) {
  require(!data.empty(), ErrorKind::InvalidArgument, "accuracy of an empty dataset");
  const auto pred = predictions(model, data);
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& t = tally[data.labels[i]];
    t.first += pred[i] == data.labels[i] ? 1 : 0;
    ++t.second;
  }
  std::vector<std::pair<int, double>> out;
  for (const auto& [c, t] : tally) {
    out.emplace_back(c, 100.0 * static_cast<double>(t.first) / static_cast<double>(t.second));
  }
  return out;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::InvalidArgument, "score/label count mismatch");
  std::size_t pos = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, ErrorKind::InvalidArgument, "AUC labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, ErrorKind::InvalidArgument, "AUC needs both label values");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

std::vector<LayerStats> layer_stats(const nn::StageModel& model,
                                    const data::LabeledDataset& forget_pool,
                                    const data::LabeledDataset& retain_pool,
                                    const probe::ProbeConfig& cfg) {
  require(forget_pool.size() >= surgery::kMinProbePool &&
              retain_pool.size() >= surgery::kMinProbePool,
          ErrorKind::InsufficientData, "probe pools need at least 5 samples each");
  std::map<int, int> retain_index;
  for (int c : data::present_classes(retain_pool)) {
    const int k = static_cast<int>(retain_index.size());
    retain_index[c] = k;
  }
  require(retain_index.size() >= 2, ErrorKind::InsufficientData,
          "retain probe needs at least two retain classes");
  std::vector<int> retain_labels;
  for (int y : retain_pool.labels) retain_labels.push_back(retain_index.at(y));

  const auto f = surgery::pooled_features(model, forget_pool);
  const auto r = surgery::pooled_features(model, retain_pool);
  std::vector<int> binary(forget_pool.size() + retain_pool.size(), 0);
  std::fill(binary.begin(), binary.begin() + static_cast<std::ptrdiff_t>(forget_pool.size()), 1);

  std::vector<LayerStats> out;
  for (std::size_t s = 0; s < f.size(); ++s) {
    Matrix x(f[s].rows(), f[s].cols() + r[s].cols());
    x << f[s], r[s];
    const auto bp = probe::binary_probe(x, binary, cfg);
    LayerStats st;
    st.stage = static_cast<int>(s) + 1;
    st.auc_forget = 100.0 * roc_auc(bp.scores, bp.test_labels);
    st.acc_retain = 100.0 * probe::multiclass_probe_accuracy(
                                r[s], retain_labels, static_cast<int>(retain_index.size()), cfg);
    out.push_back(st);
  }
  return out;
}

double selectivity(const LayerStats& baseline, const LayerStats& method) {
  require(baseline.stage == method.stage, ErrorKind::InvalidArgument,
          "selectivity compares stats from different stages");
  return (baseline.auc_forget - method.auc_forget) - (baseline.acc_retain - method.acc_retain);
}

Rdm rdm_from_means(const Matrix& means, std::vector<int> classes, int stage) {
  require(means.cols() >= 2, ErrorKind::InvalidArgument, "RDM needs at least two classes");
  require(static_cast<std::size_t>(means.cols()) == classes.size(), ErrorKind::InvalidArgument,
          "RDM class list does not match the means");
  const Eigen::Index k = means.cols();
  Matrix centered = means;
  Vector norms(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    centered.col(j).array() -= means.col(j).mean();
    norms(j) = centered.col(j).norm();
    require(norms(j) > 1e-12, ErrorKind::DegenerateFeature,
            "class " + std::to_string(classes[static_cast<std::size_t>(j)]) +
                " has a constant mean feature vector at stage " + std::to_string(stage));
  }
  Rdm out;
  out.stage = stage;
  out.classes = std::move(classes);
  out.distance = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double corr = centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j));
      out.distance(i, j) = out.distance(j, i) = 1.0 - corr;
    }
  }
  return out;
}

Rdm rdm(const nn::StageModel& model, const data::LabeledDataset& data,
        const std::vector<int>& classes, int stage, std::size_t samples_per_class) {
  require(classes.size() >= 2, ErrorKind::InvalidArgument, "RDM needs at least two classes");
  require(stage >= 1 && stage <= model.stage_count(), ErrorKind::InvalidArgument,
          "stage index out of range");
  const auto width = model.stages[static_cast<std::size_t>(stage - 1)].out_channels;
  Matrix means(width, static_cast<Eigen::Index>(classes.size()));
  for (std::size_t j = 0; j < classes.size(); ++j) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels[i] == classes[j]) idx.push_back(i);
      if (samples_per_class > 0 && idx.size() == samples_per_class) break;
    }
    require(!idx.empty(), ErrorKind::MissingClass,
            "class " + std::to_string(classes[j]) + " has no samples");
    const auto feats = surgery::pooled_features(model, data::subset(data, idx));
    means.col(static_cast<Eigen::Index>(j)) =
        feats[static_cast<std::size_t>(stage - 1)].rowwise().mean();
  }
  return rdm_from_means(means, classes, stage);
}

RdmDiff diff_to(const Rdm& rdm, const Rdm& reference) {
  require(rdm.classes == reference.classes && rdm.stage == reference.stage,
          ErrorKind::InvalidArgument, "RDMs cover different classes or stages");
  RdmDiff out;
  out.difference = rdm.distance - reference.distance;
  out.mean_abs = out.difference.cwiseAbs().mean();
  return out;
}

Vector bias_shift(const nn::StageModel& model, const nn::StageModel& baseline) {
  require(model.head_bias.size() == baseline.head_bias.size(), ErrorKind::InvalidArgument,
          "head dimensions differ");
  return model.head_bias - baseline.head_bias;
}

double cus(double retain, double newly_forgotten) {
  return retain * (1.0 - newly_forgotten / 100.0);
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

std::vector<int> ContinualLog::forgotten() const {
  std::vector<int> out;
  for (const auto& r : rounds) out.push_back(r.forgotten_class);
  return out;
}

void continual_round(ContinualLog& log, const nn::StageModel& model, int cls,
                     const data::LabeledDataset& test) {
  auto done = log.forgotten();
  require(std::find(done.begin(), done.end(), cls) == done.end(), ErrorKind::InvalidArgument,
          "class " + std::to_string(cls) + " was already forgotten");
  done.push_back(cls);
  const std::set<int> forgotten(done.begin(), done.end());
  std::set<int> remaining;
  for (int c : data::present_classes(test)) {
    if (forgotten.count(c) == 0) remaining.insert(c);
  }
  require(!remaining.empty(), ErrorKind::InvalidArgument, "no retain classes left to score");

  const auto per_class = class_accuracies(model, test);
  std::map<int, double> acc(per_class.begin(), per_class.end());
  ContinualRound row;
  row.forgotten_class = cls;
  row.retain = accuracy(model, data::filter_classes(test, remaining));
  require(acc.count(cls) > 0, ErrorKind::MissingClass,
          "class " + std::to_string(cls) + " is absent from the test data");
  row.newly_forgotten = acc.at(cls);
  double sum = 0.0;
  for (int c : done) {
    require(acc.count(c) > 0, ErrorKind::MissingClass,
            "class " + std::to_string(c) + " is absent from the test data");
    sum += acc.at(c);
  }
  row.all_forgotten = sum / static_cast<double>(done.size());
  row.score = cus(row.retain, row.newly_forgotten);
  log.rounds.push_back(row);
}

double adversarial_accuracy(const nn::StageModel& model, const data::LabeledDataset& data,
                            const nn::AttackConfig& attack, std::size_t batch_size) {
  require(!data.empty(), ErrorKind::InvalidArgument, "accuracy of an empty dataset");
  std::vector<int> pred;
  pred.reserve(data.size());
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    const std::span<const int> labels(data.labels.data() + b, e - b);
    const nn::FeatureMap adv = nn::adversarial_batch(model, data::make_batch(data, b, e), labels, attack);
    const auto p = nn::predict(nn::forward(model, adv, false).logits);
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return accuracy(pred, data.labels);
}

}  // namespace damp::metrics
