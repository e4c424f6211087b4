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

#include "damp/probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <random>

#include "damp/error.hpp"

namespace damp::probe {

void validate(const ProbeConfig& cfg) {
  require(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0, ErrorKind::InvalidArgument,
          "probe train fraction must lie in (0, 1)");
  require(cfg.inverse_l2 > 0.0, ErrorKind::InvalidArgument, "probe C must be positive");
  require(cfg.max_iter >= 1, ErrorKind::InvalidArgument, "probe max_iter must be positive");
}

LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, int max_iter, double gradient_tol,
                           int memory) {
  LbfgsResult res;
  res.x = std::move(x0);
  Vector g(res.x.size());
  res.value = f(res.x, g);

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;

  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    if (g.lpNorm<Eigen::Infinity>() <= gradient_tol) {
      res.converged = true;
      break;
    }

    Vector q = g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      const auto k = static_cast<std::size_t>(i);
      a[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= a[k] * y_hist[k];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      gamma = 1.0 / std::max(1.0, g.norm());
    }
    Vector r = gamma * q;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double b = rho_hist[k] * y_hist[k].dot(r);
      r += s_hist[k] * (a[k] - b);
    }
    Vector d = -r;
    double slope = g.dot(d);
    if (slope >= 0.0) {
      d = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double t = 1.0;
    Vector x_new;
    Vector g_new(g.size());
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + t * d;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    Vector s = x_new - res.x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = res.value - f_new;
    res.x = std::move(x_new);
    g = g_new;
    res.value = f_new;
    if (decrease <= 1e-15 * std::max(1.0, std::abs(f_new))) {
      res.converged = g.lpNorm<Eigen::Infinity>() <= std::sqrt(gradient_tol);
      break;
    }
  }
  return res;
}

Standardizer Standardizer::fit(const Matrix& features) {
  require(features.cols() >= 1, ErrorKind::InvalidArgument, "cannot standardize zero samples");
  Standardizer s;
  const double n = static_cast<double>(features.cols());
  s.mean = features.rowwise().sum() / n;
  s.scale = ((features.colwise() - s.mean).array().square().rowwise().sum() / n).sqrt();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
    if (!(s.scale(i) > 1e-12)) s.scale(i) = 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& features) const {
  return ((features.colwise() - mean).array().colwise() / scale.array()).matrix();
}

SplitIndices stratified_split(std::span<const int> labels, double train_fraction,
                              std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& [label, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = idx.size();
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    else n_train = n;
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<double> balanced_weights(std::span<const int> labels, int label_count) {
  std::vector<double> counts(static_cast<std::size_t>(label_count), 0.0);
  for (int y : labels) counts[static_cast<std::size_t>(y)] += 1.0;
  int present = 0;
  for (double c : counts) present += c > 0.0 ? 1 : 0;
  std::vector<double> w;
  w.reserve(labels.size());
  const double n = static_cast<double>(labels.size());
  for (int y : labels) w.push_back(n / (present * counts[static_cast<std::size_t>(y)]));
  return w;
}

namespace {

Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

}  // namespace

BinaryProbeResult binary_probe(const Matrix& features, std::span<const int> labels,
                               const ProbeConfig& cfg) {
  validate(cfg);
  require(features.cols() == static_cast<Eigen::Index>(labels.size()), ErrorKind::InvalidArgument,
          "probe feature/label count mismatch");
  const SplitIndices split = stratified_split(labels, cfg.train_fraction, cfg.seed);
  require(!split.train.empty() && !split.test.empty(), ErrorKind::InsufficientData,
          "probe split left an empty side");

  const Matrix train_raw = select_columns(features, split.train);
  const Standardizer st = Standardizer::fit(train_raw);
  const Matrix x = st.apply(train_raw);
  std::vector<int> y_train;
  for (std::size_t i : split.train) y_train.push_back(labels[i]);
  const std::vector<double> sw = balanced_weights(y_train, 2);

  const Eigen::Index d = x.rows();
  const double c = cfg.inverse_l2;
  Vector ysign(static_cast<Eigen::Index>(y_train.size()));
  Vector weight(ysign.size());
  for (std::size_t i = 0; i < y_train.size(); ++i) {
    ysign(static_cast<Eigen::Index>(i)) = y_train[i] == 1 ? 1.0 : -1.0;
    weight(static_cast<Eigen::Index>(i)) = sw[i];
  }

  Objective objective = [&](const Vector& theta, Vector& grad) {
    const auto w = theta.head(d);
    const double b = theta(d);
    const Vector z = (x.transpose() * w).array() + b;
    double f = 0.5 * w.squaredNorm();
    Vector dz(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double m = -ysign(i) * z(i);
      f += c * weight(i) * softplus(m);
      const double sig = 1.0 / (1.0 + std::exp(-m));
      dz(i) = -c * weight(i) * ysign(i) * sig;
    }
    grad.resize(d + 1);
    grad.head(d) = w + x * dz;
    grad(d) = dz.sum();
    return f;
  };

  const LbfgsResult fit =
      minimize_lbfgs(objective, Vector::Zero(d + 1), cfg.max_iter, cfg.gradient_tol);
  const Vector w = fit.x.head(d);
  const double b = fit.x(d);

  BinaryProbeResult out;
  out.converged = fit.converged;
  const Matrix xt = st.apply(select_columns(features, split.test));
  const Vector scores = (xt.transpose() * w).array() + b;
  std::size_t correct = 0;
  for (std::size_t j = 0; j < split.test.size(); ++j) {
    const double s = scores(static_cast<Eigen::Index>(j));
    const int y = labels[split.test[j]];
    out.scores.push_back(s);
    out.test_labels.push_back(y);
    if ((s > 0.0 ? 1 : 0) == y) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(split.test.size());
  return out;
}

double multiclass_probe_accuracy(const Matrix& features, std::span<const int> labels,
                                 int label_count, const ProbeConfig& cfg) {
  validate(cfg);
  require(label_count >= 2, ErrorKind::InvalidArgument, "multiclass probe needs two labels");
  require(features.cols() == static_cast<Eigen::Index>(labels.size()), ErrorKind::InvalidArgument,
          "probe feature/label count mismatch");
  const SplitIndices split = stratified_split(labels, cfg.train_fraction, cfg.seed);
  require(!split.train.empty() && !split.test.empty(), ErrorKind::InsufficientData,
          "probe split left an empty side");

  const Matrix train_raw = select_columns(features, split.train);
  const Standardizer st = Standardizer::fit(train_raw);
  const Matrix x = st.apply(train_raw);
  std::vector<int> y_train;
  for (std::size_t i : split.train) y_train.push_back(labels[i]);
  const std::vector<double> sw = balanced_weights(y_train, label_count);

  const Eigen::Index d = x.rows();
  const Eigen::Index k = label_count;
  const Eigen::Index n = x.cols();
  const double c = cfg.inverse_l2;

  Objective objective = [&](const Vector& theta, Vector& grad) {
    const Eigen::Map<const Matrix> w(theta.data(), k, d);
    const auto b = theta.tail(k);
    Matrix z = w * x;
    z.colwise() += b;
    double f = 0.5 * w.squaredNorm();
    Matrix g(k, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = z.col(i).maxCoeff();
      const Vector e = (z.col(i).array() - mx).exp();
      const double sum = e.sum();
      const int y = y_train[static_cast<std::size_t>(i)];
      const double si = sw[static_cast<std::size_t>(i)];
      f += c * si * (mx + std::log(sum) - z(y, i));
      g.col(i) = c * si * e / sum;
      g(y, i) -= c * si;
    }
    grad.resize(k * d + k);
    Eigen::Map<Matrix> gw(grad.data(), k, d);
    gw = w + g * x.transpose();
    grad.tail(k) = g.rowwise().sum();
    return f;
  };

  const LbfgsResult fit =
      minimize_lbfgs(objective, Vector::Zero(k * d + k), cfg.max_iter, cfg.gradient_tol);
  const Eigen::Map<const Matrix> w(fit.x.data(), k, d);
  const Vector b = fit.x.tail(k);

  const Matrix xt = st.apply(select_columns(features, split.test));
  Matrix z = w * xt;
  z.colwise() += b;
  std::size_t correct = 0;
  for (std::size_t j = 0; j < split.test.size(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < k; ++r) {
      if (z(r, static_cast<Eigen::Index>(j)) > z(best, static_cast<Eigen::Index>(j))) best = r;
    }
    if (best == labels[split.test[j]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.test.size());
}

}  // namespace damp::probe
