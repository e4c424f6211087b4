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

#include "damp/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "damp/error.hpp"

namespace damp::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& s) {
  const auto pos = s.find_first_of("#;");
  return pos == std::string::npos ? s : s.substr(0, pos);
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

IniFile IniFile::parse(const std::string& text, const std::string& origin) {
  IniFile ini;
  ini.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    const std::string at = origin + ":" + std::to_string(line);
    if (s.front() == '[') {
      require(s.back() == ']' && s.size() > 2, ErrorKind::Config, at + ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      require(ini.section_lines_.count(section) == 0, ErrorKind::Config,
              at + ": duplicate section [" + section + "]");
      ini.section_lines_[section] = line;
      ini.values_[section];
      continue;
    }
    const auto eq = s.find('=');
    require(eq != std::string::npos, ErrorKind::Config, at + ": expected key = value");
    require(!section.empty(), ErrorKind::Config, at + ": key outside of any section");
    const std::string key = trim(s.substr(0, eq));
    require(!key.empty(), ErrorKind::Config, at + ": empty key");
    auto& sec = ini.values_[section];
    require(sec.count(key) == 0, ErrorKind::Config,
            at + ": duplicate key '" + key + "' in [" + section + "]");
    sec[key] = {trim(s.substr(eq + 1)), line};
  }
  return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

bool IniFile::has_section(const std::string& section) const {
  return values_.count(section) > 0;
}

std::optional<std::string> IniFile::get(const std::string& section, const std::string& key) const {
  auto it = values_.find(section);
  if (it == values_.end()) return std::nullopt;
  auto k = it->second.find(key);
  if (k == it->second.end()) return std::nullopt;
  return k->second.value;
}

std::string IniFile::where(const std::string& section, const std::string& key) const {
  auto it = values_.find(section);
  if (it != values_.end()) {
    auto k = it->second.find(key);
    if (k != it->second.end()) return origin_ + ":" + std::to_string(k->second.line);
  }
  return origin_;
}

std::vector<std::string> IniFile::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

std::vector<std::string> IniFile::keys(const std::string& section) const {
  std::vector<std::string> out;
  auto it = values_.find(section);
  if (it == values_.end()) return out;
  for (const auto& [k, _] : it->second) out.push_back(k);
  return out;
}

namespace {

// Typed accessors that report file:line on failure.
class Reader {
 public:
  explicit Reader(const IniFile& ini) : ini_(ini) {}

  [[noreturn]] void bad(const std::string& sec, const std::string& key, const std::string& msg) const {
    fail(ErrorKind::Config, ini_.where(sec, key) + ": [" + sec + "] " + key + ": " + msg);
  }

  std::optional<std::string> str(const std::string& sec, const std::string& key) {
    seen_[sec].insert(key);
    return ini_.get(sec, key);
  }

  template <class T>
  void num(const std::string& sec, const std::string& key, T& out) {
    auto v = str(sec, key);
    if (!v) return;
    out = parse_num<T>(sec, key, *v);
  }

  template <class T>
  T parse_num(const std::string& sec, const std::string& key, const std::string& text) const {
    T value{};
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, value);
    if (ec != std::errc() || p != e) bad(sec, key, "'" + text + "' is not a valid number");
    return value;
  }

  template <class T>
  std::vector<T> num_list(const std::string& sec, const std::string& key, const std::string& text) const {
    std::vector<T> out;
    for (const auto& item : split_list(text)) out.push_back(parse_num<T>(sec, key, item));
    return out;
  }

  void boolean(const std::string& sec, const std::string& key, bool& out) {
    auto v = str(sec, key);
    if (!v) return;
    if (*v == "on" || *v == "true" || *v == "yes" || *v == "1") out = true;
    else if (*v == "off" || *v == "false" || *v == "no" || *v == "0") out = false;
    else bad(sec, key, "expected on/off");
  }

  // Rejects keys nobody asked for, so typos do not pass silently.
  void check_unknown() const {
    for (const auto& sec : ini_.sections()) {
      auto it = seen_.find(sec);
      for (const auto& key : ini_.keys(sec)) {
        if (it == seen_.end() || it->second.count(key) == 0) bad(sec, key, "unknown key");
      }
    }
  }

 private:
  const IniFile& ini_;
  std::map<std::string, std::set<std::string>> seen_;
};

const std::vector<std::string> kMethods = {"damp", "retrain", "lm", "gau", "kdu", "ddft", "randrelabel"};

}  // namespace

bool is_known_method(const std::string& tag) {
  return std::find(kMethods.begin(), kMethods.end(), tag) != kMethods.end();
}

ExperimentConfig from_ini(const IniFile& ini) {
  Reader r(ini);
  ExperimentConfig c;
  c.source = ini.origin();
  const auto base_dir = std::filesystem::path(ini.origin()).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  for (const auto& sec : ini.sections()) {
    const bool known = sec == "experiment" || sec == "data" || sec == "model" || sec == "pretrain" ||
                       sec == "unlearn" || sec == "eval" || sec == "continual" || sec == "sweep" ||
                       (sec.rfind("baseline.", 0) == 0 && is_known_method(sec.substr(9)) &&
                        sec != "baseline.damp");
    if (!known) fail(ErrorKind::Config, ini.origin() + ": unknown section [" + sec + "]");
  }

  // [experiment]
  if (auto v = r.str("experiment", "out")) c.out_dir = resolve(*v);
  if (auto v = r.str("experiment", "seeds")) {
    c.seeds = r.num_list<std::uint64_t>("experiment", "seeds", *v);
    if (c.seeds.empty()) r.bad("experiment", "seeds", "at least one seed is required");
  }
  if (auto v = r.str("experiment", "methods")) {
    c.methods = split_list(*v);
    if (c.methods.empty()) r.bad("experiment", "methods", "at least one method is required");
    std::set<std::string> seen;
    for (const auto& m : c.methods) {
      if (!is_known_method(m)) r.bad("experiment", "methods", "unknown method '" + m + "'");
      if (!seen.insert(m).second) r.bad("experiment", "methods", "duplicate method '" + m + "'");
    }
  }

  // [data]
  auto& d = c.data;
  if (auto v = r.str("data", "source")) {
    if (*v == "synthetic") d.source = DataSource::Synthetic;
    else if (*v == "idx") d.source = DataSource::Idx;
    else r.bad("data", "source", "expected synthetic or idx");
  }
  r.num("data", "classes", d.blobs.class_count);
  r.num("data", "per_class_train", d.blobs.per_class);
  r.num("data", "per_class_test", d.per_class_test);
  r.num("data", "separation", d.blobs.separation);
  r.num("data", "noise", d.blobs.noise);
  if (r.str("data", "data_seed")) {
    std::uint64_t v = 0;
    r.num("data", "data_seed", v);
    d.data_seed = v;
  }
  if (auto v = r.str("data", "shape")) {
    const auto dims = r.num_list<int>("data", "shape", *v);
    if (dims.size() != 3 || dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
      r.bad("data", "shape", "expected three positive integers c,h,w");
    }
    d.blobs.shape = {dims[0], dims[1], dims[2]};
  }
  if (auto v = r.str("data", "manifest")) d.manifest = resolve(*v);
  if (d.source == DataSource::Idx && d.manifest.empty()) {
    r.bad("data", "manifest", "required when source = idx");
  }
  if (d.blobs.class_count < 2) r.bad("data", "classes", "must be at least 2");
  if (d.blobs.per_class < 1) r.bad("data", "per_class_train", "must be positive");
  if (d.per_class_test < 1) r.bad("data", "per_class_test", "must be positive");
  if (!(d.blobs.separation > 0.0)) r.bad("data", "separation", "must be positive");
  if (d.blobs.noise < 0.0) r.bad("data", "noise", "must be non-negative");

  // [model]
  if (auto v = r.str("model", "arch")) {
    c.arch = *v;
    try {
      nn::arch_from_name(c.arch);
    } catch (const Error&) {
      r.bad("model", "arch", "unknown architecture '" + *v + "'");
    }
  }
  if (auto v = r.str("model", "checkpoint")) c.checkpoint = resolve(*v);
  if (auto v = r.str("model", "expected_fingerprint")) c.expected_fingerprint = *v;

  // [pretrain]
  auto& p = c.pretrain;
  if (auto v = r.str("pretrain", "optimizer")) {
    if (*v == "sgd") p.optimizer = nn::OptimizerKind::SgdMomentum;
    else if (*v == "adam") p.optimizer = nn::OptimizerKind::Adam;
    else r.bad("pretrain", "optimizer", "expected sgd or adam");
  }
  r.num("pretrain", "lr", p.learning_rate);
  r.num("pretrain", "momentum", p.momentum);
  r.num("pretrain", "weight_decay", p.weight_decay);
  r.num("pretrain", "epochs", p.epochs);
  r.num("pretrain", "batch_size", p.batch_size);
  r.boolean("pretrain", "cosine", p.cosine_schedule);
  if (!(p.learning_rate > 0.0)) r.bad("pretrain", "lr", "must be positive");
  if (p.epochs < 1) r.bad("pretrain", "epochs", "must be at least 1");
  if (p.batch_size < 1) r.bad("pretrain", "batch_size", "must be positive");
  if (p.weight_decay < 0.0) r.bad("pretrain", "weight_decay", "must be non-negative");

  // [unlearn]
  if (auto v = r.str("unlearn", "forget")) {
    for (int f : r.num_list<int>("unlearn", "forget", *v)) {
      if (f < 0 || f >= d.blobs.class_count) r.bad("unlearn", "forget", "class out of range");
      if (!c.forget.classes.insert(f).second) r.bad("unlearn", "forget", "duplicate class");
    }
  }
  if (c.forget.classes.empty()) r.bad("unlearn", "forget", "at least one forget class is required");
  if (c.forget.classes.size() >= static_cast<std::size_t>(d.blobs.class_count)) {
    r.bad("unlearn", "forget", "forget set covers every class");
  }
  auto& u = c.unlearn;
  u.forget = c.forget;
  r.num("unlearn", "residual_tol", u.residual_tol);
  r.num("unlearn", "probe_fraction", u.probe.train_fraction);
  r.num("unlearn", "probe_c", u.probe.inverse_l2);
  r.num("unlearn", "probe_max_iter", u.probe.max_iter);
  r.num("unlearn", "alpha_boost", u.alpha_boost);
  r.num("unlearn", "max_per_class", u.max_per_class);
  if (!(u.residual_tol > 0.0)) r.bad("unlearn", "residual_tol", "must be positive");
  if (!(u.probe.train_fraction > 0.0 && u.probe.train_fraction < 1.0)) {
    r.bad("unlearn", "probe_fraction", "must lie in (0, 1)");
  }
  if (!(u.probe.inverse_l2 > 0.0)) r.bad("unlearn", "probe_c", "must be positive");
  if (u.probe.max_iter < 1) r.bad("unlearn", "probe_max_iter", "must be positive");

  // [baseline.<tag>]
  for (const auto& tag : kMethods) {
    if (tag == "damp") continue;
    const auto m = baselines::method_from_tag(tag);
    auto b = baselines::default_config(m);
    const std::string sec = "baseline." + tag;
    r.num(sec, "epochs", b.epochs);
    r.num(sec, "lr", b.learning_rate);
    r.num(sec, "lambda", tag == "kdu" ? b.lambda_kdu : b.lambda_gau);
    r.num(sec, "temperature", b.temperature);
    r.num(sec, "batch_size", b.batch_size);
    try {
      baselines::validate(b);
    } catch (const Error& e) {
      fail(ErrorKind::Config, ini.origin() + ": [" + sec + "] " + e.what());
    }
    c.baselines[tag] = b;
  }

  // [eval]
  auto& e = c.eval;
  r.boolean("eval", "adversarial", e.adversarial);
  r.num("eval", "epsilon", e.epsilon);
  r.num("eval", "pgd_steps", e.pgd_steps);
  r.boolean("eval", "rdm", e.rdm);
  r.num("eval", "rdm_samples", e.rdm_samples);
  r.num("eval", "rdm_stage", e.rdm_stage);
  if (e.epsilon < 0.0) r.bad("eval", "epsilon", "must be non-negative");
  if (e.pgd_steps < 1) r.bad("eval", "pgd_steps", "must be positive");
  if (e.rdm_stage < 0 || e.rdm_stage > nn::kStageCount) r.bad("eval", "rdm_stage", "out of range");

  // [continual]
  if (auto v = r.str("continual", "sequence")) {
    std::set<int> seen;
    for (int f : r.num_list<int>("continual", "sequence", *v)) {
      if (f < 0 || f >= d.blobs.class_count) r.bad("continual", "sequence", "class out of range");
      if (!seen.insert(f).second) {
        r.bad("continual", "sequence", "class " + std::to_string(f) + " appears twice");
      }
      c.continual.sequence.push_back(f);
    }
    if (seen.size() >= static_cast<std::size_t>(d.blobs.class_count)) {
      r.bad("continual", "sequence", "sequence must leave at least one retain class");
    }
  }
  if (auto v = r.str("continual", "method")) {
    if (!is_known_method(*v)) r.bad("continual", "method", "unknown method '" + *v + "'");
    c.continual.method = *v;
  }

  // [sweep]
  r.num("sweep", "forget", c.sweep.forget_class);
  if (auto v = r.str("sweep", "offsets")) c.sweep.offsets = r.num_list<double>("sweep", "offsets", *v);
  if (c.sweep.offsets.empty()) c.sweep.offsets = {0.0, -1.0, -2.0, -4.0, -8.0, -16.0, -32.0};
  if (c.sweep.forget_class == -1) c.sweep.forget_class = *c.forget.classes.begin();
  if (c.sweep.forget_class < 0 || c.sweep.forget_class >= d.blobs.class_count) {
    r.bad("sweep", "forget", "class out of range");
  }

  r.check_unknown();
  if (c.out_dir.empty()) c.out_dir = base_dir / "runs";
  return c;
}

ExperimentConfig load(const std::filesystem::path& path) {
  return from_ini(IniFile::load(path));
}

void apply(ExperimentConfig& cfg, const Overrides& o) {
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.methods) {
    require(!o.methods->empty(), ErrorKind::Config, "--methods: at least one method is required");
    std::set<std::string> seen;
    for (const auto& m : *o.methods) {
      require(is_known_method(m), ErrorKind::Config, "--methods: unknown method '" + m + "'");
      require(seen.insert(m).second, ErrorKind::Config, "--methods: duplicate method '" + m + "'");
    }
    cfg.methods = *o.methods;
  }
  if (o.adversarial) cfg.eval.adversarial = *o.adversarial;
}

}  // namespace damp::config
