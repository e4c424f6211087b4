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

// damp command-line front end. Every subcommand goes through the C API.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "damp/damp.h"

namespace {

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string methods;
  std::string adversarial;
};

void add_common(CLI::App* sub, Args& a) {
  sub->add_option("--config", a.config, "Experiment config file")->required();
  sub->add_option("--out", a.out, "Output directory (overrides [experiment] out)");
  sub->add_option("--seed", a.seed, "Run a single seed instead of [experiment] seeds");
  sub->add_option("--methods", a.methods, "Comma-separated method tags");
  sub->add_option("--adversarial", a.adversarial, "FGSM/PGD columns in eval")
      ->check(CLI::IsMember({"on", "off"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class unlearning by one-shot weight projection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(damp_version()));

  Args args;
  const char* commands[][2] = {
      {"pretrain", "Train the baseline model and write its checkpoint"},
      {"unlearn", "Apply every configured method to the baseline"},
      {"eval", "Accuracy, selectivity, RDM and bias-shift metrics per method"},
      {"continual", "Forget classes one round at a time"},
      {"sweep-bias", "Shift the forget-class bias and record accuracies"},
      {"report", "Merge per-seed outputs into summary tables"},
  };
  for (const auto& c : commands) add_common(app.add_subcommand(c[0], c[1]), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  damp_options opt;
  damp_options_init(&opt);
  if (!args.out.empty()) opt.out_dir = args.out.c_str();
  if (args.seed) {
    opt.has_seed = 1;
    opt.seed = *args.seed;
  }
  if (!args.methods.empty()) opt.methods = args.methods.c_str();
  if (!args.adversarial.empty()) opt.adversarial = args.adversarial == "on" ? 1 : 0;

  const damp_status st = damp_run(command.c_str(), args.config.c_str(), &opt);
  if (st != DAMP_OK) {
    std::cerr << "damp " << command << ": " << damp_status_name(st) << " error: "
              << damp_last_error() << "\n";
  }
  return damp_exit_code(st);
}
