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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "damp/damp.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / ("damp-capi-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(DAMP_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const char* kConfig = R"([experiment]
out = out
methods = damp, lm

[data]
classes = 4
per_class_train = 30
per_class_test = 15
shape = 8, 1, 1

[model]
arch = mlp5

[pretrain]
epochs = 15
batch_size = 16

[unlearn]
forget = 1

[eval]
rdm = off
)";

}  // namespace

TEST_CASE("status names and exit codes") {
  CHECK(std::string(damp_status_name(DAMP_OK)) == "ok");
  CHECK(std::string(damp_status_name(DAMP_ERR_STALENESS)) == "staleness");
  CHECK(damp_exit_code(DAMP_OK) == 0);
  CHECK(damp_exit_code(DAMP_ERR_CONFIG) == 2);
  CHECK(damp_exit_code(DAMP_ERR_STALENESS) == 2);
  CHECK(damp_exit_code(DAMP_ERR_FORMAT) == 3);
  CHECK(damp_exit_code(DAMP_ERR_CORRUPTION) == 3);
  CHECK(damp_exit_code(DAMP_ERR_DEPENDENCY) == 3);
  CHECK(damp_exit_code(DAMP_ERR_NUMERIC) == 4);
  CHECK(damp_exit_code(DAMP_ERR_INVALID_STATE) == 4);
  CHECK(damp_exit_code(DAMP_ERR_INTERNAL) == 4);
  CHECK(std::string(damp_version()).size() > 0);
}

TEST_CASE("models and datasets through the handle API") {
  const auto dir = scratch();
  damp_dataset* train = nullptr;
  damp_dataset* test = nullptr;
  REQUIRE(damp_dataset_synthetic(4, 30, 8, 1, 1, 40.0, 1.0, 3, 0, &train) == DAMP_OK);
  REQUIRE(damp_dataset_synthetic(4, 15, 8, 1, 1, 40.0, 1.0, 3, 1, &test) == DAMP_OK);
  size_t n = 0;
  CHECK(damp_dataset_size(train, &n) == DAMP_OK);
  CHECK(n == 120);

  damp_model* m = nullptr;
  REQUIRE(damp_model_build("mlp5", 8, 1, 1, 4, 3, &m) == DAMP_OK);
  REQUIRE(damp_model_train(m, train, 15, 0.01, 3) == DAMP_OK);
  int classes = 0;
  CHECK(damp_model_class_count(m, &classes) == DAMP_OK);
  CHECK(classes == 4);
  double acc = 0.0;
  CHECK(damp_accuracy(m, test, nullptr, 0, &acc) == DAMP_OK);
  CHECK(acc == 100.0);

  const int forget[] = {1};
  damp_model* edited = nullptr;
  const std::string trace = (dir / "trace.json").string();
  REQUIRE(damp_unlearn(m, train, forget, 1, 42, trace.c_str(), &edited) == DAMP_OK);
  CHECK(fs::exists(trace));
  CHECK(damp_accuracy(edited, test, forget, 1, &acc) == DAMP_OK);
  CHECK(acc <= 1.0);
  const int retain[] = {0, 2, 3};
  CHECK(damp_accuracy(edited, test, retain, 3, &acc) == DAMP_OK);
  CHECK(acc >= 98.5);

  char fp[64];
  char fp2[64];
  CHECK(damp_model_fingerprint(edited, fp, sizeof fp) == DAMP_OK);
  CHECK(damp_model_fingerprint(edited, fp, 4) == DAMP_ERR_INVALID_ARGUMENT);
  CHECK(std::string(damp_last_error()).find("bytes") != std::string::npos);
  const std::string path = (dir / "edited.dampckpt").string();
  CHECK(damp_model_save(edited, path.c_str()) == DAMP_OK);
  damp_model* back = nullptr;
  CHECK(damp_model_load(path.c_str(), &back) == DAMP_OK);
  CHECK(damp_model_fingerprint(back, fp2, sizeof fp2) == DAMP_OK);
  CHECK(std::string(fp) == std::string(fp2));
  CHECK(std::string(damp_last_error()).empty());

  damp_model* missing = nullptr;
  CHECK(damp_model_load((dir / "nope").string().c_str(), &missing) == DAMP_ERR_IO);
  CHECK(missing == nullptr);
  CHECK(damp_model_build(nullptr, 1, 1, 1, 2, 1, &missing) == DAMP_ERR_INVALID_ARGUMENT);
  CHECK(damp_model_build("resnet", 1, 1, 1, 2, 1, &missing) != DAMP_OK);
  const int bad[] = {9};
  CHECK(damp_unlearn(m, train, bad, 1, 42, nullptr, &missing) != DAMP_OK);

  double score = 0.0;
  CHECK(damp_cus(80.0, 25.0, &score) == DAMP_OK);
  CHECK(score == doctest::Approx(60.0));

  damp_model_free(back);
  damp_model_free(edited);
  damp_model_free(m);
  damp_dataset_free(train);
  damp_dataset_free(test);
  damp_model_free(nullptr);
  fs::remove_all(dir);
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch();
  const auto ini = dir / "exp.ini";
  std::ofstream(ini) << kConfig;
  const std::string c = " --config " + ini.string();

  CHECK(cli("") == 2);
  CHECK(cli("--help") == 0);
  CHECK(cli("eval") == 2);
  CHECK(cli("unlearn" + c) == 3);  // no baseline yet
  CHECK(cli("pretrain" + c) == 0);
  CHECK(cli("unlearn" + c + " --methods damp,bogus") == 2);
  CHECK(cli("unlearn" + c + " --adversarial maybe") == 2);
  CHECK(cli("unlearn" + c) == 0);
  CHECK(cli("eval" + c + " --adversarial on") == 0);
  CHECK(cli("report" + c) == 0);
  CHECK(fs::exists(dir / "out" / "table1.csv"));
  CHECK(cli("pretrain" + c + " --seed 5 --out " + (dir / "alt").string()) == 0);
  CHECK(fs::exists(dir / "alt" / "seed-5" / "baseline.dampckpt"));
  CHECK(cli("pretrain --config " + (dir / "absent.ini").string()) == 2);

  // Corrupted baseline checkpoint is a data error.
  {
    std::fstream f(dir / "out" / "seed-1" / "baseline.dampckpt",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x5a');
  }
  CHECK(cli("unlearn" + c) == 3);
  fs::remove_all(dir);
}
