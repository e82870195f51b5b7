#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "strokeseg/strokeseg.h"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "strokeseg_test_c_api";

std::string serialize(const sseg_config* cfg) {
  char* text = nullptr;
  REQUIRE(sseg_config_serialize(cfg, &text) == SSEG_OK);
  std::string s = text;
  sseg_string_free(text);
  return s;
}

void count_lines(const char*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(sseg_status_name(SSEG_OK)) == "ok");
  CHECK(std::string(sseg_status_name(SSEG_ERR_CONFIG)) == "configuration error");
  CHECK(std::string(sseg_status_name(SSEG_ERR_INCOMPATIBLE)) == "incompatible");
  CHECK(std::string(sseg_status_name(static_cast<sseg_status>(99))) == "unknown");
  CHECK(std::strlen(sseg_version()) > 0);
}

TEST_CASE("config handles") {
  sseg_config* cfg = nullptr;
  REQUIRE(sseg_config_default(&cfg) == SSEG_OK);
  const std::string defaults = serialize(cfg);
  CHECK(defaults.find("epochs=200\n") != std::string::npos);
  CHECK(defaults.find("lr=0.001\n") != std::string::npos);

  CHECK(sseg_config_set(cfg, "epochs", "7") == SSEG_OK);
  CHECK(serialize(cfg).find("epochs=7\n") != std::string::npos);
  CHECK(sseg_config_set(cfg, "epochs", "0") == SSEG_ERR_CONFIG);
  CHECK(std::string(sseg_last_error()).find("epochs") != std::string::npos);
  CHECK(serialize(cfg).find("epochs=7\n") != std::string::npos);
  CHECK(sseg_config_set(cfg, "nope", "1") == SSEG_ERR_CONFIG);
  CHECK(sseg_config_set(cfg, "name", "a\nepochs=1") == SSEG_ERR_CONFIG);

  sseg_config* copy = nullptr;
  const std::string text = serialize(cfg);
  REQUIRE(sseg_config_parse(text.c_str(), &copy) == SSEG_OK);
  CHECK(serialize(copy) == text);
  sseg_config_free(copy);
  sseg_config_free(cfg);
  sseg_config_free(nullptr);

  sseg_config* bad = nullptr;
  CHECK(sseg_config_parse("bogus=1\n", &bad) == SSEG_ERR_CONFIG);
  CHECK(bad == nullptr);
  CHECK(sseg_config_load((kRoot / "missing.txt").c_str(), &bad) == SSEG_ERR_CONFIG);
}

TEST_CASE("null arguments are rejected") {
  CHECK(sseg_config_default(nullptr) == SSEG_ERR_INVALID_ARGUMENT);
  CHECK(std::string(sseg_last_error()).find("NULL") != std::string::npos);
  CHECK(sseg_config_parse(nullptr, nullptr) == SSEG_ERR_INVALID_ARGUMENT);
  CHECK(sseg_config_set(nullptr, "epochs", "1") == SSEG_ERR_INVALID_ARGUMENT);
  char* text = nullptr;
  CHECK(sseg_config_serialize(nullptr, &text) == SSEG_ERR_INVALID_ARGUMENT);
  CHECK(sseg_phantom_generate(nullptr, "x") == SSEG_ERR_INVALID_ARGUMENT);
  CHECK(sseg_train(nullptr, "m", 0, "o", nullptr, nullptr) == SSEG_ERR_INVALID_ARGUMENT);
  CHECK(sseg_checkpoint_open(nullptr, nullptr) == SSEG_ERR_INVALID_ARGUMENT);
  CHECK(sseg_report_merge(nullptr, 1, "a.md", nullptr) == SSEG_ERR_INVALID_ARGUMENT);
  sseg_checkpoint_free(nullptr);
  sseg_string_free(nullptr);
}

TEST_CASE("phantom, train, checkpoint and report through the C interface") {
  fs::remove_all(kRoot);
  sseg_phantom_spec spec;
  sseg_phantom_spec_default(&spec);
  CHECK(spec.subjects == 30);
  CHECK(spec.slices == 8);
  CHECK(spec.size == 96);
  spec.subjects = 12;
  spec.slices = 2;
  spec.size = 32;
  spec.seed = 3;
  REQUIRE(sseg_phantom_generate(&spec, (kRoot / "ph").c_str()) == SSEG_OK);
  const std::string manifest = (kRoot / "ph" / "manifest.txt").string();
  spec.subjects = 0;
  CHECK(sseg_phantom_generate(&spec, (kRoot / "ph0").c_str()) != SSEG_OK);

  sseg_config* cfg = nullptr;
  REQUIRE(sseg_config_parse("name=capi\nepochs=2\nwidth_multiplier=1/16\ndisc_base_channels=8\nbatch_size=4\n"
                            "proportional_folds=true\n",
                            &cfg) == SSEG_OK);
  int lines = 0;
  REQUIRE(sseg_train(cfg, manifest.c_str(), 1, (kRoot / "run").c_str(), count_lines, &lines) == SSEG_OK);
  CHECK(lines == 2);
  CHECK(sseg_train(cfg, manifest.c_str(), 5, (kRoot / "run5").c_str(), nullptr, nullptr) ==
        SSEG_ERR_INVALID_ARGUMENT);

  sseg_checkpoint* ck = nullptr;
  REQUIRE(sseg_checkpoint_open((kRoot / "run" / "last.ckpt").c_str(), &ck) == SSEG_OK);
  CHECK(sseg_checkpoint_epoch(ck) == 1);
  CHECK(sseg_checkpoint_fold(ck) == 1);
  const double best = sseg_checkpoint_best_metric(ck);
  CHECK((best >= 0 && best <= 1));
  sseg_config* stored = nullptr;
  REQUIRE(sseg_checkpoint_config(ck, &stored) == SSEG_OK);
  CHECK(serialize(stored) == serialize(cfg));
  sseg_config_free(stored);
  sseg_checkpoint_free(ck);

  std::ofstream(kRoot / "junk.ckpt") << "junk";
  CHECK(sseg_checkpoint_open((kRoot / "junk.ckpt").c_str(), &ck) == SSEG_ERR_FORMAT);
  CHECK(sseg_checkpoint_open((kRoot / "none.ckpt").c_str(), &ck) == SSEG_ERR_IO);

  REQUIRE(sseg_evaluate((kRoot / "run" / "best.ckpt").c_str(), manifest.c_str(), 1, "val",
                        (kRoot / "ev").c_str(), 0) == SSEG_OK);
  CHECK(fs::exists(kRoot / "ev" / "metrics.txt"));
  CHECK(sseg_evaluate((kRoot / "run" / "best.ckpt").c_str(), manifest.c_str(), 1, "holdout",
                      (kRoot / "ev2").c_str(), 0) == SSEG_ERR_INVALID_ARGUMENT);

  CHECK(sseg_config_set(cfg, "epochs", "1") == SSEG_OK);
  REQUIRE(sseg_crossval(cfg, manifest.c_str(), (kRoot / "cv").c_str(), nullptr, nullptr) == SSEG_OK);
  const std::string csv = (kRoot / "cv" / "report.csv").string();
  const char* paths[] = {csv.c_str(), csv.c_str()};
  REQUIRE(sseg_report_merge(paths, 2, (kRoot / "m.md").c_str(), (kRoot / "m.csv").c_str()) == SSEG_OK);
  std::ifstream md(kRoot / "m.md");
  int rows = 0;
  for (std::string l; std::getline(md, l);) rows += l.starts_with("| capi |");
  CHECK(rows == 2);
  const char* missing[] = {"/nonexistent/report.csv"};
  CHECK(sseg_report_merge(missing, 1, (kRoot / "x.md").c_str(), nullptr) == SSEG_ERR_IO);
  sseg_config_free(cfg);
}
