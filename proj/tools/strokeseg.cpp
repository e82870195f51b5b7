// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "strokeseg/strokeseg.h"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int report(sseg_status st) {
  if (st == SSEG_OK) return 0;
  std::fprintf(stderr, "strokeseg: %s: %s\n", sseg_status_name(st), sseg_last_error());
  return st == SSEG_ERR_CONFIG ? kExitUsage : kExitFailure;
}

void print_progress(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

// Owns a config handle for the duration of one command.
struct Config {
  sseg_config* handle = nullptr;
  ~Config() { sseg_config_free(handle); }
};

sseg_status load_config(Config& cfg, const std::string& path, const std::vector<std::string>& overrides) {
  sseg_status st = sseg_config_load(path.c_str(), &cfg.handle);
  for (const auto& kv : overrides) {
    if (st != SSEG_OK) break;
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "strokeseg: --set expects key=value, got '%s'\n", kv.c_str());
      return SSEG_ERR_CONFIG;
    }
    st = sseg_config_set(cfg.handle, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
  }
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial three-class ischaemic stroke lesion segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sseg_version()));

  sseg_phantom_spec spec;
  sseg_phantom_spec_default(&spec);
  std::string phantom_out;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic stroke phantom dataset");
  phantom->add_option("--out", phantom_out, "Output directory")->required();
  phantom->add_option("--subjects", spec.subjects, "Number of subjects")->check(CLI::PositiveNumber);
  phantom->add_option("--slices", spec.slices, "Axial slices per subject")->check(CLI::PositiveNumber);
  phantom->add_option("--size", spec.size, "In-plane size in pixels")->check(CLI::Range(16, 4096));
  phantom->add_option("--seed", spec.seed, "Random seed");
  phantom->add_option("--noise", spec.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);

  std::string config_path, manifest, out_dir, checkpoint, split = "test";
  std::vector<std::string> overrides;
  int fold = 0;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Train one cross-validation fold");
  train->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
  train->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--fold", fold, "Fold index")->required()->check(CLI::Range(0, 2));
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--set", overrides, "Override a config key (key=value)");
  train->add_flag("--quiet", quiet, "Suppress per-epoch progress");

  bool no_overlays = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split of a fold");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--fold", fold, "Fold index")->required()->check(CLI::Range(0, 2));
  eval->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_flag("--no-overlays", no_overlays, "Skip writing overlay images");

  auto* cv = app.add_subcommand("crossval", "Train and test all three folds and write the report");
  cv->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
  cv->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cv->add_option("--out", out_dir, "Output directory")->required();
  cv->add_option("--set", overrides, "Override a config key (key=value)");
  cv->add_flag("--quiet", quiet, "Suppress progress");

  std::vector<std::string> inputs;
  std::string md_out, csv_out;
  auto* rep = app.add_subcommand("report", "Merge crossval report.csv files into one table");
  rep->add_option("inputs", inputs, "report.csv files")->required()->check(CLI::ExistingFile);
  rep->add_option("--markdown", md_out, "Markdown output path");
  rep->add_option("--csv", csv_out, "CSV output path");

  std::string show_path;
  auto* show = app.add_subcommand("config", "Print the effective configuration (defaults when no file is given)");
  show->add_option("file", show_path, "Configuration file")->check(CLI::ExistingFile);
  show->add_option("--set", overrides, "Override a config key (key=value)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  sseg_progress_fn progress = quiet ? nullptr : print_progress;

  if (phantom->parsed()) return report(sseg_phantom_generate(&spec, phantom_out.c_str()));

  if (train->parsed() || cv->parsed()) {
    Config cfg;
    if (const auto st = load_config(cfg, config_path, overrides); st != SSEG_OK) return report(st);
    if (train->parsed())
      return report(sseg_train(cfg.handle, manifest.c_str(), fold, out_dir.c_str(), progress, nullptr));
    return report(sseg_crossval(cfg.handle, manifest.c_str(), out_dir.c_str(), progress, nullptr));
  }

  if (eval->parsed())
    return report(sseg_evaluate(checkpoint.c_str(), manifest.c_str(), fold, split.c_str(), out_dir.c_str(),
                                no_overlays ? 0 : 1));

  if (rep->parsed()) {
    if (md_out.empty() && csv_out.empty()) {
      std::fprintf(stderr, "strokeseg: report needs --markdown and/or --csv\n");
      return kExitUsage;
    }
    std::vector<const char*> paths;
    for (const auto& p : inputs) paths.push_back(p.c_str());
    return report(sseg_report_merge(paths.data(), paths.size(), md_out.empty() ? nullptr : md_out.c_str(),
                                    csv_out.empty() ? nullptr : csv_out.c_str()));
  }

  Config cfg;
  sseg_status st = show_path.empty() ? sseg_config_default(&cfg.handle) : load_config(cfg, show_path, {});
  for (const auto& kv : overrides) {
    if (st != SSEG_OK) break;
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) return report(SSEG_ERR_CONFIG);
    st = sseg_config_set(cfg.handle, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
  }
  if (st != SSEG_OK) return report(st);
  char* text = nullptr;
  if (const auto s2 = sseg_config_serialize(cfg.handle, &text); s2 != SSEG_OK) return report(s2);
  std::fputs(text, stdout);
  sseg_string_free(text);
  return 0;
}
