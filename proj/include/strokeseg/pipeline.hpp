#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "strokeseg/config.hpp"
#include "strokeseg/data_io.hpp"
#include "strokeseg/evaluation.hpp"
#include "strokeseg/training.hpp"

namespace strokeseg {

using Progress = std::function<void(const std::string&)>;

/// Folds for a manifest under a run configuration (seed, proportional flag).
std::vector<FoldSplit> folds_for(const Manifest& manifest, const RunConfig& config);
/// Raises kInvalidArgument when two folds share a test subject or a fold's
/// test set meets its training set.
void verify_folds(const std::vector<FoldSplit>& folds);

struct TrainRun {
  FoldSplit split;
  FitResult fit;
};

/// Trains fold `fold`, writing config.txt, split.txt, train.log, best.ckpt
/// and last.ckpt under out_dir.
TrainRun train_fold(const RunConfig& config, const std::filesystem::path& manifest_path, int fold,
                    const std::filesystem::path& out_dir, const Progress& progress = {});

struct EvalRun {
  std::string split;
  FoldSummary summary;
};

/// Evaluates a checkpoint on one split ("train", "val" or "test") of a fold.
/// Writes metrics.txt and, when overlays is set, one PPM per slice and class
/// under out_dir/overlays.
EvalRun evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path,
                            int fold, const std::string& split, const std::filesystem::path& out_dir,
                            bool overlays = true);

struct CrossvalRun {
  ReportRow row;
  std::vector<std::array<double, 6>> fold_means;
};

/// Trains and tests all three folds in order, then writes report.md,
/// report.csv and fold_means.txt under out_dir.
CrossvalRun crossval(const RunConfig& config, const std::filesystem::path& manifest_path,
                     const std::filesystem::path& out_dir, const Progress& progress = {});

/// Concatenates the rows of several report.csv files.
ReportTable merge_reports(const std::vector<std::filesystem::path>& csv_paths);

}  // namespace strokeseg
