#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "strokeseg/tensor.hpp"

namespace strokeseg {

/// Class indices of the three-class problem.
enum LesionClass : int { kBackground = 0, kPenumbra = 1, kCore = 2 };
inline constexpr std::array<int, 2> kLesionClasses = {kPenumbra, kCore};

/// Per-pixel argmax over channels; ties go to the lower class index.
LabelMap argmax_labels(const Tensor& probs);

struct ClassCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  ClassCounts& operator+=(const ClassCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ClassCounts&) const = default;
};

/// One-vs-rest counts for penumbra and core.
struct ConfusionCounts {
  ClassCounts penumbra;
  ClassCounts core;

  const ClassCounts& operator[](int cls) const { return cls == kPenumbra ? penumbra : core; }
  ClassCounts& operator[](int cls) { return cls == kPenumbra ? penumbra : core; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    penumbra += o.penumbra;
    core += o.core;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt);
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

// When a denominator is zero: 1.0 if prediction and ground truth are both
// empty for the class, otherwise 0.
double dice(const ClassCounts& c);
double precision(const ClassCounts& c);
double recall(const ClassCounts& c);

struct ClassMetrics {
  double dice = 0, precision = 0, recall = 0;
};

ClassMetrics metrics_of(const ClassCounts& c);

struct SubjectMetrics {
  std::string subject;
  ConfusionCounts counts;
  ClassMetrics penumbra;
  ClassMetrics core;
};

SubjectMetrics subject_metrics(std::string subject, const ConfusionCounts& counts);

struct FoldSummary {
  int fold = 0;
  std::vector<SubjectMetrics> subjects;

  /// Mean over subjects, per class.
  ClassMetrics mean(int cls) const;
};

/// "mean ± std" cell, two decimals.
struct ReportCell {
  double mean = 0;
  double stddev = 0;

  std::string str() const;
  static ReportCell parse(const std::string& text);
};

inline constexpr std::array<const char*, 6> kReportColumns = {"dice_pen", "dice_core", "prec_pen",
                                                              "prec_core", "rec_pen", "rec_core"};

struct ReportRow {
  std::string config;
  std::array<ReportCell, 6> cells;  // in kReportColumns order
};

struct ReportTable {
  std::vector<ReportRow> rows;
};

/// Per-fold means over test subjects, then mean and population standard
/// deviation of the fold means.
ReportRow aggregate(const std::string& config, const std::vector<FoldSummary>& folds);
/// Same, from per-fold mean values laid out as kReportColumns.
ReportRow aggregate_fold_means(const std::string& config, const std::vector<std::array<double, 6>>& fold_means);
std::array<double, 6> fold_means(const FoldSummary& fold);

enum class ReportFormat { kMarkdown, kCsv };

std::string render_report(const ReportTable& table, ReportFormat format);
ReportTable parse_csv_report(const std::string& text);
void emit_report(const ReportTable& table, ReportFormat format, const std::filesystem::path& path);

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::array<std::uint8_t, 3> pixel(int y, int x) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};

/// Red = missed (ground truth only), green = spurious (prediction only),
/// white = agreement, black = neither. Batch items stack vertically.
RgbImage render_overlay(const LabelMap& pred, const LabelMap& gt, int cls);

struct OverlayCounts {
  std::int64_t white = 0, red = 0, green = 0, black = 0, other = 0;
};
OverlayCounts count_overlay(const RgbImage& image);

void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

}  // namespace strokeseg
