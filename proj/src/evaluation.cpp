#include "strokeseg/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "binary_io.hpp"
#include "kv.hpp"

namespace strokeseg {

LabelMap argmax_labels(const Tensor& probs) {
  const Shape s = probs.shape();
  require(s.c >= 1 && s.c <= 255, ErrorKind::kShape, "argmax: channel count out of range " + s.str());
  LabelMap out(s.n, s.h, s.w);
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    const real* base = probs.data() + static_cast<std::size_t>(b) * s.c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      real bv = base[i];
      for (int ch = 1; ch < s.c; ++ch)
        if (base[ch * plane + i] > bv) {
          bv = base[ch * plane + i];
          best = ch;
        }
      out.labels[b * plane + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  require(pred.size() == gt.size(), ErrorKind::kShape, "confusion: prediction and ground truth differ in size");
  ConfusionCounts cc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i] <= 2 && gt[i] <= 2, ErrorKind::kInvalidArgument, "confusion: label outside {0,1,2}");
    for (int cls : kLesionClasses) {
      const bool p = pred[i] == cls, g = gt[i] == cls;
      ClassCounts& c = cc[cls];
      if (p && g) {
        ++c.tp;
      } else if (p) {
        ++c.fp;
      } else if (g) {
        ++c.fn;
      } else {
        ++c.tn;
      }
    }
  }
  return cc;
}

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt) {
  require(pred.n == gt.n && pred.h == gt.h && pred.w == gt.w, ErrorKind::kShape,
          "confusion: label maps have different dimensions");
  return confusion(std::span<const std::uint8_t>(pred.labels), std::span<const std::uint8_t>(gt.labels));
}

namespace {
// both_empty: the class is absent from both maps.
double ratio(std::int64_t num, std::int64_t den, bool both_empty) {
  if (den == 0) return both_empty ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}
bool both_empty(const ClassCounts& c) { return c.tp == 0 && c.fp == 0 && c.fn == 0; }
}  // namespace

double dice(const ClassCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, both_empty(c)); }
double precision(const ClassCounts& c) { return ratio(c.tp, c.tp + c.fp, both_empty(c)); }
double recall(const ClassCounts& c) { return ratio(c.tp, c.tp + c.fn, both_empty(c)); }

ClassMetrics metrics_of(const ClassCounts& c) { return {dice(c), precision(c), recall(c)}; }

SubjectMetrics subject_metrics(std::string subject, const ConfusionCounts& counts) {
  return {std::move(subject), counts, metrics_of(counts.penumbra), metrics_of(counts.core)};
}

ClassMetrics FoldSummary::mean(int cls) const {
  require(!subjects.empty(), ErrorKind::kInvalidArgument,
          "fold " + std::to_string(fold) + " has no test subjects");
  ClassMetrics m;
  for (const auto& s : subjects) {
    const ClassMetrics& c = cls == kPenumbra ? s.penumbra : s.core;
    m.dice += c.dice;
    m.precision += c.precision;
    m.recall += c.recall;
  }
  const double n = static_cast<double>(subjects.size());
  return {m.dice / n, m.precision / n, m.recall / n};
}

std::string ReportCell::str() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, stddev);
  return buf;
}

ReportCell ReportCell::parse(const std::string& text) {
  const std::string sep = " ± ";
  const auto pos = text.find(sep);
  require(pos != std::string::npos, ErrorKind::kFormat, "report cell '" + text + "' is not 'mean ± std'");
  return {kv::to_number<double>(kv::trim(text.substr(0, pos)), ErrorKind::kFormat, "report cell"),
          kv::to_number<double>(kv::trim(text.substr(pos + sep.size())), ErrorKind::kFormat, "report cell")};
}

std::array<double, 6> fold_means(const FoldSummary& fold) {
  const ClassMetrics p = fold.mean(kPenumbra), c = fold.mean(kCore);
  return {p.dice, c.dice, p.precision, c.precision, p.recall, c.recall};
}

ReportRow aggregate_fold_means(const std::string& config, const std::vector<std::array<double, 6>>& means) {
  require(!means.empty(), ErrorKind::kInvalidArgument, "aggregate: no folds");
  require(config.find_first_of(",|\n") == std::string::npos, ErrorKind::kInvalidArgument,
          "aggregate: configuration name may not contain ',', '|' or newlines");
  ReportRow row;
  row.config = config;
  const double n = static_cast<double>(means.size());
  for (std::size_t k = 0; k < 6; ++k) {
    double m = 0;
    for (const auto& f : means) m += f[k];
    m /= n;
    double var = 0;
    for (const auto& f : means) var += (f[k] - m) * (f[k] - m);
    row.cells[k] = {m, std::sqrt(var / n)};
  }
  return row;
}

ReportRow aggregate(const std::string& config, const std::vector<FoldSummary>& folds) {
  std::vector<std::array<double, 6>> means;
  for (const auto& f : folds) means.push_back(fold_means(f));
  return aggregate_fold_means(config, means);
}

std::string render_report(const ReportTable& table, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "config";
    for (const char* c : kReportColumns) out += std::string(",") + c;
    out += "\n";
    for (const auto& r : table.rows) {
      out += r.config;
      for (const auto& cell : r.cells) out += "," + cell.str();
      out += "\n";
    }
  } else {
    out = "| Config | Dice Pen. | Dice Core | Precision Pen. | Precision Core | Recall Pen. | Recall Core |\n";
    out += "|---|---|---|---|---|---|---|\n";
    for (const auto& r : table.rows) {
      out += "| " + r.config;
      for (const auto& cell : r.cells) out += " | " + cell.str();
      out += " |\n";
    }
  }
  return out;
}

ReportTable parse_csv_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kFormat, "report: empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line + "\n" == render_report({}, ReportFormat::kCsv), ErrorKind::kFormat,
          "report: unexpected CSV header '" + line + "'");
  ReportTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto parts = kv::split(line, ',');
    require(parts.size() == 7, ErrorKind::kFormat, "report: expected 7 CSV fields");
    ReportRow r;
    r.config = parts[0];
    for (std::size_t k = 0; k < 6; ++k) r.cells[k] = ReportCell::parse(parts[k + 1]);
    t.rows.push_back(r);
  }
  return t;
}

void emit_report(const ReportTable& table, ReportFormat format, const std::filesystem::path& path) {
  bin::write_text(path, render_report(table, format));
}

RgbImage render_overlay(const LabelMap& pred, const LabelMap& gt, int cls) {
  require(pred.n == gt.n && pred.h == gt.h && pred.w == gt.w, ErrorKind::kShape,
          "overlay: label maps have different dimensions");
  require(cls == kPenumbra || cls == kCore, ErrorKind::kInvalidArgument, "overlay: class must be 1 or 2");
  RgbImage img;
  img.height = pred.n * pred.h;
  img.width = pred.w;
  img.rgb.resize(pred.size() * 3);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.labels[i] == cls, g = gt.labels[i] == cls;
    std::uint8_t r = 0, gr = 0, b = 0;
    if (g && p) {
      r = gr = b = 255;
    } else if (g) {
      r = 255;
    } else if (p) {
      gr = 255;
    }
    img.rgb[3 * i] = r;
    img.rgb[3 * i + 1] = gr;
    img.rgb[3 * i + 2] = b;
  }
  return img;
}

OverlayCounts count_overlay(const RgbImage& image) {
  OverlayCounts c;
  for (std::size_t i = 0; i + 2 < image.rgb.size(); i += 3) {
    const auto r = image.rgb[i], g = image.rgb[i + 1], b = image.rgb[i + 2];
    if (r == 255 && g == 255 && b == 255) {
      ++c.white;
    } else if (r == 255 && g == 0 && b == 0) {
      ++c.red;
    } else if (r == 0 && g == 255 && b == 0) {
      ++c.green;
    } else if (r == 0 && g == 0 && b == 0) {
      ++c.black;
    } else {
      ++c.other;
    }
  }
  return c;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  bin::Writer w;
  w.str("P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n");
  w.bytes(image.rgb.data(), image.rgb.size());
  bin::write_file(path, w.buffer());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = bin::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };
  require(token() == "P6", ErrorKind::kFormat, path.string() + ": not a binary PPM");
  RgbImage img;
  img.width = kv::to_number<int>(token(), ErrorKind::kFormat, "ppm width");
  img.height = kv::to_number<int>(token(), ErrorKind::kFormat, "ppm height");
  require(token() == "255", ErrorKind::kFormat, path.string() + ": unsupported PPM max value");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  require(bytes.size() - pos == n, ErrorKind::kFormat, path.string() + ": PPM payload size mismatch");
  img.rgb.assign(bytes.begin() + pos, bytes.end());
  return img;
}

}  // namespace strokeseg
