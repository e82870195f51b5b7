#pragma once

// Independent reference computations the library is checked against.

#include <array>
#include <cstdint>
#include <vector>

#include "strokeseg/rng.hpp"
#include "strokeseg/tensor.hpp"

namespace oracle {

struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Per-pixel loop over one-vs-rest membership.
inline Counts count(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int cls) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == cls, g = gt[i] == cls;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double ratio(std::int64_t num, std::int64_t den, bool both_empty) {
  if (den == 0) return both_empty ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline double dice(const Counts& c) {
  return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, c.tp + c.fp == 0 && c.tp + c.fn == 0);
}
inline double precision(const Counts& c) {
  return ratio(c.tp, c.tp + c.fp, c.tp + c.fp == 0 && c.tp + c.fn == 0);
}
inline double recall(const Counts& c) {
  return ratio(c.tp, c.tp + c.fn, c.tp + c.fp == 0 && c.tp + c.fn == 0);
}

/// Random label map; each class drawn with the given weights so that some
/// maps have empty classes.
inline strokeseg::LabelMap random_labels(strokeseg::Rng& rng, int n, int h, int w) {
  strokeseg::LabelMap m(n, h, w);
  const double p1 = rng.uniform(0.0, 0.5), p2 = rng.uniform(0.0, 0.3) * (rng.below(5) == 0 ? 0.0 : 1.0);
  for (auto& l : m.labels) {
    const double u = rng.uniform();
    l = u < p2 ? 2 : (u < p2 + p1 ? 1 : 0);
  }
  return m;
}

/// Overlay colour a pixel must take under the red/green/white/black rule.
inline std::array<std::uint8_t, 3> overlay_colour(bool pred, bool gt) {
  if (pred && gt) return {255, 255, 255};
  if (gt) return {255, 0, 0};
  if (pred) return {0, 255, 0};
  return {0, 0, 0};
}

}  // namespace oracle
