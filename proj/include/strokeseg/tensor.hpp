#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "strokeseg/error.hpp"

namespace strokeseg {

// The numeric core is compiled once in single precision for training and once
// in double precision for finite-difference gradient verification.
#ifdef STROKESEG_USE_DOUBLE
using real = double;
#else
using real = float;
#endif

/// Dimensions of a batch-major 4-D tensor (batch, channels, height, width).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense row-major 4-D array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, std::vector<real> data);

  static Tensor scalar(real value) { return Tensor({1, 1, 1, 1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  real* data() noexcept { return data_.data(); }
  const real* data() const noexcept { return data_.data(); }
  std::span<real> values() noexcept { return data_; }
  std::span<const real> values() const noexcept { return data_; }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  real& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  real at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Contiguous view of one (n, c) plane.
  std::span<real> plane(int n, int c);
  std::span<const real> plane(int n, int c) const;

  void fill(real value);
  /// Reinterpret with a new shape of identical element count.
  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::size_t offset(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_{};
  std::vector<real> data_;
};

/// Per-pixel integer class map (batch, height, width).
struct LabelMap {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), labels(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::size_t size() const noexcept { return labels.size(); }
  std::uint8_t& at(int b, int y, int x) {
    return labels[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  std::uint8_t at(int b, int y, int x) const {
    return labels[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  bool operator==(const LabelMap&) const = default;
};

}  // namespace strokeseg
