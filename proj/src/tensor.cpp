#include "strokeseg/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace strokeseg {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kIncompatible: return "incompatible";
  }
  return "error";
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

namespace {
void check_dims(const Shape& s) {
  require(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0, ErrorKind::kShape,
          "negative tensor dimension " + s.str());
}
}  // namespace

Tensor::Tensor(Shape shape, real fill) : shape_(shape) {
  check_dims(shape);
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(shape), data_(std::move(data)) {
  check_dims(shape);
  require(data_.size() == shape.numel(), ErrorKind::kShape,
          "data length " + std::to_string(data_.size()) + " does not match shape " + shape.str());
}

std::span<real> Tensor::plane(int n, int c) {
  return {data_.data() + offset(n, c, 0, 0), shape_.plane()};
}

std::span<const real> Tensor::plane(int n, int c) const {
  return {data_.data() + offset(n, c, 0, 0), shape_.plane()};
}

void Tensor::fill(real value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  require(shape.numel() == numel(), ErrorKind::kShape,
          "cannot reshape " + shape_.str() + " to " + shape.str());
  return Tensor(shape, data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](real v) { return std::isfinite(v); });
}

}  // namespace strokeseg
