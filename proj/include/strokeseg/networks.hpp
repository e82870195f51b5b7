#pragma once

#include <cstdint>
#include <vector>

#include "strokeseg/autodiff.hpp"

namespace strokeseg {

/// Encoder-decoder segmentation network configuration. width_multiplier
/// scales every hidden channel count; 1 gives the VGG11 ladder.
struct SegNetConfig {
  int in_channels = 3;
  int num_classes = 3;
  double width_multiplier = 1.0;
  bool skip_concat = true;  // false: SegNet-style decoder without skip features
  BatchNormOptions batchnorm{};
};

struct DiscriminatorConfig {
  int in_channels = 5;
  int out_units = 1;
  int base_channels = 32;
  real leaky_slope = real(0.2);
  BatchNormOptions batchnorm{};
};

/// VGG11 encoder output channels per stage (before width scaling).
inline constexpr int kVggStages = 5;

/// Channel plan shared by the encoder and the mirrored decoder.
std::vector<std::vector<int>> encoder_plan(const SegNetConfig& cfg);

namespace detail {
struct ConvBlock {
  std::size_t weight = 0, bias = 0;
  std::size_t gamma = 0, beta = 0, running_mean = 0, running_var = 0;
  bool has_bn = false;
  int stride = 1, pad = 1;
};
}  // namespace detail

class SegmentationNet {
 public:
  struct Output {
    Var logits;
    Var probs;
  };

  SegmentationNet(const SegNetConfig& cfg, std::uint64_t seed);

  /// Records the forward pass on input's tape. With trainable=false the
  /// parameters enter the tape as constants.
  Output forward(Var input, BatchNormMode mode, bool trainable = true);
  /// Eval-mode class probabilities.
  Tensor predict(const Tensor& input);

  const SegNetConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

 private:
  Var block(Var x, const detail::ConvBlock& b, BatchNormMode mode, bool trainable);

  SegNetConfig cfg_;
  ParamStore params_;
  std::vector<std::vector<detail::ConvBlock>> encoder_;
  std::vector<std::vector<detail::ConvBlock>> decoder_;  // decoder_[k] mirrors encoder_[k]
  detail::ConvBlock head_;
};

class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  /// Probabilities of shape (batch, out_units, 1, 1).
  Var forward(Var x, BatchNormMode mode, bool trainable = true);
  Tensor predict(const Tensor& x);

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  /// Output channels of the five 4x4 convolutions.
  std::vector<int> channel_ladder() const;

 private:
  DiscriminatorConfig cfg_;
  ParamStore params_;
  std::vector<detail::ConvBlock> convs_;
  detail::ConvBlock linear_;
};

}  // namespace strokeseg
