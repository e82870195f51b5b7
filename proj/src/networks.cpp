#include "strokeseg/networks.hpp"

#include <cmath>
#include <string>

#include "strokeseg/rng.hpp"

namespace strokeseg {
namespace {

constexpr int kVggLadder[kVggStages][2] = {{64, 0}, {128, 0}, {256, 256}, {512, 512}, {512, 512}};

int scaled(int channels, double width) {
  return std::max(1, static_cast<int>(std::lround(channels * width)));
}

// He normal for rectifier inputs; the sigmoid output layer uses
// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_weight(Shape shape, bool output_layer, Rng& rng) {
  const double fan_in = static_cast<double>(shape.c) * shape.h * shape.w;
  Tensor t(shape);
  if (output_layer) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(rng.uniform(-bound, bound));
    return t;
  }
  const double stddev = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(stddev * rng.normal());
  return t;
}

detail::ConvBlock make_block(ParamStore& store, const std::string& prefix, const std::string& bn_prefix,
                             int cin, int cout, int k, int stride, int pad, bool with_bn, Rng& rng,
                             bool output_layer = false) {
  detail::ConvBlock b;
  b.stride = stride;
  b.pad = pad;
  b.weight = store.add(prefix + ".weight", init_weight({cout, cin, k, k}, output_layer, rng));
  b.bias = store.add(prefix + ".bias", Tensor({cout, 1, 1, 1}));
  b.has_bn = with_bn;
  if (with_bn) {
    b.gamma = store.add(bn_prefix + ".gamma", Tensor({cout, 1, 1, 1}, real(1)));
    b.beta = store.add(bn_prefix + ".beta", Tensor({cout, 1, 1, 1}));
    b.running_mean = store.add(bn_prefix + ".running_mean", Tensor({cout, 1, 1, 1}), false);
    b.running_var = store.add(bn_prefix + ".running_var", Tensor({cout, 1, 1, 1}, real(1)), false);
  }
  return b;
}

Var conv_bn(ParamStore& store, Var x, const detail::ConvBlock& b, BatchNormMode mode,
            const BatchNormOptions& bn, bool trainable) {
  Tape& tape = *x.tape;
  Var y = conv2d(x, tape.parameter(store.at(b.weight), trainable),
                 tape.parameter(store.at(b.bias), trainable), b.stride, b.pad);
  if (!b.has_bn) return y;
  return batchnorm2d(y, tape.parameter(store.at(b.gamma), trainable),
                     tape.parameter(store.at(b.beta), trainable), store.at(b.running_mean).value,
                     store.at(b.running_var).value, mode, bn);
}

}  // namespace

std::vector<std::vector<int>> encoder_plan(const SegNetConfig& cfg) {
  std::vector<std::vector<int>> plan;
  for (const auto& stage : kVggLadder) {
    std::vector<int> s;
    for (int c : stage)
      if (c > 0) s.push_back(scaled(c, cfg.width_multiplier));
    plan.push_back(std::move(s));
  }
  return plan;
}

SegmentationNet::SegmentationNet(const SegNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  require(cfg.in_channels >= 1, ErrorKind::kConfig, "segmentation net: in_channels must be >= 1");
  require(cfg.num_classes >= 2, ErrorKind::kConfig, "segmentation net: num_classes must be >= 2");
  require(cfg.width_multiplier > 0 && cfg.width_multiplier <= 1, ErrorKind::kConfig,
          "segmentation net: width_multiplier must lie in (0, 1]");
  Rng rng = Rng::stream(seed, "init/segmentation");
  const auto plan = encoder_plan(cfg);

  int cin = cfg.in_channels;
  for (int k = 0; k < kVggStages; ++k) {
    std::vector<detail::ConvBlock> stage;
    for (std::size_t j = 0; j < plan[k].size(); ++j) {
      const std::string p = "enc" + std::to_string(k + 1);
      stage.push_back(make_block(params_, p + ".conv" + std::to_string(j), p + ".bn" + std::to_string(j),
                                 cin, plan[k][j], 3, 1, 1, true, rng));
      cin = plan[k][j];
    }
    encoder_.push_back(std::move(stage));
  }

  decoder_.resize(kVggStages);
  for (int k = kVggStages - 1; k >= 0; --k) {
    const int width = plan[k].back();
    const int target = k > 0 ? plan[k - 1].back() : width;
    int in = cfg.skip_concat ? 2 * width : width;
    std::vector<detail::ConvBlock> stage;
    for (std::size_t j = 0; j < plan[k].size(); ++j) {
      const int out = j + 1 == plan[k].size() ? target : width;
      const std::string p = "dec" + std::to_string(k + 1);
      stage.push_back(make_block(params_, p + ".conv" + std::to_string(j), p + ".bn" + std::to_string(j),
                                 in, out, 3, 1, 1, true, rng));
      in = out;
    }
    decoder_[k] = std::move(stage);
  }
  head_ = make_block(params_, "head", "", plan[0].back(), cfg.num_classes, 1, 1, 0, false, rng);
}

Var SegmentationNet::block(Var x, const detail::ConvBlock& b, BatchNormMode mode, bool trainable) {
  return relu(conv_bn(params_, x, b, mode, cfg_.batchnorm, trainable));
}

SegmentationNet::Output SegmentationNet::forward(Var input, BatchNormMode mode, bool trainable) {
  const Shape s = input.shape();
  require(s.c == cfg_.in_channels, ErrorKind::kShape,
          "segmentation net: expected " + std::to_string(cfg_.in_channels) +
              " input channels, got " + s.str());
  constexpr int divisor = 1 << kVggStages;
  require(s.h % divisor == 0 && s.w % divisor == 0 && s.h > 0 && s.w > 0, ErrorKind::kShape,
          "segmentation net: spatial dims " + s.str() + " must be divisible by " +
              std::to_string(divisor) + " (pad the slice first)");

  std::vector<Var> skips;
  std::vector<IndexMap> indices;
  Var x = input;
  for (const auto& stage : encoder_) {
    for (const auto& b : stage) x = block(x, b, mode, trainable);
    skips.push_back(x);
    PoolResult pooled = maxpool2d_indices(x, 2);
    indices.push_back(std::move(pooled.indices));
    x = pooled.out;
  }
  for (int k = kVggStages - 1; k >= 0; --k) {
    const Shape skip_shape = skips[k].shape();
    x = max_unpool2d(x, indices[k], skip_shape.h, skip_shape.w);
    if (cfg_.skip_concat) x = concat_channels(x, skips[k]);
    for (const auto& b : decoder_[k]) x = block(x, b, mode, trainable);
  }
  Var logits = conv_bn(params_, x, head_, mode, cfg_.batchnorm, trainable);
  return {logits, softmax_channels(logits)};
}

Tensor SegmentationNet::predict(const Tensor& input) {
  Tape tape;
  return forward(tape.constant(input), BatchNormMode::kEval, false).probs.value();
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  require(cfg.in_channels >= 1 && cfg.out_units >= 1 && cfg.base_channels >= 1, ErrorKind::kConfig,
          "discriminator: channel counts must be >= 1");
  Rng rng = Rng::stream(seed, "init/discriminator");
  int cin = cfg.in_channels;
  const auto ladder = channel_ladder();
  for (std::size_t j = 0; j < ladder.size(); ++j) {
    const bool with_bn = j >= 1 && j <= 3;
    convs_.push_back(make_block(params_, "conv" + std::to_string(j), "bn" + std::to_string(j), cin,
                                ladder[j], 4, 2, 1, with_bn, rng));
    cin = ladder[j];
  }
  linear_ = make_block(params_, "linear", "", cin, cfg.out_units, 1, 1, 0, false, rng, true);
}

std::vector<int> Discriminator::channel_ladder() const {
  std::vector<int> ladder;
  for (int j = 0; j < 5; ++j) ladder.push_back(cfg_.base_channels << j);
  return ladder;
}

Var Discriminator::forward(Var x, BatchNormMode mode, bool trainable) {
  require(x.shape().c == cfg_.in_channels, ErrorKind::kShape,
          "discriminator: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
              x.shape().str());
  for (const auto& b : convs_)
    x = leaky_relu(conv_bn(params_, x, b, mode, cfg_.batchnorm, trainable), cfg_.leaky_slope);
  x = global_avg_pool(x);
  return sigmoid(conv_bn(params_, x, linear_, mode, cfg_.batchnorm, trainable));
}

Tensor Discriminator::predict(const Tensor& x) {
  Tape tape;
  return forward(tape.constant(x), BatchNormMode::kEval, false).value();
}

}  // namespace strokeseg
