#pragma once

#include <cstdint>
#include <string>

#include "strokeseg/adam.hpp"
#include "strokeseg/networks.hpp"

namespace strokeseg {

enum class Architecture { kSumNet, kSegNet };

std::string to_string(Architecture a);

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-3;
  double alpha = 1e-3;
  double beta = 1e-3;
  double gamma = 1e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int warmup_epochs = 0;
  bool adversarial = true;  // false: segmentation loss only
  Architecture architecture = Architecture::kSumNet;
  double width_multiplier = 1.0;
  int disc_base_channels = 32;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Throws kConfig on out-of-range values.
  void validate() const;
  SegNetConfig segnet(int in_channels) const;
  /// which = 1 (penumbra pair), 2 (core pair) or 3 (channel shuffle).
  DiscriminatorConfig discriminator(int which, int in_channels) const;
  AdamHyper adam() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Everything a run needs besides the manifest, fold and output directory.
struct RunConfig {
  std::string name = "run";  // row label in reports
  TrainConfig train;
  bool proportional_folds = false;
  std::string encoder_init;  // optional archive to take encoder weights from

  bool operator==(const RunConfig&) const = default;
};

/// key=value text; '#' comments; unknown keys and bad values raise kConfig.
/// width_multiplier also accepts a fraction such as 1/4.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
/// Every key, fixed order, round-trip number formatting.
std::string serialize_run_config(const RunConfig& config);

}  // namespace strokeseg
