#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "strokeseg/autodiff.hpp"

namespace strokeseg {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments for every entry of one ParamStore, in store order.
/// Buffers (non-trainable entries) get empty moment tensors.
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState for_store(const ParamStore& params, AdamHyper hyper = {});
};

/// One bias-corrected Adam update of a single tensor, given the 1-based step.
void adam_update(std::span<real> param, std::span<const real> grad, std::span<real> m,
                 std::span<real> v, std::uint64_t step, const AdamHyper& hyper);

/// Applies Adam to every trainable entry using the gradients accumulated in
/// the store, then increments the step counter.
void adam_step(ParamStore& params, AdamState& state);

}  // namespace strokeseg
