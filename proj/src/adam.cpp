#include "strokeseg/adam.hpp"

#include <cmath>

namespace strokeseg {

AdamState AdamState::for_store(const ParamStore& params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& e : params) {
    const Shape shape = e.param.trainable ? e.param.value.shape() : Shape{};
    s.m.emplace_back(shape);
    s.v.emplace_back(shape);
  }
  return s;
}

void adam_update(std::span<real> param, std::span<const real> grad, std::span<real> m,
                 std::span<real> v, std::uint64_t step, const AdamHyper& hyper) {
  require(grad.size() == param.size() && m.size() == param.size() && v.size() == param.size(),
          ErrorKind::kShape, "adam: parameter, gradient and moment sizes differ");
  require(step >= 1, ErrorKind::kInvalidArgument, "adam: step counter must be >= 1");
  const double t = static_cast<double>(step);
  const real b1 = static_cast<real>(hyper.beta1);
  const real b2 = static_cast<real>(hyper.beta2);
  const real c1 = static_cast<real>(1.0 / (1.0 - std::pow(hyper.beta1, t)));
  const real c2 = static_cast<real>(1.0 / (1.0 - std::pow(hyper.beta2, t)));
  const real lr = static_cast<real>(hyper.lr);
  const real eps = static_cast<real>(hyper.epsilon);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const real g = grad[i];
    m[i] = b1 * m[i] + (real(1) - b1) * g;
    v[i] = b2 * v[i] + (real(1) - b2) * g * g;
    const real mhat = m[i] * c1;
    const real vhat = v[i] * c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void adam_step(ParamStore& params, AdamState& state) {
  require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorKind::kShape,
          "adam: optimizer state does not match the parameter store");
  require(state.hyper.lr > 0, ErrorKind::kInvalidArgument, "adam: learning rate must be > 0");
  const std::uint64_t t = state.step + 1;
  std::size_t i = 0;
  for (auto& e : params) {
    Parameter& p = e.param;
    if (p.trainable) {
      require(state.m[i].shape() == p.value.shape() && p.grad.shape() == p.value.shape(),
              ErrorKind::kShape, "adam: shape mismatch for " + e.name);
      adam_update(p.value.values(), p.grad.values(), state.m[i].values(), state.v[i].values(), t,
                  state.hyper);
    }
    ++i;
  }
  state.step = t;
}

}  // namespace strokeseg
