// Adam over MlpParams-shaped parameter sets.
#ifndef SNRL_OPTIM_HPP_
#define SNRL_OPTIM_HPP_

#include <snrl/memory_probe.hpp>
#include <snrl/net.hpp>

#include <cmath>
#include <cstdint>

namespace snrl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Mlp first_moment;
  Mlp second_moment;
  std::uint64_t steps = 0;
  MemoryTag tag;

  static AdamState for_params(const Mlp& p) {
    AdamState s;
    s.first_moment = p.zeros_like();
    s.second_moment = p.zeros_like();
    s.tag = MemoryTag(MemoryKind::kBuffer, 2 * p.element_count());
    return s;
  }
};

/// In-place Adam step; the moments must match the parameter shapes.
inline void adam_step(Mlp& params, const Mlp& grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  require(params.same_shape(grads) && params.same_shape(state.first_moment),
          "adam_step: shape mismatch");
  state.steps += 1;
  const double t = static_cast<double>(state.steps);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    update(params.weights[l], grads.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(params.biases[l], grads.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

}  // namespace snrl

#endif  // SNRL_OPTIM_HPP_
