#include "gabornet/optim.hpp"

#include <cmath>

namespace gabornet {
namespace optim {

Adam::Adam(const nn::ParamRegistry& registry, AdamConfig config)
    : cfg_(config) {
  for (const auto& entry : registry.entries()) {
    if (!entry.trainable) continue;
    Slot slot;
    slot.param = entry.value;
    slot.m.assign(static_cast<size_t>(entry.value.numel()), 0.0);
    slot.v.assign(static_cast<size_t>(entry.value.numel()), 0.0);
    slots_.push_back(std::move(slot));
  }
}

void Adam::step(const GradMap& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot& slot : slots_) {
    if (!grads.contains(slot.param)) continue;  // zero grad: no change
    const Tensor& g = grads.at(slot.param);
    if (g.shape() != slot.param.shape())
      throw ContractError("adam: gradient shape " +
                          shape_to_string(g.shape()) + " != parameter shape " +
                          shape_to_string(slot.param.shape()));
    double* p = slot.param.mutable_data();
    const double* gd = g.data();
    for (int64_t i = 0; i < slot.param.numel(); ++i) {
      double& m = slot.m[static_cast<size_t>(i)];
      double& v = slot.v[static_cast<size_t>(i)];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gd[i];
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gd[i] * gd[i];
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

double cosine_lr(int64_t step, int64_t total_steps, double base_lr) {
  if (total_steps <= 0) throw ConfigError("cosine_lr: total_steps must be > 0");
  if (step < 0 || step > total_steps)
    throw ConfigError("cosine_lr: step " + std::to_string(step) +
                      " outside [0, " + std::to_string(total_steps) + "]");
  const double phase =
      M_PI * static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(phase)) / 2.0;
}

}  // namespace optim
}  // namespace gabornet
