// Adam with bias correction and the cosine learning-rate schedule.
#pragma once

#include "gabornet/autograd.hpp"
#include "gabornet/nn.hpp"

namespace gabornet {
namespace optim {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const nn::ParamRegistry& registry, AdamConfig config);

  // One update over every trainable registered parameter; absent gradients
  // count as zero. lr overrides the configured base rate (scheduling).
  void step(const GradMap& grads, double lr);
  int64_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
};

// base_lr * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(int64_t step, int64_t total_steps, double base_lr);

}  // namespace optim
}  // namespace gabornet
