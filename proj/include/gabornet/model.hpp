// Common surface of the two spoof-detection backbones, as seen by the
// trainer and the evaluator.
#pragma once

#include "gabornet/nn.hpp"

namespace gabornet {

class SpoofModel {
 public:
  virtual ~SpoofModel() = default;

  // waveform: (input_samples,). Returns a (2,) log-probability pair,
  // index 0 = spoof, index 1 = bonafide.
  virtual Tensor forward(const Tensor& waveform, nn::ForwardCtx& ctx) = 0;

  virtual void register_params(nn::ParamRegistry& reg) const = 0;
  // Post-optimizer-step parameter projections (filterbank, PCEN ranges).
  virtual void clamp_params() = 0;
  virtual int64_t input_samples() const = 0;
};

}  // namespace gabornet
