// Gabor-RawNet2 backbone: frontend, two stacks of three 1-D residual
// blocks with feature-map scaling after each block, GRU aggregation into an
// utterance embedding, two FC layers, log-softmax.
#pragma once

#include "gabornet/frontend.hpp"
#include "gabornet/model.hpp"

namespace gabornet {
namespace rawnet2 {

struct RawNet2Config {
  frontend::FrontendConfig frontend;
  int64_t input_samples = 64600;
  int64_t stack1_channels = 20;
  int64_t stack2_channels = 128;
  int64_t blocks_per_stack = 3;
  int64_t gru_hidden = 1024;
  int64_t fc_hidden = 1024;
  double leaky_slope = 0.3;

  static RawNet2Config paper_defaults();
};

// BN+LeakyReLU -> Conv(3,1) -> BN+LeakyReLU -> Conv(3,1) -> +skip
// (1x1 projection when the channel count changes) -> MaxPool(3).
class ResBlock1d {
 public:
  ResBlock1d() = default;
  ResBlock1d(int64_t cin, int64_t cout, double slope, Rng& rng);
  Tensor forward(const Tensor& x, nn::ForwardCtx& ctx);
  void register_params(const std::string& prefix,
                       nn::ParamRegistry& reg) const;

  nn::BatchNorm bn1, bn2;
  nn::Conv1dLayer conv1, conv2;
  nn::Conv1dLayer skip_proj;
  bool projects = false;
  nn::FmsBlock fms;
  double slope = 0.3;
};

struct ForwardShapes {
  std::vector<int64_t> frontend;
  std::vector<int64_t> stack1;
  std::vector<int64_t> stack2;
  int64_t embedding = 0;
};

class RawNet2 final : public SpoofModel {
 public:
  RawNet2(const RawNet2Config& config, Rng& rng);

  Tensor forward(const Tensor& waveform, nn::ForwardCtx& ctx) override {
    return forward_traced(waveform, ctx, nullptr);
  }
  Tensor forward_traced(const Tensor& waveform, nn::ForwardCtx& ctx,
                        ForwardShapes* shapes);

  void register_params(nn::ParamRegistry& reg) const override;
  void clamp_params() override;
  int64_t input_samples() const override { return cfg_.input_samples; }

  const RawNet2Config& config() const { return cfg_; }
  frontend::Frontend& frontend_layer() { return frontend_; }

 private:
  RawNet2Config cfg_;
  frontend::Frontend frontend_;
  std::vector<ResBlock1d> blocks_;
  nn::BatchNorm pre_gru_bn_;
  nn::GruCell gru_;
  nn::Dense fc1_, fc2_;
};

}  // namespace rawnet2
}  // namespace gabornet
