#include "gabornet/rawnet2.hpp"

namespace gabornet {
namespace rawnet2 {

RawNet2Config RawNet2Config::paper_defaults() {
  RawNet2Config cfg;
  cfg.frontend.kind = frontend::FrontendKind::kLeaf;
  cfg.frontend.num_filters = 20;
  cfg.frontend.kernel_len = 1024;
  cfg.frontend.pool_kernel_len = 1023;
  cfg.frontend.pool_stride = 3;
  cfg.frontend.pool_pad = ops::Pad::kSame;
  cfg.frontend.max_pool_axis = frontend::PoolAxis::kTime;
  cfg.frontend.max_pool_kernel = 3;
  cfg.frontend.max_pool_stride = 1;
  cfg.frontend.max_pool_pad = ops::Pad::kSame;
  return cfg;
}

ResBlock1d::ResBlock1d(int64_t cin, int64_t cout, double slope_in, Rng& rng)
    : bn1(cin),
      bn2(cout),
      conv1(cin, cout, 3, rng, ops::Pad::kSame),
      conv2(cout, cout, 3, rng, ops::Pad::kSame),
      projects(cin != cout),
      fms(cout, rng),
      slope(slope_in) {
  if (projects) skip_proj = nn::Conv1dLayer(cin, cout, 1, rng, ops::Pad::kValid);
}

Tensor ResBlock1d::forward(const Tensor& x, nn::ForwardCtx& ctx) {
  Tensor out = conv1.forward(ops::leaky_relu(bn1.forward(x, ctx), slope));
  out = conv2.forward(ops::leaky_relu(bn2.forward(out, ctx), slope));
  Tensor identity = projects ? skip_proj.forward(x) : x;
  out = ops::add(out, identity);
  out = ops::max_pool(out, 1, 3, 3, ops::Pad::kValid);
  return fms.forward(out);
}

void ResBlock1d::register_params(const std::string& prefix,
                                 nn::ParamRegistry& reg) const {
  bn1.register_params(prefix + ".bn1", reg);
  conv1.register_params(prefix + ".conv1", reg);
  bn2.register_params(prefix + ".bn2", reg);
  conv2.register_params(prefix + ".conv2", reg);
  if (projects) skip_proj.register_params(prefix + ".skip", reg);
  fms.register_params(prefix + ".fms", reg);
}

RawNet2::RawNet2(const RawNet2Config& config, Rng& rng)
    : cfg_(config),
      frontend_(config.frontend, rng),
      pre_gru_bn_(config.stack2_channels),
      gru_(config.stack2_channels, config.gru_hidden, rng),
      fc1_(config.gru_hidden, config.fc_hidden, rng),
      fc2_(config.fc_hidden, 2, rng) {
  int64_t cin = frontend_.out_channels();
  for (int64_t b = 0; b < cfg_.blocks_per_stack; ++b) {
    blocks_.emplace_back(cin, cfg_.stack1_channels, cfg_.leaky_slope, rng);
    cin = cfg_.stack1_channels;
  }
  for (int64_t b = 0; b < cfg_.blocks_per_stack; ++b) {
    blocks_.emplace_back(cin, cfg_.stack2_channels, cfg_.leaky_slope, rng);
    cin = cfg_.stack2_channels;
  }
}

Tensor RawNet2::forward_traced(const Tensor& waveform, nn::ForwardCtx& ctx,
                               ForwardShapes* shapes) {
  if (waveform.rank() != 1 || waveform.dim(0) != cfg_.input_samples)
    throw ConfigError("rawnet2: expected a waveform of " +
                      std::to_string(cfg_.input_samples) +
                      " samples, got shape " +
                      shape_to_string(waveform.shape()));
  Tensor map = frontend_.forward(waveform, ctx);
  if (shapes) shapes->frontend = map.shape();
  for (size_t b = 0; b < blocks_.size(); ++b) {
    map = blocks_[b].forward(map, ctx);
    if (shapes && b + 1 == static_cast<size_t>(cfg_.blocks_per_stack))
      shapes->stack1 = map.shape();
  }
  if (shapes) shapes->stack2 = map.shape();
  map = ops::selu(pre_gru_bn_.forward(map, ctx));
  Tensor embedding = gru_.last_hidden(map);
  if (shapes) shapes->embedding = embedding.dim(0);
  Tensor hidden = fc1_.forward(embedding);
  return ops::log_softmax(fc2_.forward(hidden));
}

void RawNet2::register_params(nn::ParamRegistry& reg) const {
  frontend_.register_params("frontend", reg);
  for (size_t b = 0; b < blocks_.size(); ++b)
    blocks_[b].register_params("block" + std::to_string(b), reg);
  pre_gru_bn_.register_params("pre_gru_bn", reg);
  gru_.register_params("gru", reg);
  fc1_.register_params("fc1", reg);
  fc2_.register_params("fc2", reg);
}

void RawNet2::clamp_params() { frontend_.clamp_params(); }

}  // namespace rawnet2
}  // namespace gabornet
