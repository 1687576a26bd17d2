#include "gabornet/rawgat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gabornet {
namespace rawgat {

namespace {
int64_t floor_ratio(double ratio, int64_t n) {
  int64_t k = static_cast<int64_t>(ratio * static_cast<double>(n) + 1e-9);
  return std::max<int64_t>(k, 1);
}

int64_t pool3_valid(int64_t len) { return (len - 3) / 3 + 1; }
}  // namespace

NodeSet branch_pool(const Tensor& map, NodeSet::Origin origin) {
  if (map.rank() != 3)
    throw ContractError("branch_pool: expected (channels, freq, time), got " +
                        shape_to_string(map.shape()));
  // Spectral branch pools out time, temporal branch pools out frequency;
  // the surviving axis indexes the nodes.
  const int64_t axis = origin == NodeSet::Origin::kSpectral ? 2 : 1;
  Tensor reduced = ops::reduce_max(map, axis);  // (C, nodes)
  NodeSet out;
  out.nodes = ops::transpose(reduced);
  out.origin = origin;
  return out;
}

GatLayer::GatLayer(int64_t in_dim, int64_t out_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  weight = Tensor::uniform(rng, {out_dim, in_dim}, -bound, bound);
  weight.set_requires_grad(true);
  const double abound = 1.0 / std::sqrt(static_cast<double>(out_dim));
  attn_l = Tensor::uniform(rng, {out_dim}, -abound, abound);
  attn_l.set_requires_grad(true);
  attn_r = Tensor::uniform(rng, {out_dim}, -abound, abound);
  attn_r.set_requires_grad(true);
}

NodeSet GatLayer::forward(const NodeSet& in) const {
  const int64_t m = in.num_nodes();
  Tensor hw = ops::matmul(in.nodes, ops::transpose(weight));  // (M, out)
  Tensor e_l = ops::matmul(hw, attn_l);                       // (M,)
  Tensor e_r = ops::matmul(hw, attn_r);                       // (M,)
  Tensor scores = ops::add(ops::reshape(e_l, {m, 1}), ops::reshape(e_r, {1, m}));
  Tensor attention = ops::softmax_rows(ops::leaky_relu(scores, slope));
  NodeSet out;
  out.nodes = ops::selu(ops::matmul(attention, hw));
  out.origin = in.origin;
  return out;
}

void GatLayer::register_params(const std::string& prefix,
                               nn::ParamRegistry& reg) const {
  reg.add(prefix + ".weight", weight, true);
  reg.add(prefix + ".attn_l", attn_l, true);
  reg.add(prefix + ".attn_r", attn_r, true);
}

TopKPool::TopKPool(int64_t feature_dim, double ratio, Rng& rng)
    : gate(feature_dim, 1, rng), k_ratio(ratio) {}

std::vector<int64_t> TopKPool::retained_indices(const NodeSet& in) const {
  NoGradScope no_grad;
  const int64_t m = in.num_nodes();
  Tensor y = ops::sigmoid(ops::reshape(gate.forward_rows(in.nodes), {m}));
  std::vector<int64_t> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (y.at(a) != y.at(b)) return y.at(a) > y.at(b);
    return a < b;  // ties toward the lower node index
  });
  order.resize(static_cast<size_t>(floor_ratio(k_ratio, m)));
  std::sort(order.begin(), order.end());  // preserve original node order
  return order;
}

NodeSet TopKPool::forward(const NodeSet& in) const {
  const int64_t m = in.num_nodes();
  Tensor y = ops::sigmoid(ops::reshape(gate.forward_rows(in.nodes), {m}));
  Tensor scaled = ops::mul(in.nodes, ops::reshape(y, {m, 1}));
  NodeSet out;
  out.nodes = ops::gather_rows(scaled, retained_indices(in));
  out.origin = in.origin;
  return out;
}

void TopKPool::register_params(const std::string& prefix,
                               nn::ParamRegistry& reg) const {
  gate.register_params(prefix + ".gate", reg);
}

NodeSet fuse(const NodeSet& spectral, const NodeSet& temporal) {
  if (spectral.nodes.shape() != temporal.nodes.shape())
    throw ContractError("fuse: projected node sets differ, spectral " +
                        shape_to_string(spectral.nodes.shape()) +
                        " vs temporal " +
                        shape_to_string(temporal.nodes.shape()));
  NodeSet out;
  out.nodes = ops::mul(spectral.nodes, temporal.nodes);
  out.origin = NodeSet::Origin::kFused;
  return out;
}

ResBlock2d::ResBlock2d(int64_t cin, int64_t cout, Rng& rng)
    : bn1(cin),
      bn2(cout),
      conv1(cin, cout, 2, 3, rng, ops::Pad::kSame),
      conv2(cout, cout, 2, 3, rng, ops::Pad::kSame),
      projects(cin != cout) {
  if (projects)
    skip_proj = nn::Conv2dLayer(cin, cout, 1, 1, rng, ops::Pad::kValid);
}

Tensor ResBlock2d::forward(const Tensor& x, nn::ForwardCtx& ctx) {
  Tensor out = conv1.forward(ops::selu(bn1.forward(x, ctx)));
  out = conv2.forward(ops::selu(bn2.forward(out, ctx)));
  Tensor identity = projects ? skip_proj.forward(x) : x;
  out = ops::add(out, identity);
  return ops::max_pool(out, 2, 3, 3, ops::Pad::kValid);
}

void ResBlock2d::register_params(const std::string& prefix,
                                 nn::ParamRegistry& reg) const {
  bn1.register_params(prefix + ".bn1", reg);
  conv1.register_params(prefix + ".conv1", reg);
  bn2.register_params(prefix + ".bn2", reg);
  conv2.register_params(prefix + ".conv2", reg);
  if (projects) skip_proj.register_params(prefix + ".skip", reg);
}

RawGatConfig RawGatConfig::paper_defaults() {
  RawGatConfig cfg;
  cfg.frontend.kind = frontend::FrontendKind::kLeaf;
  cfg.frontend.num_filters = 70;
  cfg.frontend.kernel_len = 128;
  cfg.frontend.pool_kernel_len = 3;
  cfg.frontend.pool_stride = 3;
  cfg.frontend.pool_pad = ops::Pad::kValid;
  cfg.frontend.max_pool_axis = frontend::PoolAxis::kFilters;
  cfg.frontend.max_pool_kernel = 3;
  cfg.frontend.max_pool_stride = 3;
  cfg.frontend.max_pool_pad = ops::Pad::kValid;
  return cfg;
}

RawGat::RawGat(const RawGatConfig& config, Rng& rng)
    : cfg_(config), frontend_(config.frontend, rng) {
  if (!cfg_.use_spectral && !cfg_.use_temporal)
    throw ConfigError("rawgat: at least one branch must stay enabled");

  blocks_.emplace_back(1, cfg_.stack1_channels, rng);
  blocks_.emplace_back(cfg_.stack1_channels, cfg_.stack1_channels, rng);
  blocks_.emplace_back(cfg_.stack1_channels, cfg_.stack1_channels, rng);
  blocks_.emplace_back(cfg_.stack1_channels, cfg_.stack2_channels, rng);
  blocks_.emplace_back(cfg_.stack2_channels, cfg_.stack2_channels, rng);
  blocks_.emplace_back(cfg_.stack2_channels, cfg_.stack2_channels, rng);

  const int64_t freq = frontend_.out_channels();
  int64_t time = frontend::output_frames(cfg_.frontend, cfg_.input_samples);
  for (int b = 0; b < 6; ++b) time = pool3_valid(time);
  spectral_nodes_in_ = freq;
  temporal_nodes_in_ = time;

  spectral_gat_ = GatLayer(cfg_.stack2_channels, cfg_.gat_dim, rng);
  temporal_gat_ = GatLayer(cfg_.stack2_channels, cfg_.gat_dim, rng);
  spectral_pool_ = TopKPool(cfg_.gat_dim, cfg_.k_spectral, rng);
  temporal_pool_ = TopKPool(cfg_.gat_dim, cfg_.k_temporal, rng);
  spectral_proj_ = nn::Dense(floor_ratio(cfg_.k_spectral, spectral_nodes_in_),
                             cfg_.proj_nodes, rng);
  temporal_proj_ = nn::Dense(floor_ratio(cfg_.k_temporal, temporal_nodes_in_),
                             cfg_.proj_nodes, rng);
  fusion_gat_ = GatLayer(cfg_.gat_dim, cfg_.fusion_gat_dim, rng);
  fusion_pool_ = TopKPool(cfg_.fusion_gat_dim, cfg_.k_fusion, rng);
  head_nodes_ = floor_ratio(cfg_.k_fusion, cfg_.proj_nodes);
  node_proj_ = nn::Dense(cfg_.fusion_gat_dim, 1, rng);
  fc_out_ = nn::Dense(head_nodes_, 2, rng);
}

Tensor RawGat::forward_traced(const Tensor& waveform, nn::ForwardCtx& ctx,
                              ForwardShapes* shapes) {
  if (waveform.rank() != 1 || waveform.dim(0) != cfg_.input_samples)
    throw ConfigError("rawgat: expected a waveform of " +
                      std::to_string(cfg_.input_samples) +
                      " samples, got shape " +
                      shape_to_string(waveform.shape()));
  Tensor map = frontend_.forward(waveform, ctx);
  if (shapes) shapes->frontend = map.shape();
  Tensor grid = ops::reshape(map, {1, map.dim(0), map.dim(1)});
  for (size_t b = 0; b < blocks_.size(); ++b) {
    grid = blocks_[b].forward(grid, ctx);
    if (shapes && b == 2) shapes->stack1 = grid.shape();
  }
  if (shapes) shapes->stack2 = grid.shape();

  // Projection maps the node axis onto proj_nodes: (k, F) -> (proj, F).
  auto project = [](const nn::Dense& proj, const NodeSet& in) {
    NodeSet out;
    out.nodes =
        ops::transpose(proj.forward_rows(ops::transpose(in.nodes)));
    out.origin = in.origin;
    return out;
  };

  NodeSet head_in;
  NodeSet spectral, temporal;
  if (cfg_.use_spectral) {
    spectral = branch_pool(grid, NodeSet::Origin::kSpectral);
    if (shapes) shapes->spectral_nodes = spectral.num_nodes();
    spectral = project(spectral_proj_,
                       spectral_pool_.forward(spectral_gat_.forward(spectral)));
  }
  if (cfg_.use_temporal) {
    temporal = branch_pool(grid, NodeSet::Origin::kTemporal);
    if (shapes) shapes->temporal_nodes = temporal.num_nodes();
    temporal = project(temporal_proj_,
                       temporal_pool_.forward(temporal_gat_.forward(temporal)));
  }
  if (cfg_.use_spectral && cfg_.use_temporal && cfg_.use_fusion) {
    head_in = fuse(spectral, temporal);
  } else if (cfg_.use_spectral && !cfg_.use_temporal) {
    head_in = spectral;
  } else {
    // temporal-only, and the both-branches-without-fusion ablation
    head_in = temporal;
  }
  if (shapes) shapes->fused = head_in.nodes.shape();

  NodeSet attended = fusion_pool_.forward(fusion_gat_.forward(head_in));
  if (shapes) shapes->head_nodes = attended.num_nodes();
  Tensor dropped = nn::dropout(attended.nodes, cfg_.dropout, ctx);
  Tensor per_node = ops::reshape(node_proj_.forward_rows(dropped),
                                 {attended.num_nodes()});
  return ops::log_softmax(fc_out_.forward(per_node));
}

void RawGat::register_params(nn::ParamRegistry& reg) const {
  frontend_.register_params("frontend", reg);
  for (size_t b = 0; b < blocks_.size(); ++b)
    blocks_[b].register_params("block" + std::to_string(b), reg);
  if (cfg_.use_spectral) {
    spectral_gat_.register_params("spectral.gat", reg);
    spectral_pool_.register_params("spectral.pool", reg);
    spectral_proj_.register_params("spectral.proj", reg);
  }
  if (cfg_.use_temporal) {
    temporal_gat_.register_params("temporal.gat", reg);
    temporal_pool_.register_params("temporal.pool", reg);
    temporal_proj_.register_params("temporal.proj", reg);
  }
  fusion_gat_.register_params("fusion.gat", reg);
  fusion_pool_.register_params("fusion.pool", reg);
  node_proj_.register_params("fusion.node_proj", reg);
  fc_out_.register_params("fc_out", reg);
}

void RawGat::clamp_params() { frontend_.clamp_params(); }

}  // namespace rawgat
}  // namespace gabornet
