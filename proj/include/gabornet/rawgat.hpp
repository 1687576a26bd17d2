// Gabor-RawGAT-ST backbone: 2-D residual encoder over the (freq, time)
// map, spectral and temporal graph-attention branches with Top-K pooling,
// node-axis projections, multiplicative fusion, and a spectro-temporal
// attention head.
#pragma once

#include "gabornet/frontend.hpp"
#include "gabornet/model.hpp"

namespace gabornet {
namespace rawgat {

// Graph-attention node features, one node per row.
struct NodeSet {
  enum class Origin { kSpectral, kTemporal, kFused };
  Tensor nodes;  // (num_nodes, feature_dim)
  Origin origin = Origin::kFused;

  int64_t num_nodes() const { return nodes.dim(0); }
  int64_t feature_dim() const { return nodes.dim(1); }
};

// Max over one axis of a (channels, freq, time) map; the surviving axis
// indexes the nodes and channels become node features.
NodeSet branch_pool(const Tensor& map, NodeSet::Origin origin);

// Single-head graph attention over a fully connected graph:
//   e_ij = LeakyReLU(a_l . (W h_i) + a_r . (W h_j))
//   h'_i = selu(sum_j softmax_j(e_ij) W h_j)
class GatLayer {
 public:
  GatLayer() = default;
  GatLayer(int64_t in_dim, int64_t out_dim, Rng& rng);
  NodeSet forward(const NodeSet& in) const;
  void register_params(const std::string& prefix,
                       nn::ParamRegistry& reg) const;

  Tensor weight;  // (out, in)
  Tensor attn_l;  // (out,)
  Tensor attn_r;  // (out,)
  double slope = 0.3;
};

// Sigmoid gate per node, row-scaling by the gate, then slicing to the
// floor(k_ratio * N) highest-gated nodes in original node order. Ties break
// toward the lower node index.
class TopKPool {
 public:
  TopKPool() = default;
  TopKPool(int64_t feature_dim, double k_ratio, Rng& rng);
  NodeSet forward(const NodeSet& in) const;
  // Retained indices for the oracle tests, same tie rule.
  std::vector<int64_t> retained_indices(const NodeSet& in) const;
  void register_params(const std::string& prefix,
                       nn::ParamRegistry& reg) const;

  nn::Dense gate;
  double k_ratio = 0.8;
};

// Elementwise product of two node sets already projected to an identical
// (nodes, features) layout.
NodeSet fuse(const NodeSet& spectral, const NodeSet& temporal);

// BN+SELU -> Conv2d(2,3) -> BN+SELU -> Conv2d(2,3) -> +skip (1x1 when the
// channel count changes) -> MaxPool(1,3) over time.
class ResBlock2d {
 public:
  ResBlock2d() = default;
  ResBlock2d(int64_t cin, int64_t cout, Rng& rng);
  Tensor forward(const Tensor& x, nn::ForwardCtx& ctx);
  void register_params(const std::string& prefix,
                       nn::ParamRegistry& reg) const;

  nn::BatchNorm bn1, bn2;
  nn::Conv2dLayer conv1, conv2;
  nn::Conv2dLayer skip_proj;
  bool projects = false;
};

struct RawGatConfig {
  frontend::FrontendConfig frontend;
  int64_t input_samples = 64600;
  int64_t stack1_channels = 32;   // three blocks
  int64_t stack2_channels = 64;   // three blocks
  int64_t gat_dim = 32;           // branch GAT output features
  int64_t proj_nodes = 12;        // node count after the FC projections
  int64_t fusion_gat_dim = 16;
  double k_spectral = 0.64;
  double k_temporal = 0.81;
  double k_fusion = 0.64;
  double dropout = 0.3;
  // Ablation switches (RawGAT-S / RawGAT-T / no fusion).
  bool use_spectral = true;
  bool use_temporal = true;
  bool use_fusion = true;

  static RawGatConfig paper_defaults();
};

struct ForwardShapes {
  std::vector<int64_t> frontend;
  std::vector<int64_t> stack1;
  std::vector<int64_t> stack2;
  int64_t spectral_nodes = 0;
  int64_t temporal_nodes = 0;
  std::vector<int64_t> fused;      // (nodes, features)
  int64_t head_nodes = 0;
};

class RawGat final : public SpoofModel {
 public:
  RawGat(const RawGatConfig& config, Rng& rng);

  Tensor forward(const Tensor& waveform, nn::ForwardCtx& ctx) override {
    return forward_traced(waveform, ctx, nullptr);
  }
  Tensor forward_traced(const Tensor& waveform, nn::ForwardCtx& ctx,
                        ForwardShapes* shapes);

  void register_params(nn::ParamRegistry& reg) const override;
  void clamp_params() override;
  int64_t input_samples() const override { return cfg_.input_samples; }

  const RawGatConfig& config() const { return cfg_; }
  frontend::Frontend& frontend_layer() { return frontend_; }

 private:
  RawGatConfig cfg_;
  frontend::Frontend frontend_;
  std::vector<ResBlock2d> blocks_;
  GatLayer spectral_gat_, temporal_gat_;
  TopKPool spectral_pool_, temporal_pool_;
  nn::Dense spectral_proj_, temporal_proj_;  // node axis -> proj_nodes
  GatLayer fusion_gat_;
  TopKPool fusion_pool_;
  nn::Dense node_proj_;  // per-node features -> scalar
  nn::Dense fc_out_;     // head nodes -> 2
  int64_t spectral_nodes_in_ = 0, temporal_nodes_in_ = 0, head_nodes_ = 0;
};

}  // namespace rawgat
}  // namespace gabornet
