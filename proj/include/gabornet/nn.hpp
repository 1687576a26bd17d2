// Layer building blocks over the tensor core. Layers hold their parameter
// tensors; models register them into a ParamRegistry under path strings used
// for checkpoints and optimizer state.
#pragma once

#include <string>

#include "gabornet/ops.hpp"

namespace gabornet {
namespace nn {

struct ParamEntry {
  std::string path;
  Tensor value;
  bool trainable = true;
};

class ParamRegistry {
 public:
  void add(const std::string& path, const Tensor& value, bool trainable) {
    for (const auto& e : entries_)
      if (e.path == path)
        throw ContractError("ParamRegistry: duplicate path " + path);
    entries_.push_back({path, value, trainable});
  }
  const std::vector<ParamEntry>& entries() const { return entries_; }

 private:
  std::vector<ParamEntry> entries_;
};

class BatchNorm;

// Per-item batch statistics produced during a training forward; the trainer
// averages them across the batch and applies one running-stat update, so
// parallel per-utterance workers never touch shared state.
struct BnUpdate {
  BatchNorm* layer;
  std::vector<double> mean;
  std::vector<double> var;
};

struct ForwardCtx {
  bool training = false;
  Rng* rng = nullptr;                    // dropout
  std::vector<BnUpdate>* bn_updates = nullptr;
};

class Dense {
 public:
  Dense() = default;
  Dense(int64_t in, int64_t out, Rng& rng);
  // x: (in,) -> (out,)
  Tensor forward(const Tensor& x) const;
  // rows: (M, in) -> (M, out)
  Tensor forward_rows(const Tensor& rows) const;
  void register_params(const std::string& prefix, ParamRegistry& reg) const;

  Tensor weight;  // (out, in)
  Tensor bias;    // (out,)
};

class Conv1dLayer {
 public:
  Conv1dLayer() = default;
  Conv1dLayer(int64_t cin, int64_t cout, int64_t kernel, Rng& rng,
              ops::Pad pad = ops::Pad::kSame);
  Tensor forward(const Tensor& x) const;  // (cin, L) -> (cout, L')
  void register_params(const std::string& prefix, ParamRegistry& reg) const;

  Tensor weight;  // (cout, cin, k)
  Tensor bias;    // (cout,)
  ops::Pad pad = ops::Pad::kSame;
};

class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(int64_t cin, int64_t cout, int64_t kh, int64_t kw, Rng& rng,
              ops::Pad pad = ops::Pad::kSame);
  Tensor forward(const Tensor& x) const;  // (cin, H, W) -> (cout, H', W')
  void register_params(const std::string& prefix, ParamRegistry& reg) const;

  Tensor weight;  // (cout, cin, kh, kw)
  Tensor bias;    // (cout,)
  ops::Pad pad = ops::Pad::kSame;
};

// Per-channel normalization, channel axis 0, statistics over the remaining
// axes of the item. Training mode normalizes with the item's own statistics
// and reports them through ctx.bn_updates; eval mode uses running buffers.
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int64_t channels);
  Tensor forward(const Tensor& x, ForwardCtx& ctx);
  void apply_update(const std::vector<double>& mean,
                    const std::vector<double>& var);
  void register_params(const std::string& prefix, ParamRegistry& reg) const;

  Tensor gamma;         // (C,)
  Tensor beta;          // (C,)
  Tensor running_mean;  // (C,) buffer
  Tensor running_var;   // (C,) buffer
  double momentum = 0.1;
  double eps = 1e-5;
};

// Canonical reset/update-gate cell, gates sigmoid, candidate tanh:
//   r = sig(Wxr x + bxr + Whr h + bhr)
//   z = sig(Wxz x + bxz + Whz h + bhz)
//   n = tanh(Wxn x + bxn + r * (Whn h + bhn))
//   h' = (1 - z) * n + z * h
class GruCell {
 public:
  GruCell() = default;
  GruCell(int64_t input, int64_t hidden, Rng& rng);
  Tensor step(const Tensor& x, const Tensor& h) const;
  // seq: (input, T); returns the final hidden state (hidden,)
  Tensor last_hidden(const Tensor& seq) const;
  void register_params(const std::string& prefix, ParamRegistry& reg) const;

  int64_t hidden_size = 0;
  Tensor wx;  // (3H, input), gate order [r; z; n]
  Tensor wh;  // (3H, H)
  Tensor bx;  // (3H,)
  Tensor bh;  // (3H,)
};

// Feature-map scaling: r = sigmoid(FC(avg_t map)); out = map * r + r.
class FmsBlock {
 public:
  FmsBlock() = default;
  FmsBlock(int64_t channels, Rng& rng);
  Tensor forward(const Tensor& map) const;  // (C, T) -> (C, T)
  void register_params(const std::string& prefix, ParamRegistry& reg) const;

  Dense fc;
};

// Inverted dropout; identity when not training or p == 0.
Tensor dropout(const Tensor& x, double p, ForwardCtx& ctx);

}  // namespace nn
}  // namespace gabornet
