// Reverse-mode differentiation over a fixed primitive set.
//
// Forward primitives append TapeNodes to the thread-local current tape
// whenever any input requires a gradient. A tape records nodes in execution
// order, which is already a topological order, so the backward pass is a
// single reverse sweep that visits each node exactly once. Tapes are
// single-writer: each worker thread owns a private tape.
#pragma once

#include <unordered_map>
#include <vector>

#include "gabornet/tensor.hpp"

namespace gabornet {

enum class OpId {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPowScalar,
  kNeg,
  kExp,
  kLog,
  kSqrt,
  kSin,
  kCos,
  kTanh,
  kSigmoid,
  kLeakyRelu,
  kSelu,
  kMatMul,
  kConv1d,
  kDwConv1d,
  kConv2d,
  kMaxPool,
  kReduceMax,
  kSumAll,
  kSumAxis,
  kReshape,
  kTranspose,
  kSelectIndex,
  kGatherRows,
  kPcen,
};

const char* op_name(OpId op);

// Per-op scalar attributes. Meaning depends on the op; see ops.hpp wrappers.
struct OpAttrs {
  int64_t i0 = 0;
  int64_t i1 = 0;
  int64_t i2 = 0;
  double f0 = 0.0;
  double f1 = 0.0;
  bool same_pad = false;
  bool keepdim = false;
  std::vector<int64_t> ivec;
};

struct TapeNode {
  OpId op;
  OpAttrs attrs;
  std::vector<Tensor> inputs;
  Tensor output;
  std::vector<Tensor> saved;       // values the backward rule needs
  std::vector<int64_t> saved_idx;  // argmax positions for pooling ops
};

// Gradients keyed by parameter identity (leaf tensor storage).
class GradMap {
 public:
  bool contains(const Tensor& t) const {
    return grads_.count(t.impl()) != 0;
  }
  const Tensor& at(const Tensor& t) const;
  // Gradient for t, or zeros of t's shape when t never reached the loss.
  Tensor get(const Tensor& t) const;
  void set(const Tensor& leaf, Tensor grad);
  // this += scale * other, matched by key. Used for batch reduction.
  void add_scaled(const GradMap& other, double scale);
  size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const TensorImpl*, Tensor> grads_;
};

class Tape {
 public:
  bool empty() const { return nodes_.empty(); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void append(TapeNode node) { nodes_.push_back(std::move(node)); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }

  // Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse. Every
  // requires_grad leaf that appears on the tape gets an entry (zeros if it
  // never influenced the loss). The tape is cleared on return.
  GradMap backward(const Tensor& loss);

 private:
  std::vector<TapeNode> nodes_;
};

Tape* current_tape();

// Makes `tape` the recording target for this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();

 private:
  Tape* prev_;
};

// Disables recording (evaluation mode, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();

 private:
  Tape* prev_;
};

// Dispatches one primitive: validates shapes, runs the forward kernel,
// rejects non-finite outputs, and records a TapeNode when any input
// requires a gradient and a tape is active.
Tensor forward_primitive(OpId op, const std::vector<Tensor>& inputs,
                         OpAttrs attrs);

}  // namespace gabornet
