#include "gabornet/nn.hpp"

#include <cmath>

namespace gabornet {
namespace nn {

namespace {
Tensor init_uniform(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::uniform(rng, std::move(shape), -bound, bound);
  t.set_requires_grad(true);
  return t;
}
}  // namespace

Dense::Dense(int64_t in, int64_t out, Rng& rng)
    : weight(init_uniform(rng, {out, in}, in)),
      bias(init_uniform(rng, {out}, in)) {}

Tensor Dense::forward(const Tensor& x) const {
  return ops::add(ops::matmul(weight, x), bias);
}

Tensor Dense::forward_rows(const Tensor& rows) const {
  return ops::add(ops::matmul(rows, ops::transpose(weight)), bias);
}

void Dense::register_params(const std::string& prefix,
                            ParamRegistry& reg) const {
  reg.add(prefix + ".weight", weight, true);
  reg.add(prefix + ".bias", bias, true);
}

Conv1dLayer::Conv1dLayer(int64_t cin, int64_t cout, int64_t kernel, Rng& rng,
                         ops::Pad pad_mode)
    : weight(init_uniform(rng, {cout, cin, kernel}, cin * kernel)),
      bias(init_uniform(rng, {cout}, cin * kernel)),
      pad(pad_mode) {}

Tensor Conv1dLayer::forward(const Tensor& x) const {
  Tensor out = ops::conv1d(x, weight, 1, pad);
  return ops::add(out, ops::reshape(bias, {bias.dim(0), 1}));
}

void Conv1dLayer::register_params(const std::string& prefix,
                                  ParamRegistry& reg) const {
  reg.add(prefix + ".weight", weight, true);
  reg.add(prefix + ".bias", bias, true);
}

Conv2dLayer::Conv2dLayer(int64_t cin, int64_t cout, int64_t kh, int64_t kw,
                         Rng& rng, ops::Pad pad_mode)
    : weight(init_uniform(rng, {cout, cin, kh, kw}, cin * kh * kw)),
      bias(init_uniform(rng, {cout}, cin * kh * kw)),
      pad(pad_mode) {}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  Tensor out = ops::conv2d(x, weight, pad);
  return ops::add(out, ops::reshape(bias, {bias.dim(0), 1, 1}));
}

void Conv2dLayer::register_params(const std::string& prefix,
                                  ParamRegistry& reg) const {
  reg.add(prefix + ".weight", weight, true);
  reg.add(prefix + ".bias", bias, true);
}

BatchNorm::BatchNorm(int64_t channels)
    : gamma(Tensor::full({channels}, 1.0)),
      beta(Tensor::zeros({channels})),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0)) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

Tensor BatchNorm::forward(const Tensor& x, ForwardCtx& ctx) {
  const int64_t c = x.dim(0);
  if (c != gamma.dim(0))
    throw ContractError("BatchNorm: input has " + std::to_string(c) +
                        " channels, layer expects " +
                        std::to_string(gamma.dim(0)));
  std::vector<int64_t> col_shape(static_cast<size_t>(x.rank()), 1);
  col_shape[0] = c;

  Tensor mean_col, var_col;
  if (ctx.training) {
    Tensor flat = x.rank() == 2 ? x : ops::reshape(x, {c, x.numel() / c});
    Tensor mu = ops::mean_axis(flat, 1, /*keepdim=*/true);  // (C,1)
    Tensor centered = ops::sub(flat, mu);
    Tensor var = ops::mean_axis(ops::mul(centered, centered), 1, true);
    if (ctx.bn_updates) {
      BnUpdate upd;
      upd.layer = this;
      upd.mean.resize(static_cast<size_t>(c));
      upd.var.resize(static_cast<size_t>(c));
      for (int64_t i = 0; i < c; ++i) {
        upd.mean[static_cast<size_t>(i)] = mu.at(i);
        upd.var[static_cast<size_t>(i)] = var.at(i);
      }
      ctx.bn_updates->push_back(std::move(upd));
    }
    mean_col = ops::reshape(mu, col_shape);
    var_col = ops::reshape(var, col_shape);
  } else {
    mean_col = ops::reshape(running_mean, col_shape);
    var_col = ops::reshape(running_var, col_shape);
  }
  Tensor inv_std = ops::divide(Tensor::scalar(1.0),
                               ops::sqrt(ops::add_scalar(var_col, eps)));
  Tensor normalized = ops::mul(ops::sub(x, mean_col), inv_std);
  Tensor gamma_col = ops::reshape(gamma, col_shape);
  Tensor beta_col = ops::reshape(beta, col_shape);
  return ops::add(ops::mul(normalized, gamma_col), beta_col);
}

void BatchNorm::apply_update(const std::vector<double>& mean,
                             const std::vector<double>& var) {
  double* rm = running_mean.mutable_data();
  double* rv = running_var.mutable_data();
  for (int64_t i = 0; i < running_mean.numel(); ++i) {
    rm[i] = (1.0 - momentum) * rm[i] + momentum * mean[static_cast<size_t>(i)];
    rv[i] = (1.0 - momentum) * rv[i] + momentum * var[static_cast<size_t>(i)];
  }
}

void BatchNorm::register_params(const std::string& prefix,
                                ParamRegistry& reg) const {
  reg.add(prefix + ".gamma", gamma, true);
  reg.add(prefix + ".beta", beta, true);
  reg.add(prefix + ".running_mean", running_mean, false);
  reg.add(prefix + ".running_var", running_var, false);
}

GruCell::GruCell(int64_t input, int64_t hidden, Rng& rng)
    : hidden_size(hidden),
      wx(init_uniform(rng, {3 * hidden, input}, hidden)),
      wh(init_uniform(rng, {3 * hidden, hidden}, hidden)),
      bx(init_uniform(rng, {3 * hidden}, hidden)),
      bh(init_uniform(rng, {3 * hidden}, hidden)) {}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  const int64_t hs = hidden_size;
  Tensor gx = ops::reshape(ops::add(ops::matmul(wx, x), bx), {3, hs});
  Tensor gh = ops::reshape(ops::add(ops::matmul(wh, h), bh), {3, hs});
  Tensor r = ops::sigmoid(ops::add(ops::select_index(gx, 0, 0),
                                   ops::select_index(gh, 0, 0)));
  Tensor z = ops::sigmoid(ops::add(ops::select_index(gx, 0, 1),
                                   ops::select_index(gh, 0, 1)));
  Tensor n = ops::tanh(ops::add(ops::select_index(gx, 0, 2),
                                ops::mul(r, ops::select_index(gh, 0, 2))));
  Tensor one_minus_z = ops::sub(Tensor::scalar(1.0), z);
  return ops::add(ops::mul(one_minus_z, n), ops::mul(z, h));
}

Tensor GruCell::last_hidden(const Tensor& seq) const {
  if (seq.rank() != 2)
    throw ContractError("GruCell: expected sequence (features, T), got " +
                        shape_to_string(seq.shape()));
  Tensor h = Tensor::zeros({hidden_size});
  const int64_t t_len = seq.dim(1);
  for (int64_t t = 0; t < t_len; ++t)
    h = step(ops::select_index(seq, 1, t), h);
  return h;
}

void GruCell::register_params(const std::string& prefix,
                              ParamRegistry& reg) const {
  reg.add(prefix + ".wx", wx, true);
  reg.add(prefix + ".wh", wh, true);
  reg.add(prefix + ".bx", bx, true);
  reg.add(prefix + ".bh", bh, true);
}

FmsBlock::FmsBlock(int64_t channels, Rng& rng) : fc(channels, channels, rng) {}

Tensor FmsBlock::forward(const Tensor& map) const {
  Tensor pooled = ops::mean_axis(map, 1);                   // (C,)
  Tensor scale = ops::sigmoid(fc.forward(pooled));          // (C,)
  Tensor col = ops::reshape(scale, {map.dim(0), 1});
  return ops::add(ops::mul(map, col), col);
}

void FmsBlock::register_params(const std::string& prefix,
                               ParamRegistry& reg) const {
  fc.register_params(prefix + ".fc", reg);
}

Tensor dropout(const Tensor& x, double p, ForwardCtx& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout: p must be < 1");
  if (!ctx.rng) throw ContractError("dropout: training ctx has no rng");
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor mask = Tensor::zeros(x.shape());
  double* m = mask.mutable_data();
  for (int64_t i = 0; i < mask.numel(); ++i)
    m[i] = ctx.rng->uniform() < p ? 0.0 : keep_scale;
  return ops::mul(x, mask);
}

}  // namespace nn
}  // namespace gabornet
