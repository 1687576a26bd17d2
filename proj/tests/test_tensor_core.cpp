#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gabornet/ops.hpp"
#include "testing_util.hpp"

using namespace gabornet;
namespace tu = testing_util;

namespace {

// Runs f under a fresh tape and returns d(f)/d(x).
Tensor analytic_grad(const std::function<Tensor(const Tensor&)>& f, Tensor x) {
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = f(x);
  GradMap grads = tape.backward(loss);
  return grads.get(x);
}

double check_primitive_grad(const std::function<Tensor(const Tensor&)>& f,
                            const Tensor& x) {
  Tensor a = analytic_grad(f, x.clone());
  Tensor n = ops::finite_difference_grad(
      [&](const Tensor& probe) {
        NoGradScope no_grad;
        return f(probe).item();
      },
      x);
  return tu::max_rel_error(a, n);
}

}  // namespace

TEST_CASE("conv1d output lengths and box sums") {
  Rng rng(1);
  Tensor x = tu::rand_tensor(rng, {1, 10}, -1, 1);
  Tensor w = tu::rand_tensor(rng, {1, 1, 3}, -1, 1);
  CHECK(ops::conv1d(x, w).shape() == std::vector<int64_t>{1, 8});

  Tensor ones = Tensor::full({1, 5}, 1.0);
  Tensor box = Tensor::full({1, 1, 3}, 1.0);
  Tensor out = ops::conv1d(ones, box);
  REQUIRE(out.numel() == 3);
  for (int64_t i = 0; i < 3; ++i) CHECK(out.at(i) == doctest::Approx(3.0));
}

TEST_CASE("conv1d matches the naive sliding dot product") {
  Rng rng(2);
  Tensor x = tu::rand_tensor(rng, {1, 64}, -2, 2);
  Tensor w = tu::rand_tensor(rng, {1, 1, 9}, -2, 2);
  Tensor out = ops::conv1d(x, w);
  int64_t lout = 0;
  auto oracle = tu::naive_conv1d(x.values(), 1, 64, w.values(), 1, 9, 1,
                                 false, &lout);
  REQUIRE(out.numel() == lout);
  for (int64_t i = 0; i < lout; ++i)
    CHECK(std::fabs(out.at(i) - oracle[static_cast<size_t>(i)]) < 1e-12);
}

TEST_CASE("conv oracles on random configurations up to length 256") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    int64_t cin = rng.uniform_int(1, 3);
    int64_t cout = rng.uniform_int(1, 3);
    int64_t k = rng.uniform_int(1, 17);
    int64_t l = rng.uniform_int(k, 256);
    int64_t stride = rng.uniform_int(1, 3);
    bool same = rng.uniform() < 0.5;
    Tensor x = tu::rand_tensor(rng, {cin, l}, -2, 2);
    Tensor w = tu::rand_tensor(rng, {cout, cin, k}, -2, 2);
    Tensor out = ops::conv1d(x, w, stride, same ? ops::Pad::kSame
                                                : ops::Pad::kValid);
    int64_t lout = 0;
    auto oracle = tu::naive_conv1d(x.values(), cin, l, w.values(), cout, k,
                                   stride, same, &lout);
    REQUIRE(out.shape() == std::vector<int64_t>{cout, lout});
    for (int64_t i = 0; i < out.numel(); ++i)
      CHECK(std::fabs(out.at(i) - oracle[static_cast<size_t>(i)]) < 1e-12);
  }
}

TEST_CASE("conv2d matches the naive oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t cin = rng.uniform_int(1, 2);
    int64_t cout = rng.uniform_int(1, 3);
    int64_t kh = rng.uniform_int(1, 3);
    int64_t kw = rng.uniform_int(1, 4);
    int64_t h = rng.uniform_int(kh, 12);
    int64_t w = rng.uniform_int(kw, 24);
    bool same = rng.uniform() < 0.5;
    Tensor x = tu::rand_tensor(rng, {cin, h, w}, -2, 2);
    Tensor ker = tu::rand_tensor(rng, {cout, cin, kh, kw}, -2, 2);
    Tensor out = ops::conv2d(x, ker, same ? ops::Pad::kSame : ops::Pad::kValid);
    int64_t ho = 0, wo = 0;
    auto oracle = tu::naive_conv2d(x.values(), cin, h, w, ker.values(), cout,
                                   kh, kw, same, &ho, &wo);
    REQUIRE(out.shape() == std::vector<int64_t>{cout, ho, wo});
    for (int64_t i = 0; i < out.numel(); ++i)
      CHECK(std::fabs(out.at(i) - oracle[static_cast<size_t>(i)]) < 1e-12);
  }
}

TEST_CASE("depthwise conv matches the naive oracle including decimation") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t c = rng.uniform_int(1, 4);
    int64_t p = rng.uniform_int(1, 9) * 2 + 1;
    int64_t l = rng.uniform_int(p, 200);
    int64_t stride = rng.uniform_int(1, 4);
    bool same = rng.uniform() < 0.5;
    Tensor x = tu::rand_tensor(rng, {c, l}, -2, 2);
    Tensor k = tu::rand_tensor(rng, {c, p}, -2, 2);
    int64_t lout = 0;
    auto oracle = tu::naive_dw_conv1d(x.values(), c, l, k.values(), p, stride,
                                      same, &lout);
    if (lout < 1) continue;
    Tensor out = ops::dw_conv1d(x, k, stride,
                                same ? ops::Pad::kSame : ops::Pad::kValid);
    REQUIRE(out.shape() == std::vector<int64_t>{c, lout});
    for (int64_t i = 0; i < out.numel(); ++i)
      CHECK(std::fabs(out.at(i) - oracle[static_cast<size_t>(i)]) < 1e-12);
  }
}

TEST_CASE("backward of simple sums") {
  Tensor x = Tensor::from({1, 2, 3}, {3});
  Tensor g = analytic_grad([](const Tensor& t) { return ops::sum_all(t); }, x);
  for (int64_t i = 0; i < 3; ++i) CHECK(g.at(i) == doctest::Approx(1.0));

  Tensor g2 = analytic_grad(
      [](const Tensor& t) { return ops::sum_all(ops::mul(t, t)); }, x);
  CHECK(g2.at(0) == doctest::Approx(2.0));
  CHECK(g2.at(1) == doctest::Approx(4.0));
  CHECK(g2.at(2) == doctest::Approx(6.0));
}

TEST_CASE("finite differences recover classic derivatives") {
  Tensor x = Tensor::from({3.0}, {1});
  Tensor g = ops::finite_difference_grad(
      [](const Tensor& t) { return t.at(0) * t.at(0); }, x);
  CHECK(std::fabs(g.at(0) - 6.0) < 1e-6);

  Tensor zero = Tensor::from({0.0}, {1});
  Tensor gs = ops::finite_difference_grad(
      [](const Tensor& t) { return std::sin(t.at(0)); }, zero);
  CHECK(std::fabs(gs.at(0) - 1.0) < 1e-8);
}

TEST_CASE("every primitive passes the central-difference gradient check") {
  Rng rng(7);
  auto run_trials = [&](const char* name,
                        const std::function<Tensor(const Tensor&)>& f,
                        double lo, double hi, std::vector<int64_t> shape,
                        int trials = 100) {
    double worst = 0;
    for (int i = 0; i < trials; ++i) {
      Tensor x = tu::rand_tensor(rng, shape, lo, hi);
      worst = std::max(worst, check_primitive_grad(
                                  [&](const Tensor& t) {
                                    return ops::sum_all(f(t));
                                  },
                                  x));
    }
    INFO(name << " worst relative error " << worst);
    CHECK(worst < 1e-4);
  };

  Rng aux(8);
  Tensor other = tu::rand_tensor(aux, {2, 3}, 0.5, 2.0);
  Tensor col = tu::rand_tensor(aux, {2, 1}, 0.5, 2.0);

  run_trials("add", [&](const Tensor& t) { return ops::add(t, other); }, -2, 2, {2, 3});
  run_trials("add-bc", [&](const Tensor& t) { return ops::add(t, col); }, -2, 2, {2, 3});
  run_trials("sub", [&](const Tensor& t) { return ops::sub(other, t); }, -2, 2, {2, 3});
  run_trials("mul", [&](const Tensor& t) { return ops::mul(t, other); }, -2, 2, {2, 3});
  run_trials("mul-bc", [&](const Tensor& t) { return ops::mul(t, col); }, -2, 2, {2, 3});
  run_trials("div-num", [&](const Tensor& t) { return ops::divide(t, other); }, -2, 2, {2, 3});
  run_trials("div-den", [&](const Tensor& t) { return ops::divide(other, t); }, 0.5, 2.0, {2, 3});
  run_trials("pow_scalar", [&](const Tensor& t) { return ops::pow_scalar(t, 1.7); }, 0.3, 2.0, {2, 3});
  run_trials("neg", [](const Tensor& t) { return ops::neg(t); }, -2, 2, {5});
  run_trials("exp", [](const Tensor& t) { return ops::exp(t); }, -2, 2, {5});
  run_trials("log", [](const Tensor& t) { return ops::log(t); }, 0.2, 2.0, {5});
  run_trials("sqrt", [](const Tensor& t) { return ops::sqrt(t); }, 0.2, 2.0, {5});
  run_trials("sin", [](const Tensor& t) { return ops::sin(t); }, -2, 2, {5});
  run_trials("cos", [](const Tensor& t) { return ops::cos(t); }, -2, 2, {5});
  run_trials("tanh", [](const Tensor& t) { return ops::tanh(t); }, -2, 2, {5});
  run_trials("sigmoid", [](const Tensor& t) { return ops::sigmoid(t); }, -2, 2, {5});
  run_trials("leaky_relu", [](const Tensor& t) { return ops::leaky_relu(t); }, -2, 2, {5});
  run_trials("selu", [](const Tensor& t) { return ops::selu(t); }, -2, 2, {5});

  Tensor m = tu::rand_tensor(aux, {3, 4}, -1, 1);
  Tensor v = tu::rand_tensor(aux, {4}, -1, 1);
  run_trials("matmul-a", [&](const Tensor& t) { return ops::matmul(t, m); }, -2, 2, {2, 3});
  run_trials("matmul-b", [&](const Tensor& t) { return ops::matmul(m, t); }, -2, 2, {4, 2});
  run_trials("matvec", [&](const Tensor& t) { return ops::matmul(t, v); }, -2, 2, {3, 4});

  Tensor cw = tu::rand_tensor(aux, {2, 3, 5}, -1, 1);
  run_trials("conv1d-x",
             [&](const Tensor& t) { return ops::conv1d(t, cw, 1, ops::Pad::kSame); },
             -2, 2, {3, 12});
  Tensor cx = tu::rand_tensor(aux, {3, 12}, -1, 1);
  run_trials("conv1d-w", [&](const Tensor& t) { return ops::conv1d(cx, t); },
             -2, 2, {2, 3, 5});

  Tensor dk = tu::rand_tensor(aux, {3, 5}, -1, 1);
  run_trials("dwconv-x",
             [&](const Tensor& t) { return ops::dw_conv1d(t, dk, 3, ops::Pad::kSame); },
             -2, 2, {3, 14});
  Tensor dx = tu::rand_tensor(aux, {3, 14}, -1, 1);
  run_trials("dwconv-k",
             [&](const Tensor& t) { return ops::dw_conv1d(dx, t, 2, ops::Pad::kValid); },
             -2, 2, {3, 5});

  Tensor c2w = tu::rand_tensor(aux, {2, 2, 2, 3}, -1, 1);
  run_trials("conv2d-x",
             [&](const Tensor& t) { return ops::conv2d(t, c2w); }, -2, 2,
             {2, 4, 6}, 50);
  Tensor c2x = tu::rand_tensor(aux, {2, 4, 6}, -1, 1);
  run_trials("conv2d-w",
             [&](const Tensor& t) { return ops::conv2d(c2x, t); }, -2, 2,
             {2, 2, 2, 3}, 50);

  run_trials("max_pool",
             [](const Tensor& t) { return ops::max_pool(t, 1, 3, 3); }, -2, 2,
             {2, 9});
  run_trials("reduce_max",
             [](const Tensor& t) { return ops::reduce_max(t, 1); }, -2, 2,
             {3, 4});
  run_trials("sum_axis",
             [](const Tensor& t) { return ops::sum_axis(t, 0); }, -2, 2,
             {3, 4});
  run_trials("reshape",
             [](const Tensor& t) {
               return ops::mul(ops::reshape(t, {4, 3}),
                               ops::reshape(t, {4, 3}));
             },
             -2, 2, {3, 4});
  run_trials("transpose",
             [&](const Tensor& t) { return ops::mul(ops::transpose(t), ops::transpose(t)); },
             -2, 2, {3, 4});
  run_trials("select_index",
             [](const Tensor& t) { return ops::select_index(t, 1, 2); }, -2, 2,
             {3, 4});
  run_trials("gather_rows",
             [](const Tensor& t) { return ops::gather_rows(t, {2, 0, 2}); },
             -2, 2, {3, 4});

  Tensor pa = tu::rand_tensor(aux, {2}, 0.4, 1.0);
  Tensor pd = tu::rand_tensor(aux, {2}, 0.5, 2.5);
  Tensor pr = tu::rand_tensor(aux, {2}, 0.3, 0.9);
  run_trials("pcen-x",
             [&](const Tensor& t) { return ops::pcen(t, pa, pd, pr, 0.04, 1e-6); },
             0.0, 2.0, {2, 6});
  Tensor px = tu::rand_tensor(aux, {2, 6}, 0.0, 2.0);
  run_trials("pcen-alpha",
             [&](const Tensor& t) { return ops::pcen(px, t, pd, pr, 0.04, 1e-6); },
             0.4, 1.0, {2});
  run_trials("pcen-delta",
             [&](const Tensor& t) { return ops::pcen(px, pa, t, pr, 0.04, 1e-6); },
             0.5, 2.5, {2});
  run_trials("pcen-r",
             [&](const Tensor& t) { return ops::pcen(px, pa, pd, t, 0.1, 1e-6); },
             0.3, 0.9, {2});
}

TEST_CASE("pcen matches the scalar recursion oracle") {
  Rng rng(11);
  Tensor x = tu::rand_tensor(rng, {4, 8}, 0.0, 3.0);
  Tensor a = Tensor::full({4}, 0.96);
  Tensor d = Tensor::full({4}, 2.0);
  Tensor r = Tensor::full({4}, 0.5);
  Tensor y = ops::pcen(x, a, d, r, 0.04, 1e-6);
  auto oracle = tu::naive_pcen(x.values(), 4, 8, a.values(), d.values(),
                               r.values(), 0.04, 1e-6);
  for (int64_t i = 0; i < y.numel(); ++i)
    CHECK(std::fabs(y.at(i) - oracle[static_cast<size_t>(i)]) < 1e-12);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(12);
  Tensor x = tu::rand_tensor(rng, {6}, -1.5, 1.5);
  auto f = [](const Tensor& t) { return ops::sum_all(ops::mul(t, ops::sin(t))); };
  auto g = [](const Tensor& t) { return ops::sum_all(ops::exp(t)); };
  const double a = 1.7, b = -0.6;
  Tensor gf = analytic_grad(f, x.clone());
  Tensor gg = analytic_grad(g, x.clone());
  Tensor gc = analytic_grad(
      [&](const Tensor& t) {
        return ops::add(ops::mul_scalar(f(t), a), ops::mul_scalar(g(t), b));
      },
      x.clone());
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(std::fabs(gc.at(i) - (a * gf.at(i) + b * gg.at(i))) < 1e-10);
}

TEST_CASE("composites of the primitive set pass the gradient check") {
  Rng rng(13);
  Tensor x = tu::rand_tensor(rng, {2, 12}, -2, 2);
  auto f = [](const Tensor& t) {
    Tensor k = Tensor::from({0.2, 0.5, 0.3, -0.1, 0.4, 0.25}, {1, 2, 3});
    Tensor c = ops::conv1d(ops::tanh(t), k, 1, ops::Pad::kSame);
    Tensor pooled = ops::max_pool(c, 1, 3, 3);
    return ops::sum_all(ops::mul(pooled, ops::sigmoid(pooled)));
  };
  double rel = check_primitive_grad(
      [&](const Tensor& t) { return f(t); }, x);
  CHECK(rel < 1e-4);
}

TEST_CASE("error contracts") {
  Rng rng(14);
  Tensor x = tu::rand_tensor(rng, {2, 8}, -1, 1);
  Tensor w = tu::rand_tensor(rng, {1, 3, 4}, -1, 1);
  CHECK_THROWS_WITH_AS(ops::conv1d(x, w),
                       doctest::Contains("conv1d"), ContractError);
  try {
    ops::conv1d(x, w);
  } catch (const ContractError& e) {
    std::string msg = e.what();
    CHECK(msg.find("(1, 3, 4)") != std::string::npos);
    CHECK(msg.find("(2, 8)") != std::string::npos);
  }

  // backward on a non-scalar is a contract error
  Tensor v = tu::rand_tensor(rng, {3}, -1, 1);
  v.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = ops::mul(v, v);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }

  // non-finite outputs are numeric faults, not values
  Tensor bad = Tensor::from({-1.0}, {1});
  CHECK_THROWS_AS(ops::log(bad), NumericFault);
  Tensor big = Tensor::from({1e308}, {1});
  CHECK_THROWS_AS(ops::mul(big, big), NumericFault);
}

TEST_CASE("tape bookkeeping") {
  Rng rng(15);
  Tensor x = tu::rand_tensor(rng, {4}, -1, 1);
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = ops::sum_all(ops::mul(x, x));
    CHECK(tape.size() == 2);
    GradMap grads = tape.backward(y);
    CHECK(grads.contains(x));
  }
  CHECK(tape.empty());  // cleared by backward

  // without a tape nothing records
  Tensor z = ops::mul(x, x);
  CHECK_FALSE(z.requires_grad());
  CHECK(tape.empty());

  // unused leaves still receive zero gradients
  Tensor a = tu::rand_tensor(rng, {2}, -1, 1);
  Tensor b = tu::rand_tensor(rng, {2}, -1, 1);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  {
    TapeScope scope(tape);
    Tensor y = ops::sum_all(a);
    Tensor unused = ops::mul(b, b);
    (void)unused;
    GradMap grads = tape.backward(y);
    CHECK(grads.contains(b));
    CHECK(grads.get(b).at(0) == 0.0);
    CHECK(grads.get(a).at(0) == 1.0);
  }
}

TEST_CASE("broadcasting follows the aligned-shape rules") {
  Tensor a = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
  Tensor col = Tensor::from({10, 20}, {2, 1});
  Tensor row = Tensor::from({1, 2, 3}, {3});
  Tensor s = Tensor::scalar(100);

  Tensor ac = ops::add(a, col);
  CHECK(ac.at(0, 0) == 11);
  CHECK(ac.at(1, 2) == 26);
  Tensor ar = ops::add(a, row);
  CHECK(ar.at(0, 0) == 2);
  CHECK(ar.at(1, 2) == 9);
  Tensor as = ops::add(a, s);
  CHECK(as.at(1, 1) == 105);
  Tensor outer = ops::mul(col, row);
  CHECK(outer.shape() == std::vector<int64_t>{2, 3});
  CHECK(outer.at(1, 2) == 60);

  CHECK_THROWS_AS(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})),
                  ContractError);
}
