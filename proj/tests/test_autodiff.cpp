#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "halo/autodiff.hpp"
#include "helpers.hpp"

using namespace halo;
using test::gradcheck_params;
using test::random_tensor;

namespace {
constexpr double kTol = 1e-3;

// Sum of squares keeps every loss scalar and smooth.
ad::Var sq_sum(ad::Tape& t, ad::Var v) { return t.sum(t.mul(v, v)); }
}  // namespace

TEST_CASE("gradcheck: elementwise ops") {
  Rng rng(1);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({3, 4}, rng));
  const int b = ps.add("b", random_tensor({3, 4}, rng, 0.2, 1.5));
  auto build = [&](ad::Tape& t) {
    ad::Var x = t.param(a), y = t.param(b);
    ad::Var z = t.mul(t.add(x, y), t.sub(x, t.scale(y, 0.5)));
    z = t.add_const(t.relu(z), 0.1);
    z = t.mul(t.sigmoid(z), t.tanh_(t.scale(z, 0.7)));
    return sq_sum(t, z);
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: scalar broadcast ops") {
  Rng rng(2);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({2, 5}, rng));
  const int s = ps.add("s", random_tensor({1}, rng, 0.3, 0.9));
  auto build = [&](ad::Tape& t) {
    ad::Var x = t.scalar_mul(t.param(a), t.sigmoid(t.param(s)));
    x = t.add_scalarvar(x, t.param(s));
    return sq_sum(t, x);
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: matmul/transpose/affine/broadcast rows") {
  Rng rng(3);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({4, 3}, rng));
  const int b = ps.add("b", random_tensor({3, 5}, rng));
  const int v = ps.add("v", random_tensor({5}, rng));
  const int w = ps.add("w", random_tensor({5, 2}, rng));
  const int bias = ps.add("bias", random_tensor({2}, rng));
  auto build = [&](ad::Tape& t) {
    ad::Var m = t.matmul(t.param(a), t.param(b));        // [4,5]
    m = t.broadcast_add_row(m, t.param(v));              // [4,5]
    ad::Var r = t.row(t.transpose(m), 2);                // [4]
    ad::Var f = t.affine(t.row(m, 1), t.param(w), t.param(bias));  // [2]
    return t.add(sq_sum(t, r), sq_sum(t, f));
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: softmax, logsumexp, cosine rows") {
  Rng rng(4);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({3, 4}, rng));
  const int v = ps.add("v", random_tensor({4}, rng, 0.4, 1.2));
  auto build = [&](ad::Tape& t) {
    ad::Var sm = t.softmax_rows(t.param(a));
    ad::Var lse = t.logsumexp(t.row(sm, 0));
    ad::Var cr = t.cos_rows(t.param(a), t.param(v));
    return t.add(t.add(lse, sq_sum(t, cr)), sq_sum(t, sm));
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: row_sums/rsqrt/scale_rows/scale_cols (graph normalization path)") {
  Rng rng(5);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({4, 4}, rng, 0.1, 1.0));
  auto build = [&](ad::Tape& t) {
    ad::Var adj = t.softmax_rows(t.param(a));
    ad::Var d = t.rsqrt(t.row_sums(adj));
    ad::Var norm = t.scale_cols(t.scale_rows(adj, d), d);
    return sq_sum(t, norm);
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: conv2d stride 1 and 2") {
  Rng rng(6);
  for (int stride = 1; stride <= 2; ++stride) {
    ad::ParamStore ps;
    const int x = ps.add("x", random_tensor({2, 6, 6}, rng));
    const int w = ps.add("w", random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5));
    const int b = ps.add("b", random_tensor({3}, rng));
    auto build = [&, stride](ad::Tape& t) {
      return sq_sum(t, t.conv2d(t.param(x), t.param(w), t.param(b), stride, 1));
    };
    CHECK(gradcheck_params(ps, build) < kTol);
  }
}

TEST_CASE("gradcheck: bilinear resize") {
  Rng rng(7);
  ad::ParamStore ps;
  const int x = ps.add("x", random_tensor({2, 4, 4}, rng));
  auto build = [&](ad::Tape& t) { return sq_sum(t, t.resize_bilinear(t.param(x), 8, 8)); };
  CHECK(gradcheck_params(ps, build) < kTol);
  ad::ParamStore ps2;
  const int y = ps2.add("y", random_tensor({2, 6, 6}, rng));
  auto build2 = [&](ad::Tape& t) { return sq_sum(t, t.resize_bilinear(t.param(y), 3, 3)); };
  CHECK(gradcheck_params(ps2, build2) < kTol);
}

TEST_CASE("gradcheck: layer norm") {
  Rng rng(8);
  ad::ParamStore ps;
  const int x = ps.add("x", random_tensor({5, 6}, rng));
  const int g = ps.add("g", random_tensor({6}, rng, 0.5, 1.5));
  const int b = ps.add("b", random_tensor({6}, rng));
  auto build = [&](ad::Tape& t) {
    return sq_sum(t, t.layer_norm(t.param(x), t.param(g), t.param(b)));
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: attention with per-key bias") {
  Rng rng(9);
  ad::ParamStore ps;
  const int q = ps.add("q", random_tensor({7, 8}, rng));
  const int k = ps.add("k", random_tensor({7, 8}, rng));
  const int v = ps.add("v", random_tensor({7, 8}, rng));
  const int bias = ps.add("bias", random_tensor({7}, rng));
  auto build = [&](ad::Tape& t) {
    return sq_sum(t, t.attention(t.param(q), t.param(k), t.param(v), t.param(bias), 2));
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: cosine map / mul_map / calibrate / map_pool") {
  Rng rng(10);
  ad::ParamStore ps;
  const int f = ps.add("f", random_tensor({3, 4, 4}, rng, 0.2, 1.0));
  const int p = ps.add("p", random_tensor({3}, rng, 0.3, 1.0));
  Tensor wstack = random_tensor({2, 4, 4}, rng, 0.05, 1.0);
  auto build = [&](ad::Tape& t) {
    ad::Var raw = t.cosine_map(t.param(f), t.param(p));
    ad::Var cal = t.calibrate(raw, 1e-6);
    ad::Var one_minus = t.add_const(t.scale(raw, -1.0), 1.0);
    ad::Var sup = t.mul_map(t.param(f), one_minus);
    ad::Var pooled = t.map_pool(sup, wstack);
    Tensor target({4, 4}, 0.4);
    return t.add(t.bce_mean(cal, target), sq_sum(t, pooled));
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: bilinear_sample w.r.t. features and points") {
  Rng rng(11);
  ad::ParamStore ps;
  const int f = ps.add("f", random_tensor({2, 6, 6}, rng));
  // points away from integer kinks and borders
  const int pts = ps.add("pts", Tensor::from({3, 2}, {1.3, 2.6, 3.4, 1.2, 4.3, 4.6}));
  const int w = ps.add("w", random_tensor({3}, rng, 0.2, 1.0));
  auto build = [&](ad::Tape& t) {
    ad::Var samples = t.bilinear_sample(t.param(f), t.param(pts));
    ad::Var agg = t.weighted_rows(t.softmax_rows(t.param(w)), samples);
    return sq_sum(t, agg);
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: losses (sse, bce, point distance)") {
  Rng rng(12);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({3, 3}, rng));
  const int p = ps.add("p", random_tensor({4, 2}, rng, 1.0, 4.0));
  Tensor target = random_tensor({3, 3}, rng);
  Tensor gt = random_tensor({4, 2}, rng, 1.0, 4.0);
  auto build = [&](ad::Tape& t) {
    ad::Var c = t.calibrate(t.tanh_(t.param(a)), 1e-6);
    Tensor bce_target({3, 3}, 1.0);
    bce_target[0] = 0.0;
    bce_target[4] = 0.0;
    return t.add(t.add(t.sse(t.param(a), target), t.bce_mean(c, bce_target)),
                 t.mean_sq_point_dist(t.param(p), gt));
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("gradcheck: stack_rows / concat / clamp path") {
  Rng rng(13);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({4}, rng));
  const int b = ps.add("b", random_tensor({4}, rng));
  auto build = [&](ad::Tape& t) {
    ad::Var cat = t.concat(t.param(a), t.param(b));       // [8]
    ad::Var mat = t.stack_rows({t.param(a), t.param(b)}); // [2,4]
    return t.add(sq_sum(t, cat), sq_sum(t, mat));
  };
  CHECK(gradcheck_params(ps, build) < kTol);
}

TEST_CASE("backward accumulates into shared parameters used twice") {
  Rng rng(14);
  ad::ParamStore ps;
  const int a = ps.add("a", random_tensor({3, 3}, rng));
  auto build = [&](ad::Tape& t) {
    ad::Var x = t.param(a);
    return t.sum(t.mul(x, x));  // d/dx = 2x
  };
  ps.zero_grad();
  ad::Tape t(&ps);
  t.backward(build(t));
  for (int64_t i = 0; i < 9; ++i)
    CHECK(ps.at(a).grad[i] == doctest::Approx(2.0 * ps.at(a).value[i]).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one within 1e-6") {
  Rng rng(15);
  ad::Tape t;
  ad::Var sm = t.softmax_rows(t.constant(random_tensor({6, 9}, rng, -5, 5)));
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 9; ++j) s += t.val(sm).at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}
