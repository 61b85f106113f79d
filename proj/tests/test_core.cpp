#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "halo/geometry.hpp"
#include "halo/kernels.hpp"
#include "halo/rng.hpp"
#include "helpers.hpp"

using namespace halo;

namespace {

Mask single_pixel(int h, int w, int r, int c) {
  Mask m(h, w);
  m.at(r, c) = 1;
  return m;
}

}  // namespace

TEST_CASE("rng determinism and ranges") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.uniform_int(17) < 17);
  }
  CHECK(Rng::derive(1, 2) != Rng::derive(1, 3));
  CHECK(Rng::derive(1, 2) == Rng::derive(1, 2));
}

TEST_CASE("dilate: single pixel r=3 gives a 3x3 block") {
  Mask m = single_pixel(11, 11, 5, 5);
  Mask d = geom::dilate(m, 3);
  CHECK(d.count() == 9);
  for (int r = 4; r <= 6; ++r)
    for (int c = 4; c <= 6; ++c) CHECK(d.at(r, c) == 1);
}

TEST_CASE("dilate: r=1 is the identity") {
  Rng rng(3);
  Mask m(16, 16);
  for (auto& v : m.v) v = rng.uniform() < 0.3 ? 1 : 0;
  m.at(8, 8) = 1;
  Mask d = geom::dilate(m, 1);
  CHECK(d.v == m.v);
}

TEST_CASE("dilate: saturation on the all-ones mask") {
  Mask m(9, 9);
  for (auto& v : m.v) v = 1;
  CHECK(geom::dilate(m, 15).count() == 81);
}

TEST_CASE("dilate: extensive and monotone in r") {
  Rng rng(5);
  Mask m(20, 20);
  for (auto& v : m.v) v = rng.uniform() < 0.1 ? 1 : 0;
  m.at(10, 10) = 1;
  Mask d3 = geom::dilate(m, 3), d5 = geom::dilate(m, 5);
  for (size_t i = 0; i < m.v.size(); ++i) {
    CHECK(d3.v[i] >= m.v[i]);
    CHECK(d5.v[i] >= d3.v[i]);
  }
}

TEST_CASE("dilate rejects even r and empty masks") {
  Mask m = single_pixel(8, 8, 4, 4);
  CHECK_THROWS_AS(geom::dilate(m, 4), Error);
  Mask e(8, 8);
  CHECK_THROWS_AS(geom::dilate(e, 3), Error);
}

TEST_CASE("differential_ring: single pixel r=3 eps=2 is the 3x3 block minus center") {
  Mask m = single_pixel(11, 11, 5, 5);
  Mask band = geom::differential_ring(m, 3, 2);
  CHECK(band.count() == 8);
  CHECK(band.at(5, 5) == 0);
  for (int r = 4; r <= 6; ++r)
    for (int c = 4; c <= 6; ++c)
      if (r != 5 || c != 5) CHECK(band.at(r, c) == 1);
}

TEST_CASE("differential_ring: eps=0 band is empty (set difference with itself)") {
  Mask m = single_pixel(9, 9, 4, 4);
  CHECK_THROWS_AS(geom::differential_ring(m, 3, 0), Error);
}

TEST_CASE("differential_ring is disjoint from the inner dilation") {
  Rng rng(11);
  Mask m(24, 24);
  for (int r = 9; r <= 14; ++r)
    for (int c = 8; c <= 15; ++c) m.at(r, c) = 1;
  Mask band = geom::differential_ring(m, 7, 4);
  Mask inner = geom::dilate(m, 3);
  for (size_t i = 0; i < m.v.size(); ++i) CHECK((band.v[i] & inner.v[i]) == 0);
}

TEST_CASE("sample_points: exhaustive draw and determinism") {
  Mask m(8, 8);
  m.at(1, 1) = m.at(2, 5) = m.at(6, 3) = 1;
  Rng r1(42), r2(42);
  auto a = geom::sample_points(m, 3, r1);
  auto b = geom::sample_points(m, 3, r2);
  CHECK(a.size() == 3);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].row == b[i].row);
    CHECK(a[i].col == b[i].col);
  }
  // all three region pixels must be present
  int found = 0;
  for (const auto& p : a)
    found += (p.row == 1 && p.col == 1) || (p.row == 2 && p.col == 5) || (p.row == 6 && p.col == 3);
  CHECK(found == 3);
}

TEST_CASE("sample_points falls back to replacement for tiny regions") {
  Mask m = single_pixel(6, 6, 2, 3);
  Rng rng(9);
  auto pts = geom::sample_points(m, 4, rng);
  CHECK(pts.size() == 4);
  for (const auto& p : pts) {
    CHECK(p.row == 2);
    CHECK(p.col == 3);
  }
}

TEST_CASE("canonical_order: E,S,W,N around the anchor") {
  Point anchor{5, 5};
  std::vector<Point> pts = {{1, 5}, {5, 9}, {9, 5}, {5, 1}};  // N, E, S, W
  auto out = geom::canonical_order(pts, anchor);
  CHECK(out[0].col == 9);  // E
  CHECK(out[1].row == 9);  // S
  CHECK(out[2].col == 1);  // W
  CHECK(out[3].row == 1);  // N
}

TEST_CASE("canonical_order: coincident points keep input order") {
  Point anchor{2, 2};
  std::vector<Point> pts = {{2, 2}, {2, 2}, {2, 2}};
  auto out = geom::canonical_order(pts, anchor);
  CHECK(out.size() == 3);
}

TEST_CASE("canonical_order is permutation-invariant and idempotent") {
  Rng rng(17);
  std::vector<Point> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({rng.uniform(0, 20), rng.uniform(0, 20)});
  Point anchor{10, 10};
  auto sorted1 = geom::canonical_order(pts, anchor);
  std::vector<Point> shuffled = pts;
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_int(i)]);
  auto sorted2 = geom::canonical_order(shuffled, anchor);
  auto sorted3 = geom::canonical_order(sorted1, anchor);
  for (size_t i = 0; i < pts.size(); ++i) {
    CHECK(sorted1[i].row == sorted2[i].row);
    CHECK(sorted1[i].col == sorted2[i].col);
    CHECK(sorted1[i].row == sorted3[i].row);
  }
}

TEST_CASE("gaussian_heatmap: center value 1, distance sigma gives e^-1/2") {
  Tensor h = geom::gaussian_heatmap({8, 8}, 4.0, 17, 17);
  CHECK(h.at(8, 8) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h.at(8, 12) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(h.at(12, 8) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  for (int64_t i = 0; i < h.size(); ++i) {
    CHECK(h[i] > 0.0);
    CHECK(h[i] <= 1.0);
  }
  CHECK_THROWS_AS(geom::gaussian_heatmap({1, 1}, 0.0, 4, 4), Error);
}

TEST_CASE("gaussian_heatmap radial symmetry is exact") {
  Tensor h = geom::gaussian_heatmap({6, 6}, 2.5, 13, 13);
  CHECK(h.at(6, 9) == h.at(6, 3));
  CHECK(h.at(9, 6) == h.at(3, 6));
  CHECK(h.at(2, 2) == h.at(10, 10));
}

TEST_CASE("gaussian_heatmap matches the loop oracle") {
  Rng rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    const double row = rng.uniform(0, 9), col = rng.uniform(0, 9), sigma = rng.uniform(0.5, 6);
    Tensor h = geom::gaussian_heatmap({row, col}, sigma, 10, 10);
    for (int u = 0; u < 10; ++u)
      for (int v = 0; v < 10; ++v) {
        const double expect =
            std::exp(-((u - row) * (u - row) + (v - col) * (v - col)) / (2 * sigma * sigma));
        CHECK(std::abs(h.at(u, v) - expect) < 1e-9);
      }
  }
}

TEST_CASE("bilinear_sample: integer points, midpoints and the 2x2 fixture") {
  Tensor f = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  CHECK(geom::bilinear_sample(f, {0, 0})[0] == 1.0);
  CHECK(geom::bilinear_sample(f, {0, 0.5})[0] == doctest::Approx(1.5));
  CHECK(geom::bilinear_sample(f, {0.25, 0.75})[0] == doctest::Approx(2.25));
  // out-of-range points clamp
  CHECK(geom::bilinear_sample(f, {-3, 0})[0] == 1.0);
  CHECK(geom::bilinear_sample(f, {5, 5})[0] == 4.0);
}

TEST_CASE("bilinear_sample matches the loop oracle on random points") {
  Rng rng(31);
  Tensor f = test::random_tensor({3, 7, 9}, rng);
  for (int rep = 0; rep < 100; ++rep) {
    const double r = rng.uniform(0, 6), c = rng.uniform(0, 8);
    auto got = geom::bilinear_sample(f, {r, c});
    const int r0 = static_cast<int>(r), c0 = static_cast<int>(c);
    const int r1 = std::min(r0 + 1, 6), c1 = std::min(c0 + 1, 8);
    const double tr = r - r0, tc = c - c0;
    for (int ch = 0; ch < 3; ++ch) {
      const double expect = (1 - tr) * ((1 - tc) * f.at(ch, r0, c0) + tc * f.at(ch, r0, c1)) +
                            tr * ((1 - tc) * f.at(ch, r1, c0) + tc * f.at(ch, r1, c1));
      CHECK(std::abs(got[static_cast<size_t>(ch)] - expect) < 1e-9);
    }
  }
}

TEST_CASE("bilinear_sample is linear in the feature map") {
  Rng rng(37);
  Tensor f = test::random_tensor({2, 5, 5}, rng);
  Tensor g = test::random_tensor({2, 5, 5}, rng);
  const double a = 0.7, b = -1.3;
  Tensor mix({2, 5, 5});
  for (int64_t i = 0; i < mix.size(); ++i) mix[i] = a * f[i] + b * g[i];
  Point p{2.3, 1.7};
  auto sf = geom::bilinear_sample(f, p), sg = geom::bilinear_sample(g, p),
       sm = geom::bilinear_sample(mix, p);
  for (int ch = 0; ch < 2; ++ch)
    CHECK(sm[static_cast<size_t>(ch)] ==
          doctest::Approx(a * sf[static_cast<size_t>(ch)] + b * sg[static_cast<size_t>(ch)])
              .epsilon(1e-12));
}

TEST_CASE("argmax_location: peak, constant, and tie rules") {
  Tensor h({9, 9});
  h.at(7, 3) = 2.0;
  Point p = geom::argmax_location(h);
  CHECK(p.row == 7);
  CHECK(p.col == 3);

  Tensor c({4, 4}, 1.0);
  Point pc = geom::argmax_location(c);
  CHECK(pc.row == 0);
  CHECK(pc.col == 0);

  Tensor two({6, 6});
  two.at(2, 5) = 3.0;
  two.at(4, 1) = 3.0;
  Point pt = geom::argmax_location(two);
  CHECK(pt.row == 2);
  CHECK(pt.col == 5);
}

TEST_CASE("masked_average_pool: constant, delta and hand-computed fixtures") {
  Tensor f({2, 1, 2});
  f.at(0, 0, 0) = 1;
  f.at(0, 0, 1) = 3;
  f.at(1, 0, 0) = 5;
  f.at(1, 0, 1) = 7;
  // delta weights pick out one pixel
  Tensor w = Tensor::from({1, 2}, {0, 1});
  auto v = geom::masked_average_pool(f, w);
  CHECK(v[0] == 3.0);
  CHECK(v[1] == 7.0);
  // the 1x2 fixture: features [1,3], weights [1,3] -> 2.5
  Tensor f2 = Tensor::from({1, 1, 2}, {1, 3});
  Tensor w2 = Tensor::from({1, 2}, {1, 3});
  CHECK(geom::masked_average_pool(f2, w2)[0] == doctest::Approx(2.5).epsilon(1e-12));
  // constant feature map
  Tensor fc({3, 4, 4}, 2.5);
  Tensor wc({4, 4}, 0.37);
  auto vc = geom::masked_average_pool(fc, wc);
  for (double x : vc) CHECK(x == doctest::Approx(2.5).epsilon(1e-12));
  // zero weights error
  Tensor wz({4, 4}, 0.0);
  CHECK_THROWS_AS(geom::masked_average_pool(fc, wz), Error);
}

TEST_CASE("masked_average_pool: scale invariance and convex-combination bounds") {
  Rng rng(41);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor f = test::random_tensor({2, 5, 5}, rng, -3, 3);
    Tensor w = test::random_tensor({5, 5}, rng, 0.0, 1.0);
    auto a = geom::masked_average_pool(f, w);
    Tensor w2 = w;
    for (int64_t i = 0; i < w2.size(); ++i) w2[i] *= 17.0;
    auto b = geom::masked_average_pool(f, w2);
    for (int ch = 0; ch < 2; ++ch) {
      CHECK(std::abs(a[static_cast<size_t>(ch)] - b[static_cast<size_t>(ch)]) < 1e-6);
      double lo = 1e300, hi = -1e300;
      for (int i = 0; i < 25; ++i) {
        lo = std::min(lo, f[ch * 25 + i]);
        hi = std::max(hi, f[ch * 25 + i]);
      }
      CHECK(a[static_cast<size_t>(ch)] >= lo - 1e-12);
      CHECK(a[static_cast<size_t>(ch)] <= hi + 1e-12);
    }
  }
}

// loop-oracle MAP against the kernel, 100 random cases (acceptance formula gate)
TEST_CASE("masked_average_pool matches the loop oracle") {
  Rng rng(43);
  for (int rep = 0; rep < 100; ++rep) {
    const int c = 1 + static_cast<int>(rng.uniform_int(4));
    const int h = 2 + static_cast<int>(rng.uniform_int(5));
    const int w = 2 + static_cast<int>(rng.uniform_int(5));
    Tensor f = test::random_tensor({c, h, w}, rng, -2, 2);
    Tensor wt = test::random_tensor({h, w}, rng, 0.001, 1.0);
    auto got = geom::masked_average_pool(f, wt);
    for (int ch = 0; ch < c; ++ch) {
      double num = 0, den = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          num += f.at(ch, y, x) * wt.at(y, x);
          den += wt.at(y, x);
        }
      CHECK(std::abs(got[static_cast<size_t>(ch)] - num / den) < 1e-9);
    }
  }
}

// ---------------------------------------------------------------------------
// serial/parallel kernel equivalence: the parallel lane must be bit-exact

namespace {

template <class F>
void check_modes_equal(F run, std::vector<double>& out_serial, std::vector<double>& out_parallel) {
  kernels::set_mode(kernels::Mode::Serial);
  run(out_serial);
  kernels::set_mode(kernels::Mode::Parallel);
  run(out_parallel);
  kernels::set_mode(kernels::Mode::Parallel);
  REQUIRE(out_serial.size() == out_parallel.size());
  for (size_t i = 0; i < out_serial.size(); ++i) {
    CHECK(out_serial[i] == out_parallel[i]);  // bitwise
  }
}

}  // namespace

TEST_CASE("kernels: serial and parallel modes are bitwise identical") {
  Rng rng(53);
  const int m = 33, k = 17, n = 29;
  Tensor a = test::random_tensor({m, k}, rng), b = test::random_tensor({k, n}, rng);
  std::vector<double> s, p;
  check_modes_equal(
      [&](std::vector<double>& out) {
        out.assign(static_cast<size_t>(m) * n, 0.0);
        kernels::matmul(a.data(), m, k, b.data(), n, out.data());
      },
      s, p);

  Tensor x = test::random_tensor({3, 13, 11}, rng);
  Tensor w = test::random_tensor({5, 3, 3, 3}, rng);
  Tensor bias = test::random_tensor({5}, rng);
  const int ho = kernels::conv_out_dim(13, 3, 2, 1), wo = kernels::conv_out_dim(11, 3, 2, 1);
  check_modes_equal(
      [&](std::vector<double>& out) {
        out.assign(static_cast<size_t>(5) * ho * wo, 0.0);
        kernels::conv2d_forward(x.data(), 3, 13, 11, w.data(), 5, 3, 3, bias.data(), 2, 1,
                                out.data());
      },
      s, p);

  const int t = 37, c = 8, heads = 2;
  Tensor q = test::random_tensor({t, c}, rng), kk = test::random_tensor({t, c}, rng),
         v = test::random_tensor({t, c}, rng), bv = test::random_tensor({t}, rng);
  check_modes_equal(
      [&](std::vector<double>& out) {
        out.assign(static_cast<size_t>(t) * c, 0.0);
        kernels::attention_forward(q.data(), kk.data(), v.data(), bv.data(), t, c, heads,
                                   out.data());
      },
      s, p);

  Tensor dout = test::random_tensor({t, c}, rng);
  check_modes_equal(
      [&](std::vector<double>& out) {
        out.assign(static_cast<size_t>(3) * t * c + t, 0.0);
        kernels::attention_backward(q.data(), kk.data(), v.data(), bv.data(), dout.data(), t, c,
                                    heads, out.data(), out.data() + t * c, out.data() + 2 * t * c,
                                    out.data() + 3 * t * c);
      },
      s, p);

  check_modes_equal(
      [&](std::vector<double>& out) {
        out.assign(100, 0.0);
        kernels::gaussian_stamp(4.4, 6.1, 2.0, 10, 10, out.data());
      },
      s, p);
}

TEST_CASE("attention kernel agrees with a naive dense reference") {
  Rng rng(59);
  const int t = 19, c = 8, heads = 4, dh = c / heads;
  Tensor q = test::random_tensor({t, c}, rng), k = test::random_tensor({t, c}, rng),
         v = test::random_tensor({t, c}, rng), bias = test::random_tensor({t}, rng);
  Tensor out({t, c});
  kernels::attention_forward(q.data(), k.data(), v.data(), bias.data(), t, c, heads, out.data());

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h)
    for (int ti = 0; ti < t; ++ti) {
      std::vector<double> logits(static_cast<size_t>(t));
      double mx = -1e300;
      for (int j = 0; j < t; ++j) {
        double dot = 0;
        for (int d = 0; d < dh; ++d) dot += q.at(ti, h * dh + d) * k.at(j, h * dh + d);
        logits[static_cast<size_t>(j)] = dot * scale + bias[j];
        mx = std::max(mx, logits[static_cast<size_t>(j)]);
      }
      double denom = 0;
      for (int j = 0; j < t; ++j) denom += std::exp(logits[static_cast<size_t>(j)] - mx);
      // row sums to 1 by construction; compare outputs and check weights
      double wsum = 0;
      for (int j = 0; j < t; ++j) wsum += std::exp(logits[static_cast<size_t>(j)] - mx) / denom;
      CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));
      for (int d = 0; d < dh; ++d) {
        double acc = 0;
        for (int j = 0; j < t; ++j)
          acc += std::exp(logits[static_cast<size_t>(j)] - mx) / denom * v.at(j, h * dh + d);
        CHECK(out.at(ti, h * dh + d) == doctest::Approx(acc).epsilon(1e-10));
      }
    }
}
