#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "halo/losses.hpp"
#include "helpers.hpp"

using namespace halo;
using test::gradcheck_params;
using test::random_tensor;

namespace {
constexpr double kTol = 1e-3;

double cosv(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}
}  // namespace

TEST_CASE("rac_loss: equal similarities give exactly ln N_p") {
  ad::Tape t;
  const int np = 10, c = 4;
  // pos == every negative == the same vector: all cosines equal
  Tensor fg = Tensor::from({c}, {1, 2, 3, 4});
  Tensor pos = Tensor::from({c}, {2, 4, 6, 8});  // parallel -> cos = 1
  Tensor bg({np, c});
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < c; ++j) bg.at(i, j) = 3.0 * fg[j];  // parallel rows
  ad::Var l = rac_loss(t, t.constant(fg), t.constant(pos), t.constant(bg), 0.1, false);
  CHECK(t.val(l)[0] == doctest::Approx(std::log(10.0)).epsilon(1e-9));
}

TEST_CASE("rac_loss: pos cos 1, negatives -1, tau 1 -> ln10 - 2") {
  ad::Tape t;
  const int np = 10, c = 3;
  Tensor fg = Tensor::from({c}, {1, 0, 0});
  Tensor pos = Tensor::from({c}, {2, 0, 0});
  Tensor bg({np, c});
  for (int i = 0; i < np; ++i) bg.at(i, 0) = -1.0;
  ad::Var l = rac_loss(t, t.constant(fg), t.constant(pos), t.constant(bg), 1.0, false);
  CHECK(t.val(l)[0] == doctest::Approx(std::log(10.0) - 2.0).epsilon(1e-9));
}

TEST_CASE("rac_loss matches a loop oracle on random inputs") {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const int np = 2 + static_cast<int>(rng.uniform_int(6));
    const int c = 2 + static_cast<int>(rng.uniform_int(5));
    std::vector<double> fg(static_cast<size_t>(c)), pos(static_cast<size_t>(c));
    for (auto& x : fg) x = rng.uniform(-1, 1) + 0.1;
    for (auto& x : pos) x = rng.uniform(-1, 1) + 0.1;
    Tensor bg({np, c});
    std::vector<std::vector<double>> bgv(static_cast<size_t>(np),
                                         std::vector<double>(static_cast<size_t>(c)));
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < c; ++j) bg.at(i, j) = bgv[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                                      rng.uniform(-1, 1) + 0.1;
    const double tau = rng.uniform(0.05, 1.0);
    for (bool include_pos : {false, true}) {
      ad::Tape t;
      ad::Var l = rac_loss(t, t.constant(Tensor::from({c}, fg)),
                           t.constant(Tensor::from({c}, pos)), t.constant(bg), tau, include_pos);
      double denom = include_pos ? std::exp(cosv(fg, pos) / tau) : 0.0;
      for (int i = 0; i < np; ++i) denom += std::exp(cosv(fg, bgv[static_cast<size_t>(i)]) / tau);
      const double expect = -std::log(std::exp(cosv(fg, pos) / tau) / denom);
      CHECK(std::abs(t.val(l)[0] - expect) < 1e-9);
    }
  }
}

TEST_CASE("rac_loss: decreasing in pos similarity, increasing in negative similarity") {
  // directional perturbation of the underlying vectors
  ad::Tape t;
  const int c = 3;
  Tensor fg = Tensor::from({c}, {1, 0.2, -0.1});
  Tensor pos = Tensor::from({c}, {0.8, 0.4, 0.3});
  Tensor bg = Tensor::from({3, c}, {0.1, 0.9, 0.2, -0.4, 0.2, 0.6, 0.5, -0.7, 0.1});
  auto eval = [&](const Tensor& p, const Tensor& b) {
    ad::Tape tt;
    return tt.val(rac_loss(tt, tt.constant(fg), tt.constant(p), tt.constant(b), 0.1, false))[0];
  };
  const double base = eval(pos, bg);
  // rotate pos toward fg -> higher cos -> lower loss
  Tensor pos_hi = pos;
  for (int j = 0; j < c; ++j) pos_hi[j] = pos[j] + 0.2 * fg[j];
  CHECK(eval(pos_hi, bg) < base);
  // rotate a negative toward fg -> higher similarity -> higher loss
  Tensor bg_hi = bg;
  for (int j = 0; j < c; ++j) bg_hi.at(1, j) += 0.3 * fg[j];
  CHECK(eval(pos, bg_hi) > base);
}

TEST_CASE("rac_loss rejects zero vectors and bad tau") {
  ad::Tape t;
  Tensor fg({3}, 0.0), ok = Tensor::from({3}, {1, 0, 0}), bg({2, 3}, 0.5);
  CHECK_THROWS_AS(rac_loss(t, t.constant(fg), t.constant(ok), t.constant(bg), 0.1, false), Error);
  CHECK_THROWS_AS(rac_loss(t, t.constant(ok), t.constant(ok), t.constant(bg), 0.0, false), Error);
}

TEST_CASE("positive_prototype: 5x5 mask with e=3 averages the 16 perimeter pixels") {
  ad::Tape t;
  const int s = 9;
  Mask m(s, s);
  for (int r = 2; r <= 6; ++r)
    for (int c = 2; c <= 6; ++c) m.at(r, c) = 1;
  // feature = row index, so the perimeter mean is computable by hand
  Tensor f({1, s, s});
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) f.at(0, r, c) = r;
  ad::Var p = positive_prototype(t, t.constant(f), m, 3);
  // perimeter rows: 5 at r=2, 5 at r=6, 2 each at r=3,4,5 -> mean = 4
  CHECK(t.val(p)[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("positive_prototype falls back to the whole mask when erosion empties it") {
  ad::Tape t;
  Mask thin(8, 8);
  for (int c = 1; c < 7; ++c) thin.at(4, c) = 1;  // 1px-thick line
  Tensor f({1, 8, 8});
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) f.at(0, r, c) = c;
  ad::Var p = positive_prototype(t, t.constant(f), thin, 2);
  CHECK(t.val(p)[0] == doctest::Approx((1 + 2 + 3 + 4 + 5 + 6) / 6.0).epsilon(1e-12));
  // constant features give the constant
  Tensor fc({2, 8, 8}, 0.7);
  Mask m(8, 8);
  for (int r = 2; r <= 5; ++r)
    for (int c = 2; c <= 5; ++c) m.at(r, c) = 1;
  ad::Var pc = positive_prototype(t, t.constant(fc), m, 2);
  CHECK(t.val(pc)[0] == doctest::Approx(0.7));
  CHECK(t.val(pc)[1] == doctest::Approx(0.7));
}

TEST_CASE("heatmap_loss: zero at target, constant offset gives 2 delta^2") {
  ad::Tape t;
  Rng rng(5);
  Tensor target = random_tensor({2, 3, 3}, rng, 0.0, 1.0);
  ad::Var same = heatmap_loss(t, t.constant(target), t.constant(target), target);
  CHECK(t.val(same)[0] == 0.0);

  const double delta = 0.37;
  Tensor off = target;
  for (int64_t i = 0; i < off.size(); ++i) off[i] += delta;
  ad::Var l = heatmap_loss(t, t.constant(off), t.constant(off), target);
  CHECK(t.val(l)[0] == doctest::Approx(2.0 * delta * delta).epsilon(1e-9));
}

TEST_CASE("heatmap_loss matches the loop oracle") {
  Rng rng(6);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor a = random_tensor({2, 3, 3}, rng), b = random_tensor({2, 3, 3}, rng),
           gt = random_tensor({2, 3, 3}, rng);
    ad::Tape t;
    ad::Var l = heatmap_loss(t, t.constant(a), t.constant(b), gt);
    double acc = 0;
    for (int64_t i = 0; i < a.size(); ++i)
      acc += (a[i] - gt[i]) * (a[i] - gt[i]) + (b[i] - gt[i]) * (b[i] - gt[i]);
    CHECK(std::abs(t.val(l)[0] - acc / 18.0) < 1e-9);
  }
}

TEST_CASE("coord_loss: identical lists, uniform shift, hand fixture") {
  ad::Tape t;
  std::vector<Point> gt = {{1, 2}, {3, 4}, {5, 6}};
  Tensor pred({3, 2});
  for (int i = 0; i < 3; ++i) {
    pred.at(i, 0) = gt[static_cast<size_t>(i)].row;
    pred.at(i, 1) = gt[static_cast<size_t>(i)].col;
  }
  CHECK(t.val(coord_loss(t, t.constant(pred), gt))[0] == 0.0);

  Tensor shifted = pred;
  for (int i = 0; i < 3; ++i) {
    shifted.at(i, 0) += 3.0;
    shifted.at(i, 1) += 4.0;
  }
  CHECK(t.val(coord_loss(t, t.constant(shifted), gt))[0] == doctest::Approx(25.0).epsilon(1e-12));

  std::vector<Point> gt2 = {{0, 0}, {0, 0}};
  Tensor p2 = Tensor::from({2, 2}, {1, 0, 0, 2});
  CHECK(t.val(coord_loss(t, t.constant(p2), gt2))[0] == doctest::Approx(2.5).epsilon(1e-12));

  CHECK_THROWS_AS(coord_loss(t, t.constant(pred), gt2), Error);
}

TEST_CASE("coord_loss matches the loop oracle") {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform_int(6));
    Tensor pred = random_tensor({n, 2}, rng, 0, 10);
    std::vector<Point> gt;
    for (int i = 0; i < n; ++i) gt.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
    ad::Tape t;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const double dr = pred.at(i, 0) - gt[static_cast<size_t>(i)].row;
      const double dc = pred.at(i, 1) - gt[static_cast<size_t>(i)].col;
      acc += dr * dr + dc * dc;
    }
    CHECK(std::abs(t.val(coord_loss(t, t.constant(pred), gt))[0] - acc / n) < 1e-9);
  }
}

TEST_CASE("foreground_loss: 0.5 map gives ln 2; clamped extremes are tiny") {
  ad::Tape t;
  Mask m(4, 4);
  m.at(1, 1) = m.at(2, 2) = 1;
  Tensor half({4, 4}, 0.5);
  CHECK(t.val(foreground_loss(t, t.constant(half), m))[0] ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor sharp({4, 4});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) sharp.at(r, c) = m.at(r, c) ? 1.0 - 1e-6 : 1e-6;
  CHECK(t.val(foreground_loss(t, t.constant(sharp), m))[0] < 1e-4);
}

TEST_CASE("foreground_loss matches the loop oracle") {
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor p = random_tensor({4, 4}, rng, 0.01, 0.99);
    Mask m(4, 4);
    for (auto& v : m.v) v = rng.uniform() < 0.5 ? 1 : 0;
    ad::Tape t;
    double acc = 0;
    for (int64_t i = 0; i < p.size(); ++i) {
      const double y = m.v[static_cast<size_t>(i)] ? 1.0 : 0.0;
      acc += y * std::log(p[i]) + (1.0 - y) * std::log(1.0 - p[i]);
    }
    CHECK(std::abs(t.val(foreground_loss(t, t.constant(p), m))[0] - (-acc / 16.0)) < 1e-9);
  }
}

TEST_CASE("total loss is the stated linear combination") {
  // defaults: 1 + 1000 + 0.0001 + 1 = 1002.0001 for unit parts
  LossConfig cfg;
  CHECK(cfg.tau == 0.1);
  CHECK(cfg.lambda_heat == 1e3);
  CHECK(cfg.lambda_coor == 1e-4);
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const double rac = rng.uniform(-1, 3), heat = rng.uniform(0, 2), coor = rng.uniform(0, 100),
                 fore = rng.uniform(0, 2);
    ad::Tape t;
    ad::Var total = t.add(
        t.add(t.constant(Tensor::from({1}, {rac})),
              t.scale(t.constant(Tensor::from({1}, {heat})), cfg.lambda_heat)),
        t.add(t.scale(t.constant(Tensor::from({1}, {coor})), cfg.lambda_coor),
              t.constant(Tensor::from({1}, {fore}))));
    CHECK(t.val(total)[0] ==
          doctest::Approx(rac + 1e3 * heat + 1e-4 * coor + fore).epsilon(1e-12));
  }
}

TEST_CASE("episode_losses: total combination, finiteness guard, gradients flow") {
  ModelConfig mc;
  mc.working_size = 32;
  mc.encoder.channels = 8;
  mc.encoder.depth = 2;
  mc.bppc.r = 5;
  mc.bppc.eps = 2;
  mc.bppc.n_prompts = 4;
  mc.bppc.sigma = 2.0;
  mc.bcm.heads = 2;
  mc.spr.k = 2;
  mc.spr.kappa = 2;
  mc.spr.beta = 2.0;
  mc.n_fg = 4;
  mc.sync();
  Model m = Model::init(mc, 5);
  Episode ep = synth::generate_episode(CategorySpec::synthetic(1, 32), 32, 32, 11);
  LossConfig lc;

  ad::Tape t(&m.params);
  EpisodeForward fwd = forward_episode(t, m, ep.support_image, ep.support_mask, ep.query_image, 3);
  EpisodeLosses ls = episode_losses(t, m, fwd, ep, lc, 7);
  const double total = t.val(ls.total)[0];
  const double expect = t.val(ls.rac)[0] + 1e3 * t.val(ls.heat)[0] + 1e-4 * t.val(ls.coor)[0] +
                        t.val(ls.fore)[0];
  CHECK(total == doctest::Approx(expect).epsilon(1e-12));
  CHECK(ls.gt_ring.size() == 4);

  m.params.zero_grad();
  t.backward(ls.total);
  double gsum = 0;
  for (const auto& e : m.params.entries)
    for (int64_t i = 0; i < e.grad.size(); ++i) gsum += std::abs(e.grad[i]);
  CHECK(gsum > 0.0);
  // every stage must receive gradient
  for (const char* name : {"encoder.stage0.w", "bcm.w_s", "bcm.att.wq", "bcm.head.w1",
                           "spr.w_theta", "spr.off.w1", "spr.w_att", "spr.alpha_raw"}) {
    const auto& e = m.params.at(m.params.find(name));
    double s = 0;
    for (int64_t i = 0; i < e.grad.size(); ++i) s += std::abs(e.grad[i]);
    INFO(name);
    CHECK(s > 0.0);
  }
}

// Hand-built 8x8 episode so gradient sweeps stay fast (the synthetic
// generator needs >= 32x32).
Episode tiny_episode(uint64_t seed) {
  Rng rng(seed);
  Episode ep;
  ep.support_image = random_tensor({8, 8}, rng, 0.0, 1.0);
  ep.query_image = random_tensor({8, 8}, rng, 0.0, 1.0);
  ep.support_mask = Mask(8, 8);
  ep.query_mask = Mask(8, 8);
  for (int r = 3; r <= 4; ++r)
    for (int c = 3; c <= 4; ++c) {
      ep.support_mask.at(r, c) = 1;
      ep.query_mask.at(r, c) = 1;
    }
  ep.query_mask.at(4, 5) = 1;
  ep.has_query_mask = true;
  return ep;
}

// Finite differences are invalid at kinks, so the instance is chosen (via
// the tape's smoothness diagnostics) with every nonlinearity at a safe
// distance from its non-smooth point; a larger layer-norm eps bounds the
// 1/sigma curvature the suppressed tokens otherwise produce. The coarse
// argmax is a stop-gradient boundary, so the coordinate chain is driven
// from fixed interior points.
TEST_CASE("per-loss parameter gradients match finite differences on a tiny instance") {
  ModelConfig mc;
  mc.working_size = 8;
  mc.encoder.channels = 8;
  mc.encoder.depth = 1;
  mc.bppc.r = 3;
  mc.bppc.eps = 2;
  mc.bppc.n_prompts = 3;
  mc.bppc.sigma = 1.5;
  mc.bcm.heads = 2;
  mc.bcm.ffn_hidden = 8;
  mc.bcm.ln_eps = 1e-2;
  mc.spr.k = 2;
  mc.spr.kappa = 1;
  mc.spr.beta = 1.0;
  mc.sync();
  LossConfig lc;
  Episode ep = tiny_episode(13);
  const std::vector<Point> fixed_coarse = {{2.4, 2.6}, {2.3, 5.4}, {5.6, 4.3}};
  Rng gtr(7);
  const std::vector<Point> gt_ring =
      geom::sample_points(geom::differential_ring(ep.query_mask, 3, 2), 3, gtr,
                          geom::centroid(ep.query_mask));
  const Tensor target = geom::heatmap_stack(gt_ring, 1.5, 8, 8);

  Model m = Model::init(mc, 0);
  auto stage_loss = [&](ad::Tape& t, int term) -> ad::Var {
    ad::Var fs = encode(t, m.enc, t.constant(ep.support_image.reshaped({1, 8, 8})));
    ad::Var fq = encode(t, m.enc, t.constant(ep.query_image.reshaped({1, 8, 8})));
    Rng prng2(3);
    SupportPrototypes protos = build_prototypes(t, fs, ep.support_mask, m.cfg.bppc, prng2);
    if (term == 0) {
      ad::Var pos = positive_prototype(t, fs, ep.support_mask, lc.erosion);
      return rac_loss(t, protos.foreground, pos, protos.background, lc.tau, false);
    }
    Suppressed sup = suppress_foreground(t, fq, protos.foreground);
    if (term == 3) return foreground_loss(t, sup.calibrated, ep.query_mask);
    if (term == 1) {
      ad::Var phi = coarse_proposals(t, m.bcm, protos.background, sup.features);
      ad::Var hm = predict_heatmaps(t, m.bcm, masked_attention_block(t, m.bcm, sup.features, phi));
      return heatmap_loss(t, phi, hm, target);
    }
    SprOut so = spr_forward(t, m.spr, protos.background, fixed_coarse, fq);
    return coord_loss(t, so.refined, gt_ring);
  };

  bool found = false;
  for (uint64_t seed = 1; seed <= 40 && !found; ++seed) {
    m = Model::init(mc, seed);
    Rng prng(seed * 131);
    for (auto& e : m.params.entries) {
      if (e.name.find("ln") != std::string::npos) continue;
      const bool is_bias = e.value.rank() == 1;
      for (int64_t i = 0; i < e.value.size(); ++i)
        e.value[i] = is_bias ? 0.0 : prng.normal(0.0, 0.05);
    }
    for (const char* n : {"bcm.bias.b", "bcm.gate.b1", "bcm.ffn.b1", "bcm.head.b1", "spr.off.b1"})
      m.params.at(m.params.find(n)).value.fill(1.5);
    auto& enc_w = m.params.at(m.params.find("encoder.stage0.w"));
    for (int64_t i = 0; i < enc_w.value.size(); ++i) enc_w.value[i] = prng.normal(0.0, 0.3);
    m.params.at(m.params.find("encoder.stage0.b")).value.fill(1.2);
    auto& wg = m.params.at(m.params.find("spr.w_g"));
    for (int64_t i = 0; i < wg.value.size(); ++i) wg.value[i] = prng.normal(0.0, 0.5);
    auto& ow2 = m.params.at(m.params.find("spr.off.w2"));
    for (int64_t i = 0; i < ow2.value.size(); ++i) ow2.value[i] = prng.normal(0.0, 0.3);

    ad::set_smoothness_tracking(true);
    {
      ad::Tape t(&m.params);
      for (int term = 0; term < 4; ++term) stage_loss(t, term);
    }
    found = ad::min_kink_distance() > 0.015;
    ad::set_smoothness_tracking(false);
  }
  REQUIRE(found);

  for (int term = 0; term < 4; ++term) {
    auto build = [&](ad::Tape& t) { return stage_loss(t, term); };
    INFO("loss term ", term);
    CHECK(gradcheck_params(m.params, build) < kTol);
  }
}
