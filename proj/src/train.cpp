#include "halo/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "halo/checkpoint.hpp"

namespace fs = std::filesystem;

namespace halo {

double lr_at(const TrainConfig& cfg, int iter) {
  const int steps = cfg.lr_decay_every > 0 ? iter / cfg.lr_decay_every : 0;
  return cfg.lr * std::pow(cfg.lr_decay, steps);
}

Episode EpisodeSampler::sample(uint64_t seed) const {
  Rng rng(seed);
  const auto& spec = categories_[rng.uniform_int(categories_.size())];
  return synth::generate_episode(spec, s_, s_, Rng::derive(seed, 0xef15u));
}

Episode EpisodeSampler::sample_pseudo(uint64_t seed, int k, double compactness, int iters) const {
  Episode ep = sample(seed);
  Rng rng(Rng::derive(seed, 0x91e0u));
  const auto labels = synth::slic_pseudolabels(ep.support_image, k, compactness, iters);
  ep.support_mask = synth::random_superpixel_mask(labels, s_, s_, rng);
  // query: second view of the same image with fresh noise, same pseudo-mask
  ep.query_image = ep.support_image;
  for (int64_t i = 0; i < ep.query_image.size(); ++i)
    ep.query_image[i] = std::clamp(ep.query_image[i] + rng.normal(0.0, 0.02), 0.0, 1.0);
  ep.query_mask = ep.support_mask;
  ep.has_query_mask = true;
  return ep;
}

void adam_step(ad::ParamStore& ps, double lr, int step, const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, step);
  for (auto& e : ps.entries) {
    if (e.m.size() != e.value.size()) {
      e.m = Tensor(e.value.dims());
      e.v = Tensor(e.value.dims());
    }
    for (int64_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

TrainResult train(Model& m, const EpisodeSampler& sampler, const TrainConfig& tcfg,
                  const LossConfig& lcfg) {
  require(tcfg.iterations >= 1, Err::InvalidParameter, "train: iterations must be >= 1");
  TrainResult res;

  FILE* csv = nullptr;
  if (!tcfg.out_dir.empty()) {
    fs::create_directories(tcfg.out_dir);
    res.metrics_path = (fs::path(tcfg.out_dir) / "metrics.csv").string();
    csv = std::fopen(res.metrics_path.c_str(), "w");
    require(csv != nullptr, Err::Io, "cannot write " + res.metrics_path);
    std::fprintf(csv, "iter,L_rac,L_heat,L_coor,L_fore,L_total,lr\n");
  }

  const bool pseudo = tcfg.setting == "pseudo";
  require(pseudo || tcfg.setting == "gt", Err::Config,
          "train: setting must be 'gt' or 'pseudo', got '" + tcfg.setting + "'");

  for (int iter = 0; iter < tcfg.iterations; ++iter) {
    const uint64_t ep_seed = Rng::derive(tcfg.seed, static_cast<uint64_t>(iter));
    Episode ep;
    try {
      ep = pseudo ? sampler.sample_pseudo(ep_seed, tcfg.slic_k, tcfg.slic_compactness,
                                          tcfg.slic_iters)
                  : sampler.sample(ep_seed);
    } catch (const Error& e) {
      // degenerate pseudo-mask (e.g. superpixel too thin for the ring): skip
      std::fprintf(stderr, "halo: skipping episode at iter %d: %s\n", iter, e.what());
      continue;
    }

    ad::Tape tape(&m.params);
    double total;
    try {
      EpisodeForward fwd = forward_episode(tape, m, ep.support_image, ep.support_mask,
                                           ep.query_image, Rng::derive(ep_seed, 1));
      EpisodeLosses loss = episode_losses(tape, m, fwd, ep, lcfg, Rng::derive(ep_seed, 2));
      total = tape.val(loss.total)[0];
      if (!std::isfinite(total)) fail(Err::TrainingDivergence, "non-finite total loss");

      m.params.zero_grad();
      tape.backward(loss.total);

      const double lr = lr_at(tcfg, iter);
      adam_step(m.params, lr, iter + 1);

      if (csv && (iter % tcfg.log_every == 0 || iter + 1 == tcfg.iterations))
        std::fprintf(csv, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", iter,
                     tape.val(loss.rac)[0], tape.val(loss.heat)[0], tape.val(loss.coor)[0],
                     tape.val(loss.fore)[0], total, lr);
    } catch (const Error& e) {
      if (csv) std::fclose(csv);
      if (e.code() == Err::TrainingDivergence) {
        std::fprintf(stderr, "halo: aborting at iter %d (%s); last checkpoint retained\n", iter,
                     e.what());
      }
      throw;
    }

    if (iter == 0) res.first_total = total;
    res.last_total = total;
    ++res.iterations_run;

    if (!tcfg.out_dir.empty() && tcfg.checkpoint_every > 0 &&
        (iter + 1) % tcfg.checkpoint_every == 0) {
      res.checkpoint_path = (fs::path(tcfg.out_dir) / "checkpoint.bin").string();
      save_checkpoint(res.checkpoint_path, m);
    }
  }

  if (!tcfg.out_dir.empty()) {
    res.checkpoint_path = (fs::path(tcfg.out_dir) / "checkpoint.bin").string();
    save_checkpoint(res.checkpoint_path, m);
  }
  if (csv) std::fclose(csv);
  return res;
}

}  // namespace halo
