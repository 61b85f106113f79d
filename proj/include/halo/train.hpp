#pragma once

#include <string>
#include <vector>

#include "halo/losses.hpp"
#include "halo/model.hpp"

namespace halo {

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay = 0.95;
  int lr_decay_every = 1000;
  int iterations = 2000;
  int checkpoint_every = 1000;
  int log_every = 1;
  uint64_t seed = 42;
  std::string setting = "gt";  // "gt": ground-truth masks; "pseudo": SLIC pseudo-labels
  int slic_k = 5;
  double slic_compactness = 15.0;
  int slic_iters = 10;
  std::string out_dir;  // metrics.csv + checkpoints; empty disables file output
};

// Stepped decay: lr * decay^(iter / every).
double lr_at(const TrainConfig& cfg, int iter);

// Base-category episode stream. sample() is pure given the seed, so episode
// production can be pipelined or parallelized freely.
class EpisodeSampler {
public:
  EpisodeSampler(std::vector<CategorySpec> categories, int working_size)
      : categories_(std::move(categories)), s_(working_size) {
    require(!categories_.empty(), Err::InvalidParameter, "EpisodeSampler: no categories");
  }

  Episode sample(uint64_t seed) const;

  // Setting-I variant: SLIC pseudo-mask on one generated image, query is a
  // re-noised view of the same image under the same mask.
  Episode sample_pseudo(uint64_t seed, int k, double compactness, int iters) const;

  const std::vector<CategorySpec>& categories() const { return categories_; }

private:
  std::vector<CategorySpec> categories_;
  int s_;
};

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// One Adam update over every parameter; step starts at 1.
void adam_step(ad::ParamStore& ps, double lr, int step, const AdamConfig& cfg = {});

struct TrainResult {
  double first_total = 0.0;
  double last_total = 0.0;
  int iterations_run = 0;
  std::string checkpoint_path;  // final checkpoint (when out_dir is set)
  std::string metrics_path;
};

// Episodic training loop: forward, total-loss backward, Adam step, stepped
// lr decay; per-iteration CSV metrics and periodic checkpoints. A non-finite
// loss aborts with the training-divergence error; the last on-disk
// checkpoint is retained.
TrainResult train(Model& m, const EpisodeSampler& sampler, const TrainConfig& tcfg,
                  const LossConfig& lcfg);

}  // namespace halo
