#pragma once

#include <string>
#include <vector>

#include "halo/geometry.hpp"
#include "halo/rng.hpp"
#include "halo/tensor.hpp"

namespace halo {

// One 1-way 1-shot task: an annotated support image and a query image of the
// same category. query_mask is present for training/eval episodes.
struct Episode {
  Tensor support_image;  // [H,W] in [0,1]
  Mask support_mask;
  Tensor query_image;
  Mask query_mask;
  bool has_query_mask = false;
  int category_id = 0;
  int domain_id = 0;
};

// A synthetic "organ" family: an ellipse perturbed by low-order boundary
// harmonics, with an intensity model and low-contrast distractor blobs that
// fuse with the object boundary.
struct CategorySpec {
  int id = 0;
  double axis_a_min = 10.0, axis_a_max = 16.0;  // semi-axes, px at the working size
  double axis_b_min = 7.0, axis_b_max = 12.0;
  int harmonic_freq = 3;          // boundary perturbation frequency
  double harmonic_amp = 0.10;     // max relative amplitude
  int distractor_count = 1;       // low-contrast blobs touching the boundary
  double distractor_scale = 0.7;  // blob size relative to the object axes
  double bg_level = 0.22;
  double contrast = 0.45;         // |foreground - background|
  double noise_sigma = 0.02;
  double distractor_delta = 0.012;  // |distractor - foreground|, below the noise floor
  int domain = 0;                   // 1 inverts intensity polarity

  // Procedural family table: deterministic spec for category `id` at working
  // size s. Categories differ in shape statistics and distractor layout.
  static CategorySpec synthetic(int id, int working_size);
  // Distractor-free, max-contrast variant (easy instances for oracle tests).
  static CategorySpec clean(int id, int working_size);
};

namespace synth {

// Renders a support/query pair of the same category: one base shape drawn
// from the category ranges, two independent poses and noise streams.
// Throws the generation error if the mask would be degenerate
// (empty, or covering > 90% of the image) after a few placement retries.
Episode generate_episode(const CategorySpec& spec, int h, int w, uint64_t seed);

// SLIC superpixels on a grayscale image: k-means over (intensity, row, col)
// with the spatial term scaled by compactness/grid-interval. Grid-seeded,
// fixed iteration count, no connectivity post-processing. Labels form a
// total partition with at most k distinct values.
std::vector<int> slic_pseudolabels(const Tensor& image, int k, double compactness, int iters);

// Promote one random superpixel to a pseudo foreground mask.
Mask random_superpixel_mask(const std::vector<int>& labels, int h, int w, Rng& rng);

}  // namespace synth

// Folder dataset: images/<stem>.png|.pgm paired with masks/<stem>.png|.pgm by
// stem. Images are bilinearly rescaled to s x s, masks use nearest neighbor
// and are binarized at 0.5.
struct FolderSample {
  std::string stem;
  Tensor image;  // [s,s]
  Mask mask;
};
std::vector<FolderSample> load_folder_dataset(const std::string& path, int working_size);

// Episode export: writes <prefix>_support.png / _support_mask.png /
// _query.png / _query_mask.png plus a manifest.json entry per episode.
void export_episodes(const std::string& dir, const std::vector<Episode>& eps, uint64_t seed);

}  // namespace halo
