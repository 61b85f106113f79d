#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "halo/episodes.hpp"
#include "halo/image_io.hpp"

using namespace halo;
namespace fs = std::filesystem;

TEST_CASE("generate_episode: fixed seed is bit-identical") {
  const CategorySpec spec = CategorySpec::synthetic(2, 64);
  Episode a = synth::generate_episode(spec, 64, 64, 99);
  Episode b = synth::generate_episode(spec, 64, 64, 99);
  CHECK(a.support_mask.v == b.support_mask.v);
  CHECK(a.query_mask.v == b.query_mask.v);
  for (int64_t i = 0; i < a.support_image.size(); ++i)
    CHECK(a.support_image[i] == b.support_image[i]);
  for (int64_t i = 0; i < a.query_image.size(); ++i) CHECK(a.query_image[i] == b.query_image[i]);
  Episode c = synth::generate_episode(spec, 64, 64, 100);
  bool same = true;
  for (int64_t i = 0; i < a.query_image.size() && same; ++i)
    same = a.query_image[i] == c.query_image[i];
  CHECK(!same);
}

TEST_CASE("generate_episode: mask area within [1%, 90%]") {
  for (int id = 0; id < 6; ++id) {
    const CategorySpec spec = CategorySpec::synthetic(id, 64);
    for (uint64_t seed = 0; seed < 5; ++seed) {
      Episode ep = synth::generate_episode(spec, 64, 64, seed);
      const int64_t area = ep.support_mask.count();
      CHECK(area >= 64 * 64 / 100);
      CHECK(area <= 64 * 64 * 9 / 10);
      CHECK(ep.query_mask.count() >= 64 * 64 / 100);
      CHECK(ep.has_query_mask);
      CHECK(ep.category_id == id);
    }
  }
}

TEST_CASE("generate_episode: distractor fuses with the boundary at matched intensity") {
  const CategorySpec spec = CategorySpec::synthetic(1, 64);
  REQUIRE(spec.distractor_count >= 1);
  Episode ep = synth::generate_episode(spec, 64, 64, 5);
  // the image must contain off-mask pixels at foreground-level intensity
  // adjacent to the mask (the fused blob)
  const double fg = spec.domain == 1 ? 1.0 - (spec.bg_level + spec.contrast)
                                     : spec.bg_level + spec.contrast;
  int fused = 0;
  for (int r = 1; r < 63; ++r)
    for (int c = 1; c < 63; ++c) {
      if (ep.query_mask.at(r, c)) continue;
      const bool adj = ep.query_mask.at(r - 1, c) || ep.query_mask.at(r + 1, c) ||
                       ep.query_mask.at(r, c - 1) || ep.query_mask.at(r, c + 1);
      if (adj && std::abs(ep.query_image.at(r, c) - fg) < 6 * spec.noise_sigma) ++fused;
    }
  CHECK(fused > 0);
}

TEST_CASE("generate_episode rejects tiny grids") {
  CHECK_THROWS_AS(synth::generate_episode(CategorySpec::synthetic(0, 64), 16, 16, 1), Error);
}

TEST_CASE("slic: total partition with at most k labels, none empty") {
  Rng rng(7);
  Tensor img({40, 40});
  for (int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  const auto labels = synth::slic_pseudolabels(img, 5, 15.0, 10);
  REQUIRE(labels.size() == 40 * 40);
  std::set<int> distinct(labels.begin(), labels.end());
  CHECK(static_cast<int>(distinct.size()) <= 5);
  CHECK(*distinct.begin() == 0);
  CHECK(*distinct.rbegin() == static_cast<int>(distinct.size()) - 1);
}

TEST_CASE("slic: constant image converges to grid Voronoi cells") {
  Tensor img({48, 48}, 0.5);
  const int k = 5;
  const auto labels = synth::slic_pseudolabels(img, k, 15.0, 10);
  // centroid of each label must lie within one cell width of its grid seed
  const double interval = std::sqrt(48.0 * 48.0 / k);
  const int nx = std::max(1, static_cast<int>(48 / interval));
  const int ny = std::max(1, static_cast<int>(48 / interval));
  std::vector<double> sr(static_cast<size_t>(nx * ny), 0), sc(static_cast<size_t>(nx * ny), 0);
  std::vector<int> cnt(static_cast<size_t>(nx * ny), 0);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      const int l = labels[static_cast<size_t>(y) * 48 + x];
      REQUIRE(l < nx * ny);
      sr[static_cast<size_t>(l)] += y;
      sc[static_cast<size_t>(l)] += x;
      ++cnt[static_cast<size_t>(l)];
    }
  for (int gy = 0; gy < ny; ++gy)
    for (int gx = 0; gx < nx; ++gx) {
      const int l = gy * nx + gx;
      if (cnt[static_cast<size_t>(l)] == 0) continue;
      const double cy = sr[static_cast<size_t>(l)] / cnt[static_cast<size_t>(l)];
      const double cx = sc[static_cast<size_t>(l)] / cnt[static_cast<size_t>(l)];
      const double seed_y = (gy + 0.5) * 48.0 / ny, seed_x = (gx + 0.5) * 48.0 / nx;
      CHECK(std::abs(cy - seed_y) <= 48.0 / ny);
      CHECK(std::abs(cx - seed_x) <= 48.0 / nx);
    }
}

TEST_CASE("slic rejects k larger than the pixel count and k < 2") {
  Tensor img({4, 4}, 0.5);
  CHECK_THROWS_AS(synth::slic_pseudolabels(img, 17, 15.0, 10), Error);
  CHECK_THROWS_AS(synth::slic_pseudolabels(img, 1, 15.0, 10), Error);
}

TEST_CASE("random_superpixel_mask is a nonempty label region") {
  Tensor img({32, 32});
  Rng rng(3);
  for (int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  const auto labels = synth::slic_pseudolabels(img, 5, 15.0, 10);
  Rng pick(11);
  const Mask m = synth::random_superpixel_mask(labels, 32, 32, pick);
  CHECK(m.count() > 0);
}

TEST_CASE("folder dataset: pairing, binarization, resize") {
  const fs::path dir = fs::temp_directory_path() / "halo_test_ds";
  fs::remove_all(dir);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");

  // empty folder -> empty dataset
  CHECK(load_folder_dataset(dir.string(), 32).empty());

  Tensor img({20, 20});
  for (int64_t i = 0; i < img.size(); ++i) img[i] = (i % 7) / 7.0;
  img::write_gray_png((dir / "images" / "a.png").string(), img);
  Tensor mask({20, 20});
  for (int r = 5; r < 15; ++r)
    for (int c = 5; c < 15; ++c) mask.at(r, c) = 1.0;  // {0,255} after write
  img::write_gray_png((dir / "masks" / "a.png").string(), mask);

  auto ds = load_folder_dataset(dir.string(), 32);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].stem == "a");
  CHECK(ds[0].image.dim(0) == 32);
  CHECK(ds[0].mask.h == 32);
  for (uint8_t v : ds[0].mask.v) CHECK((v == 0 || v == 1));
  CHECK(ds[0].mask.count() > 0);

  // unpaired image -> load error naming the file
  img::write_gray_png((dir / "images" / "b.png").string(), img);
  CHECK_THROWS_WITH_AS(load_folder_dataset(dir.string(), 32),
                       doctest::Contains("b.png"), Error);
  fs::remove((dir / "images" / "b.png"));

  // mid-gray mask -> not binary
  Tensor gray({20, 20}, 0.5);
  img::write_gray_png((dir / "images" / "c.png").string(), img);
  img::write_gray_png((dir / "masks" / "c.png").string(), gray);
  CHECK_THROWS_WITH_AS(load_folder_dataset(dir.string(), 32),
                       doctest::Contains("not binary"), Error);
  fs::remove_all(dir);
}

TEST_CASE("episode export writes PNGs plus a manifest") {
  const fs::path dir = fs::temp_directory_path() / "halo_test_export";
  fs::remove_all(dir);
  std::vector<Episode> eps;
  eps.push_back(synth::generate_episode(CategorySpec::synthetic(0, 64), 64, 64, 4));
  eps.push_back(synth::generate_episode(CategorySpec::synthetic(1, 64), 64, 64, 5));
  export_episodes(dir.string(), eps, 1234);
  CHECK(fs::exists(dir / "ep_0000_support.png"));
  CHECK(fs::exists(dir / "ep_0001_query_mask.png"));
  std::ifstream mf(dir / "manifest.json");
  std::string manifest((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
  CHECK(manifest.find("\"category_id\": 1") != std::string::npos);
  CHECK(manifest.find("\"seed\": 1234") != std::string::npos);

  // PNG round trip preserves the mask exactly
  const Tensor back = img::read_gray((dir / "ep_0000_support_mask.png").string());
  for (int64_t i = 0; i < back.size(); ++i) {
    const uint8_t v = back[i] >= 0.5 ? 1 : 0;
    CHECK(v == eps[0].support_mask.v[static_cast<size_t>(i)]);
  }
  fs::remove_all(dir);
}

TEST_CASE("pgm round trip") {
  const fs::path p = fs::temp_directory_path() / "halo_test.pgm";
  Tensor img({9, 13});
  for (int64_t i = 0; i < img.size(); ++i) img[i] = (i % 256) / 255.0;
  img::write_gray_pgm(p.string(), img);
  const Tensor back = img::read_gray(p.string());
  REQUIRE(back.dim(0) == 9);
  REQUIRE(back.dim(1) == 13);
  for (int64_t i = 0; i < img.size(); ++i) CHECK(std::abs(back[i] - img[i]) < 1.0 / 254.0);
  fs::remove(p);
}

TEST_CASE("in-memory png encode/decode round trip") {
  Tensor img({15, 11});
  for (int64_t i = 0; i < img.size(); ++i) img[i] = (i * 37 % 256) / 255.0;
  const Tensor back = img::decode_gray_png(img::encode_gray_png(img));
  REQUIRE(back.dim(0) == 15);
  for (int64_t i = 0; i < img.size(); ++i) CHECK(std::abs(back[i] - img[i]) < 1.0 / 254.0);
}
