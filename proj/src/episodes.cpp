#include "halo/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "halo/image_io.hpp"

namespace fs = std::filesystem;

namespace halo {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Mixes id-dependent variation into a range.
double vary(int id, int salt, double lo, double hi) {
  const uint64_t h = Rng::derive(0x5eedu + static_cast<uint64_t>(id), static_cast<uint64_t>(salt));
  return lo + (hi - lo) * (static_cast<double>(h % 1000) / 999.0);
}
}  // namespace

CategorySpec CategorySpec::synthetic(int id, int working_size) {
  const double s = working_size / 64.0;
  CategorySpec c;
  c.id = id;
  c.axis_a_min = s * vary(id, 1, 10.0, 13.0);
  c.axis_a_max = c.axis_a_min + s * 4.0;
  c.axis_b_min = s * vary(id, 2, 7.0, 10.0);
  c.axis_b_max = c.axis_b_min + s * 3.0;
  c.harmonic_freq = 2 + id % 4;
  c.harmonic_amp = vary(id, 3, 0.05, 0.14);
  c.distractor_count = 1 + id % 2;
  c.distractor_scale = vary(id, 4, 0.55, 0.8);
  c.bg_level = vary(id, 5, 0.18, 0.28);
  c.contrast = vary(id, 6, 0.42, 0.5);
  c.noise_sigma = 0.02;
  c.distractor_delta = 0.012;
  return c;
}

CategorySpec CategorySpec::clean(int id, int working_size) {
  CategorySpec c = synthetic(id, working_size);
  c.distractor_count = 0;
  c.harmonic_amp = 0.0;
  c.noise_sigma = 0.0;
  c.contrast = 1.0 - c.bg_level;  // full contrast
  return c;
}

namespace synth {

namespace {

// Star-convex shape: ellipse radius modulated by one boundary harmonic.
struct ShapeParams {
  double a, b;       // semi-axes
  double amp;        // harmonic amplitude (relative)
  int freq;
  double phase;
};

Mask render_shape(int h, int w, Point center, double rot, const ShapeParams& sp) {
  Mask m(h, w);
  const double cr = std::cos(rot), sr = std::sin(rot);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dr = y - center.row, dc = x - center.col;
      const double u = cr * dc + sr * dr;
      const double v = -sr * dc + cr * dr;
      const double rho = std::hypot(u, v);
      if (rho == 0.0) {
        m.at(y, x) = 1;
        continue;
      }
      const double phi = std::atan2(v, u);
      const double re = sp.a * sp.b /
                        std::sqrt(sp.b * sp.b * std::cos(phi) * std::cos(phi) +
                                  sp.a * sp.a * std::sin(phi) * std::sin(phi));
      const double radius = re * (1.0 + sp.amp * std::cos(sp.freq * phi + sp.phase));
      if (rho <= radius) m.at(y, x) = 1;
    }
  return m;
}

// Boundary point of the shape at a given polar angle (image frame).
Point boundary_point(Point center, double rot, const ShapeParams& sp, double ang_img) {
  const double phi = ang_img - rot;
  const double re = sp.a * sp.b /
                    std::sqrt(sp.b * sp.b * std::cos(phi) * std::cos(phi) +
                              sp.a * sp.a * std::sin(phi) * std::sin(phi));
  const double radius = re * (1.0 + sp.amp * std::cos(sp.freq * phi + sp.phase));
  return {center.row + radius * std::sin(ang_img), center.col + radius * std::cos(ang_img)};
}

struct Instance {
  Mask mask;        // ground truth foreground
  Mask distract;    // distractor region (excludes the foreground)
  Tensor image;     // [h,w]
};

Instance render_instance(const CategorySpec& spec, int h, int w, const ShapeParams& sp,
                         Rng& rng) {
  Instance inst;
  const double jitter = h / 16.0;
  for (int attempt = 0;; ++attempt) {
    Point center{h / 2.0 + rng.uniform(-jitter, jitter), w / 2.0 + rng.uniform(-jitter, jitter)};
    const double rot = rng.uniform(0.0, kTwoPi);
    Mask m = render_shape(h, w, center, rot, sp);
    const int64_t area = m.count();
    const int64_t total = static_cast<int64_t>(h) * w;
    if (area >= total / 100 && area <= total * 9 / 10) {
      inst.mask = std::move(m);
      inst.distract = Mask(h, w);
      for (int d = 0; d < spec.distractor_count; ++d) {
        // first blob is centered on a boundary point so it always fuses with
        // the object; later ones get random boundary anchors too
        const double ang = rng.uniform(0.0, kTwoPi);
        const Point bp = boundary_point(center, rot, sp, ang);
        ShapeParams dsp{spec.distractor_scale * sp.a * rng.uniform(0.75, 1.1),
                        spec.distractor_scale * sp.b * rng.uniform(0.75, 1.1), 0.0, 2, 0.0};
        Mask blob = render_shape(h, w, bp, rng.uniform(0.0, kTwoPi), dsp);
        for (size_t i = 0; i < blob.v.size(); ++i)
          if (blob.v[i] && !inst.mask.v[i]) inst.distract.v[i] = 1;
      }
      break;
    }
    require(attempt < 8, Err::Generation, "generate_episode: degenerate mask area");
  }
  // intensity model
  const double fg = spec.bg_level + spec.contrast;
  inst.image = Tensor({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = spec.bg_level;
      if (inst.mask.at(y, x))
        v = fg;
      else if (inst.distract.at(y, x))
        v = fg + rng.uniform(-spec.distractor_delta, spec.distractor_delta);
      v += spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0;
      if (spec.domain == 1) v = 1.0 - v;
      inst.image.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  return inst;
}

}  // namespace

Episode generate_episode(const CategorySpec& spec, int h, int w, uint64_t seed) {
  require(h >= 32 && w >= 32, Err::InvalidParameter, "generate_episode: size must be >= 32x32");
  Rng rng(seed);
  ShapeParams sp;
  sp.a = rng.uniform(spec.axis_a_min, spec.axis_a_max);
  sp.b = rng.uniform(spec.axis_b_min, spec.axis_b_max);
  sp.amp = spec.harmonic_amp * rng.uniform(0.6, 1.0);
  sp.freq = spec.harmonic_freq;
  sp.phase = rng.uniform(0.0, kTwoPi);

  Instance sup = render_instance(spec, h, w, sp, rng);
  Instance qry = render_instance(spec, h, w, sp, rng);

  Episode ep;
  ep.support_image = std::move(sup.image);
  ep.support_mask = std::move(sup.mask);
  ep.query_image = std::move(qry.image);
  ep.query_mask = std::move(qry.mask);
  ep.has_query_mask = true;
  ep.category_id = spec.id;
  ep.domain_id = spec.domain;
  return ep;
}

std::vector<int> slic_pseudolabels(const Tensor& image, int k, double compactness, int iters) {
  const int h = image.dim(0), w = image.dim(1);
  const int64_t total = static_cast<int64_t>(h) * w;
  require(k >= 2, Err::InvalidParameter, "slic: k must be >= 2");
  require(k <= total, Err::InvalidParameter, "slic: k exceeds pixel count");

  const double interval = std::sqrt(static_cast<double>(total) / k);
  const int nx = std::max(1, static_cast<int>(w / interval));
  const int ny = std::max(1, static_cast<int>(h / interval));

  struct Center {
    double intensity, row, col;
  };
  std::vector<Center> centers;
  for (int gy = 0; gy < ny; ++gy)
    for (int gx = 0; gx < nx; ++gx) {
      const double row = (gy + 0.5) * h / ny;
      const double col = (gx + 0.5) * w / nx;
      const int ir = std::min(h - 1, static_cast<int>(row));
      const int ic = std::min(w - 1, static_cast<int>(col));
      centers.push_back({image.at(ir, ic) * 100.0, row, col});
    }

  std::vector<int> label(static_cast<size_t>(total), -1);
  std::vector<double> dist(static_cast<size_t>(total));
  const double sw = compactness / interval;  // spatial scale

  auto dist2 = [&](const Center& c, int y, int x) {
    const double dc = image.at(y, x) * 100.0 - c.intensity;
    const double dy = (y - c.row) * sw, dx = (x - c.col) * sw;
    return dc * dc + dy * dy + dx * dx;
  };

  for (int it = 0; it < iters; ++it) {
    std::fill(dist.begin(), dist.end(), 1e300);
    std::fill(label.begin(), label.end(), -1);
    for (size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& c = centers[ci];
      const int y0 = std::max(0, static_cast<int>(c.row - 2 * interval));
      const int y1 = std::min(h - 1, static_cast<int>(c.row + 2 * interval));
      const int x0 = std::max(0, static_cast<int>(c.col - 2 * interval));
      const int x1 = std::min(w - 1, static_cast<int>(c.col + 2 * interval));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d = dist2(c, y, x);
          const size_t idx = static_cast<size_t>(y) * w + x;
          if (d < dist[idx]) {
            dist[idx] = d;
            label[idx] = static_cast<int>(ci);
          }
        }
    }
    // pixels outside every search window: brute-force nearest center
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t idx = static_cast<size_t>(y) * w + x;
        if (label[idx] >= 0) continue;
        for (size_t ci = 0; ci < centers.size(); ++ci) {
          const double d = dist2(centers[ci], y, x);
          if (d < dist[idx]) {
            dist[idx] = d;
            label[idx] = static_cast<int>(ci);
          }
        }
      }
    // update step
    std::vector<double> si(centers.size(), 0.0), sr(centers.size(), 0.0), sc(centers.size(), 0.0);
    std::vector<int64_t> cnt(centers.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int l = label[static_cast<size_t>(y) * w + x];
        si[static_cast<size_t>(l)] += image.at(y, x) * 100.0;
        sr[static_cast<size_t>(l)] += y;
        sc[static_cast<size_t>(l)] += x;
        ++cnt[static_cast<size_t>(l)];
      }
    for (size_t ci = 0; ci < centers.size(); ++ci) {
      if (cnt[ci] == 0) continue;  // empty cluster keeps its old center
      centers[ci] = {si[ci] / cnt[ci], sr[ci] / cnt[ci], sc[ci] / cnt[ci]};
    }
  }

  // compact label ids so the output is a partition into nonempty sets
  std::map<int, int> remap;
  for (int& l : label) {
    auto it = remap.find(l);
    if (it == remap.end()) it = remap.emplace(l, static_cast<int>(remap.size())).first;
    l = it->second;
  }
  return label;
}

Mask random_superpixel_mask(const std::vector<int>& labels, int h, int w, Rng& rng) {
  int nlabels = 0;
  for (int l : labels) nlabels = std::max(nlabels, l + 1);
  const int pick = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(nlabels)));
  Mask m(h, w);
  for (size_t i = 0; i < labels.size(); ++i) m.v[i] = labels[i] == pick ? 1 : 0;
  return m;
}

}  // namespace synth

std::vector<FolderSample> load_folder_dataset(const std::string& path, int working_size) {
  const fs::path images = fs::path(path) / "images";
  const fs::path masks = fs::path(path) / "masks";
  require(fs::is_directory(path), Err::Load, "dataset folder not found: " + path);
  std::vector<FolderSample> out;
  if (!fs::is_directory(images)) return out;  // empty dataset

  std::map<std::string, fs::path> mask_by_stem;
  if (fs::is_directory(masks))
    for (const auto& e : fs::directory_iterator(masks))
      if (e.is_regular_file()) mask_by_stem[e.path().stem().string()] = e.path();

  std::vector<fs::path> image_files;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file()) image_files.push_back(e.path());
  std::sort(image_files.begin(), image_files.end());

  for (const auto& ip : image_files) {
    const std::string stem = ip.stem().string();
    auto mit = mask_by_stem.find(stem);
    require(mit != mask_by_stem.end(), Err::Load, "no mask paired with image: " + ip.string());

    FolderSample s;
    s.stem = stem;
    s.image = img::resize_bilinear(img::read_gray(ip.string()), working_size, working_size);

    const Tensor raw = img::read_gray(mit->second.string());
    int64_t mid = 0;
    Mask m(raw.dim(0), raw.dim(1));
    for (int64_t i = 0; i < raw.size(); ++i) {
      if (raw[i] > 0.2 && raw[i] < 0.8) ++mid;
      m.v[static_cast<size_t>(i)] = raw[i] >= 0.5 ? 1 : 0;
    }
    require(mid * 20 < raw.size(), Err::Load,
            "mask is not binary after thresholding: " + mit->second.string());
    s.mask = img::resize_nearest(m, working_size, working_size);
    out.push_back(std::move(s));
  }
  return out;
}

void export_episodes(const std::string& dir, const std::vector<Episode>& eps, uint64_t seed) {
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["schema_version"] = 1;
  manifest["seed"] = seed;
  manifest["episodes"] = nlohmann::ordered_json::array();
  char name[64];
  for (size_t i = 0; i < eps.size(); ++i) {
    const Episode& ep = eps[i];
    auto write_mask = [&](const Mask& m, const std::string& p) {
      Tensor t({m.h, m.w});
      for (int64_t j = 0; j < t.size(); ++j) t[j] = m.v[static_cast<size_t>(j)] ? 1.0 : 0.0;
      img::write_gray_png(p, t);
    };
    std::snprintf(name, sizeof(name), "ep_%04zu", i);
    const std::string base = (fs::path(dir) / name).string();
    img::write_gray_png(base + "_support.png", ep.support_image);
    write_mask(ep.support_mask, base + "_support_mask.png");
    img::write_gray_png(base + "_query.png", ep.query_image);
    if (ep.has_query_mask) write_mask(ep.query_mask, base + "_query_mask.png");
    nlohmann::ordered_json rec;
    rec["index"] = i;
    rec["category_id"] = ep.category_id;
    rec["domain_id"] = ep.domain_id;
    manifest["episodes"].push_back(rec);
  }
  std::ofstream f(fs::path(dir) / "manifest.json");
  require(f.good(), Err::Io, "cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

}  // namespace halo
