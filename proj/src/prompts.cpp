#include "halo/prompts.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace halo {

std::string prompt_set_to_json(const PromptSet& ps) {
  nlohmann::ordered_json j;
  j["image_size"] = {ps.image_h, ps.image_w};
  auto points = [](const std::vector<Point>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const Point& p : v) a.push_back({p.row, p.col});
    return a;
  };
  j["foreground"] = points(ps.foreground);
  j["background"] = points(ps.background);
  return j.dump(2);
}

PromptSet prompt_set_from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  PromptSet ps;
  ps.image_h = j.at("image_size").at(0);
  ps.image_w = j.at("image_size").at(1);
  auto points = [](const nlohmann::json& a) {
    std::vector<Point> v;
    for (const auto& p : a) v.push_back({p.at(0), p.at(1)});
    return v;
  };
  ps.foreground = points(j.at("foreground"));
  ps.background = points(j.at("background"));
  return ps;
}

std::vector<Point> sample_foreground_prompts(const Tensor& calibrated, double threshold,
                                             int n_fg, Rng& rng) {
  const int w = calibrated.dim(1);
  struct Scored {
    double value;
    int64_t idx;
  };
  std::vector<Scored> qualify;
  for (int64_t i = 0; i < calibrated.size(); ++i)
    if (calibrated[i] > threshold) qualify.push_back({calibrated[i], i});

  std::vector<Scored> chosen;
  if (static_cast<int>(qualify.size()) >= n_fg) {
    for (int i = 0; i < n_fg; ++i) {
      const size_t j = i + static_cast<size_t>(rng.uniform_int(qualify.size() - i));
      std::swap(qualify[static_cast<size_t>(i)], qualify[j]);
      chosen.push_back(qualify[static_cast<size_t>(i)]);
    }
  } else {
    // top-n by value, ties by row-major index
    std::vector<Scored> all;
    all.reserve(static_cast<size_t>(calibrated.size()));
    for (int64_t i = 0; i < calibrated.size(); ++i) all.push_back({calibrated[i], i});
    const size_t take = std::min<size_t>(static_cast<size_t>(n_fg), all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                      [](const Scored& a, const Scored& b) {
                        return a.value != b.value ? a.value > b.value : a.idx < b.idx;
                      });
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(chosen.begin(), chosen.end(), [](const Scored& a, const Scored& b) {
    return a.value != b.value ? a.value > b.value : a.idx < b.idx;
  });
  std::vector<Point> out;
  out.reserve(chosen.size());
  for (const Scored& s : chosen)
    out.push_back({static_cast<double>(s.idx / w), static_cast<double>(s.idx % w)});

  return out;
}

Point rescale_point(Point p, int from_h, int from_w, int to_h, int to_w) {
  return {(p.row + 0.5) * to_h / from_h - 0.5, (p.col + 0.5) * to_w / from_w - 0.5};
}

InferResult infer_prompts(const Model& m, const Tensor& support_image, const Mask& support_mask,
                          const Tensor& query_image, int image_h, int image_w, uint64_t seed) {
  require(!support_mask.empty(), Err::EmptyMask, "infer_prompts: empty support mask");
  const int s = m.cfg.working_size;

  // the tape only reads parameter values here; backward() is never called
  ad::Tape ptape(const_cast<ad::ParamStore*>(&m.params));
  EpisodeForward fwd;
  try {
    fwd = forward_episode(ptape, m, support_image, support_mask, query_image,
                          Rng::derive(seed, 1));
  } catch (const Error& e) {
    throw Error(e.code(), std::string("infer_prompts: ") + e.what());
  }

  InferResult res;
  res.calibrated = ptape.val(fwd.bcm.sup.calibrated);
  res.coarse = fwd.bcm.coarse;

  Rng rng(Rng::derive(seed, 2));
  res.working.foreground =
      sample_foreground_prompts(res.calibrated, m.cfg.fg_threshold, m.cfg.n_fg, rng);
  res.working.background = fwd.refined;
  res.working.image_h = s;
  res.working.image_w = s;

  res.prompts.image_h = image_h;
  res.prompts.image_w = image_w;
  for (const Point& p : res.working.foreground)
    res.prompts.foreground.push_back(rescale_point(p, s, s, image_h, image_w));
  for (const Point& p : res.working.background)
    res.prompts.background.push_back(rescale_point(p, s, s, image_h, image_w));
  return res;
}

}  // namespace halo
