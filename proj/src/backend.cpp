#include "halo/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>

#include <httplib.h>
#include <json.hpp>

#include "halo/image_io.hpp"

namespace halo {

namespace {

constexpr int32_t kInf = std::numeric_limits<int32_t>::max();

struct Seed {
  int r, c;
  double ref;
};

// Multi-source BFS: a pixel joins the region when its intensity is within
// tolerance of the intensity at the seed that reaches it first.
void grow(const Tensor& image, const std::vector<Seed>& seeds, double tol,
          std::vector<int32_t>& dist) {
  const int h = image.dim(0), w = image.dim(1);
  dist.assign(static_cast<size_t>(h) * w, kInf);
  std::vector<double> ref(static_cast<size_t>(h) * w, 0.0);
  std::deque<int> queue;
  for (const Seed& s : seeds) {
    const int idx = s.r * w + s.c;
    if (dist[static_cast<size_t>(idx)] != kInf) continue;
    dist[static_cast<size_t>(idx)] = 0;
    ref[static_cast<size_t>(idx)] = s.ref;
    queue.push_back(idx);
  }
  static constexpr int dr[4] = {-1, 1, 0, 0};
  static constexpr int dc[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const int idx = queue.front();
    queue.pop_front();
    const int r = idx / w, c = idx % w;
    for (int k = 0; k < 4; ++k) {
      const int nr = r + dr[k], nc = c + dc[k];
      if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
      const int nidx = nr * w + nc;
      if (dist[static_cast<size_t>(nidx)] != kInf) continue;
      if (std::abs(image.at(nr, nc) - ref[static_cast<size_t>(idx)]) > tol) continue;
      dist[static_cast<size_t>(nidx)] = dist[static_cast<size_t>(idx)] + 1;
      ref[static_cast<size_t>(nidx)] = ref[static_cast<size_t>(idx)];
      queue.push_back(nidx);
    }
  }
}

std::vector<Seed> to_seeds(const Tensor& image, const std::vector<Point>& pts) {
  const int h = image.dim(0), w = image.dim(1);
  std::vector<Seed> out;
  out.reserve(pts.size());
  for (const Point& p : pts) {
    const int r = std::clamp(static_cast<int>(std::lround(p.row)), 0, h - 1);
    const int c = std::clamp(static_cast<int>(std::lround(p.col)), 0, w - 1);
    out.push_back({r, c, image.at(r, c)});
  }
  return out;
}

const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const std::string& in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  for (size_t i = 0; i < in.size(); i += 3) {
    uint32_t v = static_cast<uint8_t>(in[i]) << 16;
    if (i + 1 < in.size()) v |= static_cast<uint8_t>(in[i + 1]) << 8;
    if (i + 2 < in.size()) v |= static_cast<uint8_t>(in[i + 2]);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < in.size() ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < in.size() ? kB64[v & 63] : '=');
  }
  return out;
}

std::string b64_decode(const std::string& in) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  int buf = 0, bits = 0;
  for (char c : in) {
    const int v = val(c);
    if (v < 0) continue;
    buf = (buf << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buf >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace

Mask OracleBackend::segment(const Tensor& image, const PromptSet& prompts) const {
  require(!prompts.foreground.empty(), Err::EmptyPrompt,
          "oracle_segment: need at least one foreground prompt");
  const int h = image.dim(0), w = image.dim(1);

  std::vector<int32_t> dist_fg, dist_bg;
  grow(image, to_seeds(image, prompts.foreground), cfg_.tolerance, dist_fg);
  if (prompts.background.empty())
    dist_bg.assign(static_cast<size_t>(h) * w, kInf);
  else
    grow(image, to_seeds(image, prompts.background), cfg_.tolerance, dist_bg);

  Mask out(h, w);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = static_cast<uint8_t>(dist_fg[i] != kInf && dist_fg[i] < dist_bg[i]);
  return out;
}

Mask ExternalBackend::segment(const Tensor& image, const PromptSet& prompts) const {
  nlohmann::ordered_json req = nlohmann::ordered_json::parse(prompt_set_to_json(prompts));
  req["image_png_b64"] = b64_encode(img::encode_gray_png(image));

  httplib::Client client(url_);
  client.set_read_timeout(60, 0);
  auto res = client.Post("/segment", req.dump(), "application/json");
  require(res && res->status == 200, Err::Io,
          "external backend: POST " + url_ + "/segment failed");
  const auto j = nlohmann::json::parse(res->body);
  const Tensor m = img::decode_gray_png(b64_decode(j.at("mask").get<std::string>()));
  Mask out(m.dim(0), m.dim(1));
  for (int64_t i = 0; i < m.size(); ++i) out.v[static_cast<size_t>(i)] = m[i] >= 0.5 ? 1 : 0;
  return out;
}

std::unique_ptr<SegBackend> make_backend(const std::string& spec,
                                         const OracleConfig& oracle_cfg) {
  if (spec == "oracle") return std::make_unique<OracleBackend>(oracle_cfg);
  if (spec.rfind("external:", 0) == 0)
    return std::make_unique<ExternalBackend>(spec.substr(9));
  fail(Err::Config, "unknown backend '" + spec + "' (want 'oracle' or 'external:<url>')");
}

}  // namespace halo
