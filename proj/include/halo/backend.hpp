#pragma once

#include <memory>
#include <string>

#include "halo/prompts.hpp"

namespace halo {

// Point-prompt segmentation backend. Implementations must be pure given
// (image, prompts, their own state).
class SegBackend {
public:
  virtual ~SegBackend() = default;
  virtual Mask segment(const Tensor& image, const PromptSet& prompts) const = 0;
  virtual std::string name() const = 0;
};

struct OracleConfig {
  double tolerance = 0.25;  // intensity tolerance; above the distractor
                            // contrast on purpose, so foreground growth leaks
                            // across fused low-contrast blobs unless
                            // background prompts block it
};

// Dual region growing: BFS from foreground and background seeds with the
// seed's own intensity as the reference; a pixel claimed by both sides goes
// to the nearer seed set (geodesic distance, 4-connected unit steps).
class OracleBackend : public SegBackend {
public:
  explicit OracleBackend(OracleConfig cfg = {}) : cfg_(cfg) {}
  Mask segment(const Tensor& image, const PromptSet& prompts) const override;
  std::string name() const override { return "oracle"; }

private:
  OracleConfig cfg_;
};

// Generic HTTP slot for an external point-prompt segmenter: POSTs the
// PromptSet JSON plus the query image (base64 PNG) to <url>/segment and
// expects {"mask": base64 gray PNG} back.
class ExternalBackend : public SegBackend {
public:
  explicit ExternalBackend(std::string url) : url_(std::move(url)) {}
  Mask segment(const Tensor& image, const PromptSet& prompts) const override;
  std::string name() const override { return "external:" + url_; }

private:
  std::string url_;
};

// Parses "oracle" or "external:<url>".
std::unique_ptr<SegBackend> make_backend(const std::string& spec, const OracleConfig& oracle_cfg);

}  // namespace halo
