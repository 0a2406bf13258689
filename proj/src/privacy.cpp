#include "gradsurf/privacy.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "gradsurf/error.hpp"

namespace gradsurf {

namespace {

double sample_replicate(const Image& img, int u, int v, int c) {
  u = std::clamp(u, 0, img.width - 1);
  v = std::clamp(v, 0, img.height - 1);
  return img.at(u, v, c);
}

// Raw (un-normalized) kernel responses at one pixel for one channel.
void raw_derivatives(const Image& img, KernelType kernel, int u, int v, int c, double& gx, double& gy) {
  auto p = [&](int du, int dv) { return sample_replicate(img, u + du, v + dv, c); };
  if (kernel == KernelType::sobel) {
    gx = (p(1, -1) - p(-1, -1)) + 2.0 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
    gy = (p(-1, 1) - p(-1, -1)) + 2.0 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
  } else {
    gx = p(1, 0) - p(-1, 0);
    gy = p(0, 1) - p(0, -1);
  }
}

constexpr double kLattice = 65536.0;

}  // namespace

ProtectedImage protect_image(const Image& image, const OperatorConfig& cfg) {
  if (image.width < 3 || image.height < 3)
    throw Error("privacy_operator", "image smaller than the 3x3 kernel support");
  if (image.channels < 1) throw Error("privacy_operator", "image has no channels");
  ProtectedImage out;
  out.magnitude = Image(image.width, image.height, 1);
  out.source_width = image.width;
  out.source_height = image.height;
  out.op = cfg;
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      double sx = 0.0, sy = 0.0;
      for (int c = 0; c < image.channels; ++c) {
        double gx, gy;
        raw_derivatives(image, cfg.kernel, u, v, c, gx, gy);
        gx *= cfg.normalization;
        gy *= cfg.normalization;
        sx += gx * gx;
        sy += gy * gy;
      }
      out.magnitude.at(u, v) = std::sqrt(sx) + std::sqrt(sy);
    }
  }
  return out;
}

torch::Tensor gradient_magnitude(const torch::Tensor& patch, const OperatorConfig& cfg) {
  using torch::indexing::Slice;
  if (patch.dim() != 3 || patch.size(0) < 3 || patch.size(1) < 3)
    throw Error("privacy_operator", "gradient_magnitude expects an [H>=3, W>=3, C] patch");
  const auto h = patch.size(0), w = patch.size(1);
  auto at = [&](int dv, int du) {
    return patch.index({Slice(1 + dv, h - 1 + dv), Slice(1 + du, w - 1 + du)});
  };
  torch::Tensor gx, gy;
  if (cfg.kernel == KernelType::sobel) {
    gx = (at(-1, 1) - at(-1, -1)) + 2.0 * (at(0, 1) - at(0, -1)) + (at(1, 1) - at(1, -1));
    gy = (at(1, -1) - at(-1, -1)) + 2.0 * (at(1, 0) - at(-1, 0)) + (at(1, 1) - at(-1, 1));
  } else {
    gx = at(0, 1) - at(0, -1);
    gy = at(1, 0) - at(-1, 0);
  }
  gx = gx * cfg.normalization;
  gy = gy * cfg.normalization;
  auto safe_norm = [](const torch::Tensor& g) {
    const auto sq = (g * g).sum(-1);
    const auto positive = sq > 0;
    return torch::where(positive, torch::sqrt(torch::where(positive, sq, torch::ones_like(sq))),
                        torch::zeros_like(sq));
  };
  return safe_norm(gx) + safe_norm(gy);
}

MultiplicityReport verify_multiplicity(const Image& image, const OperatorConfig& cfg,
                                       const std::optional<OperatorConfig>& witness_cfg) {
  MultiplicityReport r;
  r.source = image;
  for (double& x : r.source.data) {
    const double snapped = std::round(std::clamp(x, 0.0, 1.0) * kLattice) / kLattice;
    r.quantization_error = std::max(r.quantization_error, std::abs(snapped - x));
    x = snapped;
  }
  r.negated = r.source;
  for (double& x : r.negated.data) x = 1.0 - x;

  r.shifted = r.source;
  for (int c = 0; c < image.channels; ++c) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = c; i < r.source.data.size(); i += image.channels) {
      lo = std::min(lo, r.source.data[i]);
      hi = std::max(hi, r.source.data[i]);
    }
    const double k = (1.0 - hi) >= lo ? (1.0 - hi) : -lo;
    for (std::size_t i = c; i < r.shifted.data.size(); i += image.channels) r.shifted.data[i] += k;
  }

  for (std::size_t i = 0; i < r.source.data.size(); ++i) {
    r.negated_distance = std::max(r.negated_distance, std::abs(r.negated.data[i] - r.source.data[i]));
    r.shifted_distance = std::max(r.shifted_distance, std::abs(r.shifted.data[i] - r.source.data[i]));
  }
  r.degenerate = r.negated == r.source;

  const OperatorConfig wcfg = witness_cfg.value_or(cfg);
  const Image base = protect_image(r.source, cfg).magnitude;
  r.negation_invariant = protect_image(r.negated, wcfg).magnitude == base;
  r.offset_invariant = protect_image(r.shifted, wcfg).magnitude == base;
  return r;
}

std::optional<Image> boundary_preserving_witness(const Image& image) {
  if (image.width < 3 || image.height < 3) return std::nullopt;
  Image out = image;
  for (int c = 0; c < image.channels; ++c) {
    const double a = image.at(0, image.height - 1, c);
    for (int v = 0; v < image.height; ++v)
      if (image.at(0, v, c) != a) return std::nullopt;
    for (int u = 0; u < image.width; ++u)
      if (image.at(u, image.height - 1, c) != a) return std::nullopt;
    for (int v = 0; v < image.height; ++v)
      for (int u = 0; u < image.width; ++u) out.at(u, v, c) = 2.0 * a - image.at(u, v, c);
  }
  return out;
}

ProtectResult protect_dataset(const Dataset& dataset, const OperatorConfig& cfg) {
  if (dataset.operator_config && *dataset.operator_config != cfg)
    throw Error("privacy_operator", "dataset already holds rasters from a different operator (" +
                                        dataset.operator_config->kernel_name() + ")");
  ProtectResult result{dataset, {}};
  Dataset& ds = result.dataset;
  bool any = false;
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    const ViewRecord& v = ds.views[i];
    if (v.sensitivity() != Sensitivity::protected_view) continue;
    if (!v.has_rgb()) {
      result.notices.push_back("view " + v.name() + " already protected; skipped");
      any = true;
      continue;
    }
    ProtectedImage p = protect_image(ds.rgb(i), cfg);
    ds.replace_with_protected(i, std::move(p));
    any = true;
  }
  if (any) ds.operator_config = cfg;
  return result;
}

std::vector<std::string> audit_protected_output(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> offending;
  std::ifstream in(dir / "split.json");
  if (!in) throw Error("privacy_operator", "audit: no split.json in " + dir.string());
  const auto split = nlohmann::json::parse(in);
  for (const auto& [name, value] : split.items()) {
    if (value.get<std::string>() != "protected") continue;
    const fs::path rgb = dir / "images" / (name + ".png");
    if (fs::exists(rgb) && png_channel_count(rgb) >= 3) offending.push_back(rgb.string());
    const fs::path prot = dir / "protected" / (name + ".png");
    if (fs::exists(prot) && png_channel_count(prot) != 1) offending.push_back(prot.string());
  }
  return offending;
}

}  // namespace gradsurf
