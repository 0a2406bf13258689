#include "gradsurf/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "gradsurf/error.hpp"

namespace gradsurf {

using torch::indexing::None;
using torch::indexing::Slice;

torch::Tensor sdf_to_density(const torch::Tensor& sdf, const torch::Tensor& beta) {
  if (!(beta > 0).all().item<bool>()) throw Error("volume_renderer", "beta must be positive");
  const auto s = -sdf;
  const auto psi = 0.5 + 0.5 * torch::sign(s) * (1.0 - torch::exp(-s.abs() / beta));
  return psi / beta;
}

double sdf_to_density(double sdf, double beta) {
  if (!(beta > 0.0)) throw Error("volume_renderer", "beta must be positive");
  const double s = -sdf;
  const double psi = s <= 0.0 ? 0.5 * std::exp(s / beta) : 1.0 - 0.5 * std::exp(-s / beta);
  return psi / beta;
}

std::vector<double> stratified_samples(double near, double far, int n, Rng& rng) {
  if (!(near < far)) throw Error("volume_renderer", "degenerate sampling interval");
  if (n < 1) throw Error("volume_renderer", "sample count must be >= 1");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double step = (far - near) / n;
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = near + (i + uni(rng)) * step;
  return t;
}

std::vector<double> importance_samples(const std::vector<double>& t, const std::vector<double>& weights, double near,
                                       double far, int n, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> out;
  out.reserve(n);
  double total = 0.0;
  for (double w : weights) total += std::max(w, 0.0);
  if (!(total > 0.0) || t.empty()) {
    for (int i = 0; i < n; ++i) out.push_back(near + uni(rng) * (far - near));
    return out;
  }
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += std::max(weights[i], 0.0) / total;
    cdf[i] = acc;
  }
  for (int k = 0; k < n; ++k) {
    const double u = uni(rng);
    std::size_t bin = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    bin = std::min(bin, cdf.size() - 1);
    const double lo_cdf = bin == 0 ? 0.0 : cdf[bin - 1];
    const double width = cdf[bin] - lo_cdf;
    const double frac = width > 0.0 ? (u - lo_cdf) / width : 0.5;
    const double a = t[bin];
    const double b = bin + 1 < t.size() ? t[bin + 1] : far;
    out.push_back(a + frac * (b - a));
  }
  return out;
}

SampleSet make_sample_set(const Ray& ray, std::vector<double> t, double far) {
  std::sort(t.begin(), t.end());
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) t[i] = std::nextafter(t[i - 1], std::numeric_limits<double>::infinity());
  SampleSet s;
  s.t = std::move(t);
  s.delta.resize(s.t.size());
  for (std::size_t i = 0; i + 1 < s.t.size(); ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  if (!s.t.empty()) s.delta.back() = std::max(far - s.t.back(), 1e-6);
  s.x.reserve(s.t.size());
  for (double ti : s.t) s.x.push_back(ray.origin + ti * ray.direction);
  return s;
}

SampleSet sample_ray(const Ray& ray, double near, double far, int n_coarse, int n_fine, std::uint64_t seed,
                     const CoarseWeightFn& coarse_weights) {
  if (n_fine < 0) throw Error("volume_renderer", "fine sample count must be >= 0");
  Rng rng(seed);
  std::vector<double> t = stratified_samples(near, far, n_coarse, rng);
  if (n_fine > 0) {
    const std::vector<double> w = coarse_weights ? coarse_weights(t) : std::vector<double>(t.size(), 0.0);
    const std::vector<double> fine = importance_samples(t, w, near, far, n_fine, rng);
    t.insert(t.end(), fine.begin(), fine.end());
  }
  return make_sample_set(ray, std::move(t), far);
}

RenderResult composite(const torch::Tensor& colors, const torch::Tensor& sigmas, const torch::Tensor& deltas,
                       const Eigen::Vector3d& background) {
  if (sigmas.dim() != 2 || deltas.sizes() != sigmas.sizes() || colors.dim() != 3 ||
      colors.size(0) != sigmas.size(0) || colors.size(1) != sigmas.size(1) || colors.size(2) != 3)
    throw Error("volume_renderer", "composite: colors [R,S,3], sigmas [R,S], deltas [R,S] length mismatch");
  RenderResult r;
  r.alpha = 1.0 - torch::exp(-sigmas * deltas);
  const auto survive = 1.0 - r.alpha;
  const auto ones = torch::ones({sigmas.size(0), 1}, sigmas.options());
  r.transmittance = torch::cumprod(torch::cat({ones, survive.index({Slice(), Slice(None, -1)})}, 1), 1);
  r.weights = r.transmittance * r.alpha;
  r.opacity = r.weights.sum(1);
  const auto bg = torch::tensor({background.x(), background.y(), background.z()}, colors.options());
  r.color = (r.weights.unsqueeze(-1) * colors).sum(1) + (1.0 - r.opacity).unsqueeze(-1) * bg;
  return r;
}

namespace {

torch::Tensor to_tensor(const std::vector<double>& v, std::vector<int64_t> shape, torch::ScalarType dtype) {
  return torch::from_blob(const_cast<double*>(v.data()), shape, torch::kFloat64).clone().to(dtype);
}

// Compositing weights of the coarse samples under the current geometry.
std::vector<std::vector<double>> coarse_weights(const FieldParams& geom, const std::vector<Ray>& rays,
                                                const std::vector<std::vector<double>>& t_coarse,
                                                const std::vector<double>& far) {
  const std::size_t h = rays.size();
  const int n = static_cast<int>(t_coarse.front().size());
  std::vector<double> pts(h * n * 3), deltas(h * n);
  for (std::size_t r = 0; r < h; ++r) {
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d x = rays[r].origin + t_coarse[r][i] * rays[r].direction;
      for (int k = 0; k < 3; ++k) pts[(r * n + i) * 3 + k] = x[k];
      deltas[r * n + i] = (i + 1 < n ? t_coarse[r][i + 1] : far[r]) - t_coarse[r][i];
    }
  }
  torch::NoGradGuard no_grad;
  const auto sdf = eval_sdf(geom, to_tensor(pts, {static_cast<int64_t>(h * n), 3}, geom.dtype()))
                       .to(torch::kFloat64)
                       .reshape({static_cast<int64_t>(h), n});
  const auto sigma = sdf_to_density(sdf, geom.beta().detach().to(torch::kFloat64));
  const auto colors = torch::zeros({static_cast<int64_t>(h), n, 3}, torch::kFloat64);
  const auto res = composite(colors, sigma, to_tensor(deltas, {static_cast<int64_t>(h), n}, torch::kFloat64));
  const auto w = res.weights.contiguous();
  std::vector<std::vector<double>> out(h, std::vector<double>(n));
  const double* wp = w.data_ptr<double>();
  for (std::size_t r = 0; r < h; ++r) std::copy(wp + r * n, wp + (r + 1) * n, out[r].begin());
  return out;
}

}  // namespace

RenderBatch render_rays(const FieldParams& geom, const FieldParams& radiance, const std::vector<Ray>& rays,
                        const RenderOptions& opts, Rng& rng, bool differentiable) {
  if (geom.config.feature_dim != radiance.config.feature_dim ||
      geom.config.radiance_input_dim() != radiance.config.radiance_input_dim())
    throw Error("volume_renderer", "geometry and radiance fields have mismatched configs (feature_dim)");
  const auto dtype = geom.dtype();
  const auto fopts = torch::TensorOptions().dtype(dtype);
  const int64_t n_rays = static_cast<int64_t>(rays.size());

  std::vector<Ray> hit_rays;
  std::vector<int64_t> hit_index;
  std::vector<double> near, far;
  std::vector<bool> hit_mask(rays.size(), false);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    double tn, tf;
    if (intersect_sphere(rays[r], opts.scene_bounds, tn, tf)) {
      hit_rays.push_back(rays[r]);
      hit_index.push_back(static_cast<int64_t>(r));
      near.push_back(tn);
      far.push_back(tf);
      hit_mask[r] = true;
    }
  }

  RenderBatch out;
  const auto bg = torch::tensor({opts.background.x(), opts.background.y(), opts.background.z()}, fopts);
  out.color = bg.unsqueeze(0).expand({n_rays, 3}).clone();
  out.opacity = torch::zeros({n_rays}, fopts);
  out.depth = torch::zeros({n_rays}, fopts);
  out.normal = torch::zeros({n_rays, 3}, fopts);
  std::vector<uint8_t> mask_bytes(hit_mask.begin(), hit_mask.end());
  out.hit = torch::from_blob(mask_bytes.data(), {n_rays}, torch::kUInt8).clone().to(torch::kBool);
  if (hit_rays.empty()) {
    out.t = torch::zeros({0, opts.n_coarse + opts.n_fine}, fopts);
    out.sdf_gradients = torch::zeros({0, 3}, fopts);
    return out;
  }

  const std::size_t h = hit_rays.size();
  std::vector<std::vector<double>> t_coarse(h);
  for (std::size_t r = 0; r < h; ++r) t_coarse[r] = stratified_samples(near[r], far[r], opts.n_coarse, rng);
  std::vector<std::vector<double>> w_coarse;
  if (opts.n_fine > 0) w_coarse = coarse_weights(geom, hit_rays, t_coarse, far);

  const int s = opts.n_coarse + opts.n_fine;
  std::vector<double> t_all(h * s), delta_all(h * s), pts(h * s * 3), dirs(h * s * 3);
  for (std::size_t r = 0; r < h; ++r) {
    std::vector<double> t = t_coarse[r];
    if (opts.n_fine > 0) {
      const auto fine = importance_samples(t_coarse[r], w_coarse[r], near[r], far[r], opts.n_fine, rng);
      t.insert(t.end(), fine.begin(), fine.end());
    }
    const SampleSet set = make_sample_set(hit_rays[r], std::move(t), far[r]);
    for (int i = 0; i < s; ++i) {
      t_all[r * s + i] = set.t[i];
      delta_all[r * s + i] = set.delta[i];
      for (int k = 0; k < 3; ++k) {
        pts[(r * s + i) * 3 + k] = set.x[i][k];
        dirs[(r * s + i) * 3 + k] = hit_rays[r].direction[k];
      }
    }
  }
  const int64_t hs = static_cast<int64_t>(h) * s;
  const auto x = to_tensor(pts, {hs, 3}, dtype);
  const auto d = to_tensor(dirs, {hs, 3}, dtype);
  out.t = to_tensor(t_all, {static_cast<int64_t>(h), s}, dtype);
  const auto delta = to_tensor(delta_all, {static_cast<int64_t>(h), s}, dtype);

  torch::AutoGradMode grad_mode(differentiable);
  const SdfOutput geo = eval_sdf_with_gradient(geom, x, differentiable);
  const auto grad_norm = geo.gradient.norm(2, -1, true);
  const auto normals = geo.gradient / torch::clamp_min(grad_norm, 1e-8);
  torch::Tensor feature = geo.feature;
  if (&geom != &radiance) feature = sdf_forward(radiance, x).feature;
  const auto colors = eval_radiance(radiance, x, normals, d, feature).reshape({static_cast<int64_t>(h), s, 3});
  const auto sigma = sdf_to_density(geo.sdf.reshape({static_cast<int64_t>(h), s}), geom.beta());
  out.samples = composite(colors, sigma, delta, opts.background);
  out.sdf_gradients = geo.gradient;

  const auto idx = torch::tensor(hit_index, torch::kLong);
  const auto w = out.samples.weights;
  const auto depth = (w * out.t).sum(1) / torch::clamp_min(out.samples.opacity, 1e-12);
  const auto normal = (w.unsqueeze(-1) * normals.reshape({static_cast<int64_t>(h), s, 3})).sum(1);
  out.color = out.color.index_copy(0, idx, out.samples.color);
  out.opacity = out.opacity.index_copy(0, idx, out.samples.opacity);
  out.depth = out.depth.index_copy(0, idx, depth);
  out.normal = out.normal.index_copy(0, idx, normal);
  return out;
}

RenderBatch render_pixels(const FieldParams& params, const Camera& camera, const std::vector<PixelCoord>& pixels,
                          const RenderOptions& opts, std::uint64_t seed) {
  Rng rng(seed);
  return render_rays(params, generate_rays(camera, pixels), opts, rng, false);
}

torch::Tensor render_patch(const FieldParams& params, const Camera& camera, int u0, int v0, int size,
                           const RenderOptions& opts, Rng& rng, bool differentiable) {
  if (size < 1) throw Error("volume_renderer", "patch size must be >= 1");
  if (u0 - 1 < 0 || v0 - 1 < 0 || u0 + size + 1 > camera.width || v0 + size + 1 > camera.height)
    throw Error("volume_renderer", "patch apron falls outside the image");
  std::vector<PixelCoord> pixels;
  pixels.reserve(static_cast<std::size_t>(size + 2) * (size + 2));
  for (int v = v0 - 1; v < v0 + size + 1; ++v)
    for (int u = u0 - 1; u < u0 + size + 1; ++u) pixels.push_back({static_cast<double>(u), static_cast<double>(v)});
  const RenderBatch b = render_rays(params, generate_rays(camera, pixels), opts, rng, differentiable);
  return b.color.reshape({size + 2, size + 2, 3});
}

namespace {

Image render_full(const FieldParams& geom, const FieldParams& radiance, const Camera& camera,
                  const RenderOptions& opts, std::uint64_t seed, RenderMode mode) {
  Rng rng(seed);
  Image img(camera.width, camera.height, 3);
  std::vector<PixelCoord> all;
  for (int v = 0; v < camera.height; ++v)
    for (int u = 0; u < camera.width; ++u) all.push_back({static_cast<double>(u), static_cast<double>(v)});
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, opts.chunk_rays));
  for (std::size_t start = 0; start < all.size(); start += chunk) {
    const std::size_t end = std::min(all.size(), start + chunk);
    const std::vector<PixelCoord> pixels(all.begin() + start, all.begin() + end);
    const RenderBatch b = render_rays(geom, radiance, generate_rays(camera, pixels), opts, rng, false);
    torch::Tensor values = mode == RenderMode::rgb ? b.color : (b.normal + 1.0) * 0.5;
    values = values.detach().to(torch::kFloat64).contiguous();
    const double* p = values.data_ptr<double>();
    std::copy(p, p + (end - start) * 3, img.data.begin() + start * 3);
  }
  return img;
}

}  // namespace

Image render_image(const FieldParams& params, const Camera& camera, const RenderOptions& opts, std::uint64_t seed,
                   RenderMode mode) {
  return render_full(params, params, camera, opts, seed, mode);
}

Image transfer_render(const FieldParams& geom, const FieldParams& radiance, const Camera& camera,
                      const RenderOptions& opts, std::uint64_t seed) {
  if (!(geom.config == radiance.config))
    throw Error("volume_renderer", "transfer needs checkpoints sharing one field config (feature_dim " +
                                       std::to_string(geom.config.feature_dim) + " vs " +
                                       std::to_string(radiance.config.feature_dim) + ")");
  return render_full(geom, radiance, camera, opts, seed, RenderMode::rgb);
}

}  // namespace gradsurf
