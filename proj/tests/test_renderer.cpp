#include "doctest_torch.hpp"

#include <cmath>
#include <random>

#include "gradsurf/error.hpp"
#include "gradsurf/privacy.hpp"
#include "gradsurf/renderer.hpp"
#include "gradsurf/synthetic.hpp"
#include "support.hpp"

using namespace gradsurf;
using testing_support::tiny_config;

namespace {

Ray axis_ray() { return {Eigen::Vector3d(0, 0, -2.6), Eigen::Vector3d(0, 0, 1)}; }

torch::Tensor row(std::initializer_list<double> v) { return torch::tensor(std::vector<double>(v), torch::kFloat64).reshape({1, -1}); }

Camera front_camera(int res) {
  const double f = 0.5 * res * std::sqrt(2.6 * 2.6 - 1.0);
  return Camera::look_at(Eigen::Vector3d(0, 0, -2.6), Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), f, f, res, res);
}

void set_beta(FieldParams& p, double beta) {
  torch::NoGradGuard ng;
  p.beta_raw.fill_(beta - p.config.beta_min);
}

}  // namespace

TEST_CASE("sdf to density") {
  const double b = 0.1;
  CHECK(sdf_to_density(0.0, b) == doctest::Approx(0.5 / b));
  CHECK(sdf_to_density(1e3, b) < 1e-12);
  CHECK(sdf_to_density(-b, b) == doctest::Approx((1 - 0.5 * std::exp(-1.0)) / b));
  CHECK((1 - 0.5 * std::exp(-1.0)) == doctest::Approx(0.8161).epsilon(1e-4));
  CHECK_THROWS_AS(sdf_to_density(0.0, 0.0), Error);
  CHECK_THROWS_AS(sdf_to_density(0.0, -1.0), Error);
  const auto f = torch::tensor({-0.3, -0.1, 0.0, 0.05, 0.4}, torch::kFloat64);
  const auto s = sdf_to_density(f, torch::tensor(b, torch::kFloat64));
  for (int i = 0; i < 5; ++i) CHECK(s[i].item<double>() == doctest::Approx(sdf_to_density(f[i].item<double>(), b)));
  CHECK_THROWS_AS(sdf_to_density(f, torch::tensor(0.0, torch::kFloat64)), Error);
}

TEST_CASE("stratified sampling puts one sample in each stratum") {
  const SampleSet s = sample_ray(axis_ray(), 1.0, 3.0, 64, 0, 5);
  REQUIRE(s.t.size() == 64);
  for (int i = 0; i < 64; ++i) {
    CHECK(s.t[i] >= 1.0 + i * 2.0 / 64);
    CHECK(s.t[i] < 1.0 + (i + 1) * 2.0 / 64);
    CHECK(s.delta[i] > 0.0);
    CHECK((s.x[i] - (axis_ray().origin + s.t[i] * axis_ray().direction)).norm() < 1e-12);
  }
  for (int i = 0; i + 1 < 64; ++i) CHECK(s.delta[i] == doctest::Approx(s.t[i + 1] - s.t[i]));
  CHECK(s.delta.back() == doctest::Approx(3.0 - s.t.back()));
}

TEST_CASE("sample_ray is deterministic and validates its interval") {
  auto w = [](const std::vector<double>& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::exp(-20 * (t[i] - 2.1) * (t[i] - 2.1));
    return out;
  };
  const SampleSet a = sample_ray(axis_ray(), 1.6, 3.6, 32, 16, 11, w);
  const SampleSet b = sample_ray(axis_ray(), 1.6, 3.6, 32, 16, 11, w);
  CHECK((a.t == b.t));
  CHECK((a.delta == b.delta));
  CHECK(a.t.size() == 48);
  for (std::size_t i = 0; i + 1 < a.t.size(); ++i) CHECK(a.t[i] < a.t[i + 1]);
  CHECK((sample_ray(axis_ray(), 1.6, 3.6, 32, 16, 12, w).t != a.t));
  CHECK_THROWS_AS(sample_ray(axis_ray(), 2.0, 2.0, 8, 0, 0), Error);
  CHECK_THROWS_AS(sample_ray(axis_ray(), 1.0, 2.0, 0, 0, 0), Error);
}

TEST_CASE("importance sampling follows the weights and falls back to uniform") {
  Rng rng(1);
  const std::vector<double> t{0.0, 1.0, 2.0, 3.0};
  const auto peaked = importance_samples(t, {0.0, 0.0, 1.0, 0.0}, 0.0, 4.0, 500, rng);
  for (double x : peaked) CHECK((x >= 2.0 && x <= 3.0));
  const auto flat = importance_samples(t, {0.0, 0.0, 0.0, 0.0}, 0.0, 4.0, 20000, rng);
  double mean = 0.0;
  int first_quarter = 0;
  for (double x : flat) {
    mean += x / flat.size();
    if (x < 1.0) ++first_quarter;
  }
  CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
  CHECK(first_quarter / 20000.0 == doctest::Approx(0.25).epsilon(0.05));
  const SampleSet s = sample_ray(axis_ray(), 1.0, 3.0, 8, 8, 3,
                                 [](const std::vector<double>& tt) { return std::vector<double>(tt.size(), 0.0); });
  CHECK(s.t.size() == 16);
}

TEST_CASE("composite examples") {
  SUBCASE("transparent medium returns the background") {
    const auto r = composite(torch::rand({1, 5, 3}, torch::kFloat64), torch::zeros({1, 5}, torch::kFloat64),
                             torch::full({1, 5}, 0.1, torch::kFloat64), Eigen::Vector3d(0.2, 0.4, 0.6));
    CHECK(torch::allclose(r.color, row({0.2, 0.4, 0.6})));
    CHECK(r.weights.abs().max().item<double>() == 0.0);
    CHECK(torch::equal(r.transmittance, torch::ones({1, 5}, torch::kFloat64)));
  }
  SUBCASE("opaque first sample") {
    const auto c = torch::rand({1, 4, 3}, torch::kFloat64);
    const auto r = composite(c, row({1e9, 1.0, 1.0, 1.0}), row({1.0, 1.0, 1.0, 1.0}), Eigen::Vector3d(1, 1, 1));
    CHECK(torch::allclose(r.color, c.select(1, 0)));
    CHECK(r.transmittance[0][1].item<double>() == 0.0);
  }
  SUBCASE("two half-opaque samples") {
    const double s = std::log(2.0);  // alpha = 1 - e^{-s} = 0.5
    const auto c = torch::tensor({1.0, 1.0, 1.0, 0.0, 0.0, 0.0}, torch::kFloat64).reshape({1, 2, 3});
    const auto r = composite(c, row({s, s}), row({1.0, 1.0}));
    CHECK(torch::allclose(r.color, row({0.5, 0.5, 0.5})));
    CHECK(torch::allclose(r.weights, row({0.5, 0.25})));
    CHECK(torch::allclose(r.alpha, row({0.5, 0.5})));
  }
  CHECK_THROWS_AS(composite(torch::rand({1, 4, 3}), torch::rand({1, 3}), torch::rand({1, 4})), Error);
}

TEST_CASE("composite matches the explicit loop on random instances") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int inst = 0; inst < 1000; ++inst) {
    const int n = 1 + static_cast<int>(uni(rng) * 40);
    std::vector<std::array<double, 3>> cols(n);
    std::vector<double> sig(n), del(n);
    for (int i = 0; i < n; ++i) {
      cols[i] = {uni(rng), uni(rng), uni(rng)};
      sig[i] = uni(rng) < 0.3 ? 0.0 : -std::log(uni(rng) + 1e-12) * 5.0;
      del[i] = 1e-3 + uni(rng) * 0.2;
    }
    const std::array<double, 3> bg{uni(rng), uni(rng), uni(rng)};
    const auto oracle = testing_support::naive_composite(cols, sig, del, bg);

    auto ct = torch::empty({1, n, 3}, torch::kFloat64);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) ct[0][i][c] = cols[i][c];
    const auto st = torch::tensor(sig, torch::kFloat64).reshape({1, n});
    const auto dt = torch::tensor(del, torch::kFloat64).reshape({1, n});
    const auto r = composite(ct, st, dt, Eigen::Vector3d(bg[0], bg[1], bg[2]));
    for (int c = 0; c < 3; ++c) CHECK(std::abs(r.color[0][c].item<double>() - oracle.color[c]) < 1e-10);
    CHECK(std::abs(r.opacity[0].item<double>() - oracle.opacity) < 1e-10);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(r.weights[0][i].item<double>() - oracle.weights[i]) < 1e-10);
      CHECK(std::abs(r.transmittance[0][i].item<double>() - oracle.transmittance[i]) < 1e-10);
    }
    CHECK(r.transmittance[0][0].item<double>() == 1.0);
    CHECK((r.transmittance.slice(1, 1) <= r.transmittance.slice(1, 0, n - 1)).all().item<bool>());
    CHECK(r.opacity[0].item<double>() <= 1.0 + 1e-6);
    CHECK((r.weights >= 0).all().item<bool>());
  }
}

TEST_CASE("fitted sphere renders the analytic depth and empty space") {
  FieldParams p = testing_support::fit_sphere(0.5);
  set_beta(p, 0.005);
  RenderOptions opts;
  opts.n_coarse = 64;
  opts.n_fine = 64;
  const Camera cam = front_camera(32);
  const std::vector<PixelCoord> px{{15.5, 15.5}, {0.0, 0.0}, {3.0, 16.0}};
  const RenderBatch b = render_pixels(p, cam, px, opts, 2);
  CHECK(b.color.size(0) == 3);
  CHECK(b.opacity[0].item<double>() > 0.95);
  CHECK(std::abs(b.depth[0].item<double>() - 2.1) / 2.1 < 0.02);
  CHECK(b.opacity[1].item<double>() < 0.05);
  CHECK(b.opacity[2].item<double>() < 0.05);
  // rendered alone the first pixel sees different stratification but the same surface
  const RenderBatch single = render_pixels(p, cam, {px[0]}, opts, 9);
  CHECK(std::abs(single.depth[0].item<double>() - 2.1) / 2.1 < 0.02);
}

TEST_CASE("render_rays is differentiable and checks configs") {
  FieldParams p = init_fields(tiny_config(), 0);
  p.set_requires_grad(true);
  Rng rng(0);
  const auto rays = generate_rays(front_camera(8), {{4, 4}, {3, 5}});
  RenderOptions opts;
  opts.n_coarse = 8;
  opts.n_fine = 4;
  const RenderBatch b = render_rays(p, rays, opts, rng, true);
  b.color.sum().backward();
  double total = 0.0;
  for (const auto& t : p.parameters())
    if (t.grad().defined()) total += t.grad().abs().sum().item<double>();
  CHECK(total > 0.0);
  FieldConfig other = tiny_config();
  other.feature_dim = 6;
  CHECK_THROWS_AS(render_rays(p, init_fields(other, 0), rays, opts, rng, false), Error);
}

TEST_CASE("patch rendering") {
  const FieldParams p = init_fields(tiny_config(), 0);
  RenderOptions opts;
  opts.n_coarse = 8;
  opts.n_fine = 4;
  Rng rng(3);
  const Camera cam = front_camera(24);
  const auto patch = render_patch(p, cam, 4, 5, 16, opts, rng, false);
  CHECK(patch.sizes() == torch::IntArrayRef({18, 18, 3}));
  const auto mag = gradient_magnitude(patch, OperatorConfig::sobel());
  CHECK(mag.sizes() == torch::IntArrayRef({16, 16}));
  CHECK_THROWS_AS(render_patch(p, cam, 0, 0, 16, opts, rng, false), Error);
  CHECK_THROWS_AS(render_patch(p, cam, 8, 1, 16, opts, rng, false), Error);
  CHECK_NOTHROW(render_patch(p, cam, 7, 7, 16, opts, rng, false));
}

TEST_CASE("normal map") {
  FieldParams p = testing_support::fit_sphere(0.5);
  set_beta(p, 0.005);
  RenderOptions opts;
  opts.n_coarse = 32;
  opts.n_fine = 32;
  const Camera cam = front_camera(16);
  const Image n = render_image(p, cam, opts, 0, RenderMode::normal);
  for (int c = 0; c < 3; ++c) CHECK(n.at(0, 0, c) == doctest::Approx(0.5).epsilon(1e-6));
  const Eigen::Vector3d nn(2 * n.at(7, 7, 0) - 1, 2 * n.at(7, 7, 1) - 1, 2 * n.at(7, 7, 2) - 1);
  CHECK(nn.normalized().dot(-cam.optical_axis()) > 0.95);
  for (double v : n.data) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("transfer rendering") {
  const FieldParams a = init_fields(tiny_config(), 1);
  const FieldParams b = init_fields(tiny_config(), 2);
  RenderOptions opts;
  opts.n_coarse = 8;
  opts.n_fine = 4;
  const Camera cam = front_camera(8);
  CHECK(transfer_render(a, a, cam, opts, 4) == render_image(a, cam, opts, 4));
  CHECK_FALSE(transfer_render(a, b, cam, opts, 4) == render_image(a, cam, opts, 4));
  FieldConfig other = tiny_config();
  other.feature_dim = 6;
  CHECK_THROWS_AS(transfer_render(a, init_fields(other, 0), cam, opts, 4), Error);
}
