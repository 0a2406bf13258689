#include "doctest_torch.hpp"

#include <cmath>
#include <random>

#include "gradsurf/checkpoint.hpp"
#include "gradsurf/error.hpp"
#include "gradsurf/fields.hpp"
#include "support.hpp"

using namespace gradsurf;
using testing_support::TempDir;
using testing_support::tiny_config;

namespace {

torch::Tensor pt(double x, double y, double z) { return torch::tensor({x, y, z}, torch::kFloat64).reshape({1, 3}); }

}  // namespace

TEST_CASE("config validation") {
  FieldConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.beta_init = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.radiance_layers.clear();
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(FieldConfig::from_json(tiny_config().to_json()) == tiny_config());
}

TEST_CASE("sdf evaluation is shaped, pure and rejects non-finite input") {
  const FieldParams p = init_fields(tiny_config(), 1);
  const auto x = torch::rand({37, 3});
  const auto a = eval_sdf(p, x);
  CHECK(a.dim() == 1);
  CHECK(a.size(0) == 37);
  CHECK(torch::equal(a, eval_sdf(p, x)));
  CHECK(torch::equal(a, eval_sdf(init_fields(tiny_config(), 1), x)));
  CHECK_FALSE(torch::equal(a, eval_sdf(init_fields(tiny_config(), 2), x)));
  auto bad = x.clone();
  bad[3][1] = std::nan("");
  CHECK_THROWS_AS(eval_sdf(p, bad), Error);
}

TEST_CASE("geometric initialization is negative inside and grows outward") {
  const FieldParams p = init_fields(FieldConfig::desk(), 0, torch::kFloat64);
  const auto x = torch::nn::functional::normalize(torch::randn({64, 3}, torch::kFloat64),
                                                  torch::nn::functional::NormalizeFuncOptions().dim(1));
  // negative at the centre, growing outward on average
  double prev = eval_sdf(p, pt(0, 0, 0)).item<double>();
  CHECK(prev < 0.0);
  CHECK(eval_sdf(p, x * 0.2).max().item<double>() < 0.0);
  for (double r : {0.25, 0.5, 0.75, 1.0}) {
    const double mean = eval_sdf(p, x * r).mean().item<double>();
    CHECK(mean > prev);
    prev = mean;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("spatial gradient matches central finite differences") {
  FieldConfig c = tiny_config();
  c.skip_layer = 1;
  c.sdf_layers = {16, 16, 16};
  const FieldParams p = init_fields(c, 5, torch::kFloat64);
  torch::manual_seed(0);
  const auto x = torch::rand({100, 3}, torch::kFloat64) * 1.6 - 0.8;
  const auto g = eval_sdf_grad(p, x);
  const double h = 1e-4;
  for (int k = 0; k < 3; ++k) {
    auto e = torch::zeros({1, 3}, torch::kFloat64);
    e[0][k] = h;
    const auto fd = (eval_sdf(p, x + e) - eval_sdf(p, x - e)) / (2 * h);
    const auto an = g.select(1, k);
    const auto rel = (fd - an).abs() / an.abs().clamp_min(1e-3);
    CHECK(rel.max().item<double>() < 1e-3);
  }
}

TEST_CASE("sphere fit by direct regression") {
  const FieldParams p = testing_support::fit_sphere(0.5);
  CHECK(std::abs(eval_sdf(p, pt(0.5, 0, 0)).item<double>()) < 0.01);
  const auto g = eval_sdf_grad(p, pt(0.5, 0, 0));
  CHECK(g[0][0].item<double>() / g.norm().item<double>() >= 0.99);
}

TEST_CASE("constant network has zero spatial gradient") {
  FieldParams p = init_fields(tiny_config(), 1, torch::kFloat64);
  {
    torch::NoGradGuard ng;
    for (auto& w : p.sdf_weights) w.zero_();
  }
  CHECK(eval_sdf_grad(p, torch::rand({10, 3}, torch::kFloat64)).abs().max().item<double>() == 0.0);
}

TEST_CASE("lipschitz normalization by hand") {
  const auto w = torch::tensor({1.0, -1.0, 0.5, 0.5}, torch::kFloat64).reshape({2, 2});  // row sums 2 and 1
  const auto one = torch::tensor(softplus_inverse(1.0), torch::kFloat64);
  CHECK(torch::allclose(lipschitz_normalize(w, one), w / 2, 0, 1e-15));
  const auto big = torch::tensor(softplus_inverse(5.0), torch::kFloat64);
  CHECK(torch::equal(lipschitz_normalize(w, big), w));
  const auto z = torch::zeros({3, 2}, torch::kFloat64);
  CHECK(torch::equal(lipschitz_normalize(z, torch::tensor(-3.0, torch::kFloat64)), z));

  const auto x = torch::tensor({1.0, 2.0}, torch::kFloat64).reshape({1, 2});
  const auto b = torch::tensor({-0.5, 0.0}, torch::kFloat64);
  const auto y = lipschitz_forward(w, b, one, x);
  // W/2 x = (-0.5, 0.75); minus 0.5 then ReLU
  CHECK(y[0][0].item<double>() == 0.0);
  CHECK(y[0][1].item<double>() == doctest::Approx(0.75));
}

TEST_CASE("lipschitz product") {
  FieldConfig c = tiny_config();
  c.radiance_layers = {8, 8};  // three layers including the output
  FieldParams p = init_fields(c, 0, torch::kFloat64);
  {
    torch::NoGradGuard ng;
    p.lipschitz_m.fill_(0.0);
  }
  CHECK(lipschitz_product(p).item<double>() == doctest::Approx(std::pow(std::log(2.0), 3)).epsilon(1e-12));
  CHECK(std::pow(std::log(2.0), 3) == doctest::Approx(0.33303).epsilon(1e-4));
  {
    torch::NoGradGuard ng;
    p.lipschitz_m.fill_(std::log(std::exp(1.0) - 1.0));
  }
  CHECK(lipschitz_product(p).item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  {
    torch::NoGradGuard ng;
    p.lipschitz_m.uniform_(-30.0, 30.0);
  }
  CHECK(lipschitz_product(p).item<double>() > 0.0);
}

TEST_CASE("radiance output is in range, pure, and shape-checked") {
  const FieldParams p = init_fields(tiny_config(), 3);
  const int n = 50;
  const auto x = torch::randn({n, 3}) * 3;
  const auto nrm = torch::nn::functional::normalize(torch::randn({n, 3}),
                                                    torch::nn::functional::NormalizeFuncOptions().dim(1));
  const auto d = torch::nn::functional::normalize(torch::randn({n, 3}),
                                                  torch::nn::functional::NormalizeFuncOptions().dim(1));
  const auto f = torch::randn({n, 4}) * 10;
  const auto c = eval_radiance(p, x, nrm, d, f);
  CHECK(c.size(1) == 3);
  CHECK(c.min().item<double>() >= 0.0);
  CHECK(c.max().item<double>() <= 1.0);
  CHECK(torch::equal(c, eval_radiance(p, x, nrm, d, f)));
  CHECK_THROWS_AS(eval_radiance(p, x, nrm, d, torch::randn({n, 5})), Error);
  CHECK_THROWS_AS(eval_radiance(p, x.slice(0, 0, 10), nrm, d, f), Error);
}

TEST_CASE("pre-squash radiance respects the product bound on random pairs") {
  FieldConfig c = tiny_config();
  c.radiance_layers = {32, 32, 32};
  FieldParams p = init_fields(c, 11, torch::kFloat64);
  {
    torch::NoGradGuard ng;
    p.lipschitz_m.uniform_(-1.0, 2.0);
  }
  const double bound = lipschitz_product(p).item<double>();
  torch::manual_seed(4);
  const int n = 10000, dim = c.radiance_input_dim();
  const auto x1 = torch::randn({n, dim}, torch::kFloat64);
  const auto eps = torch::rand({n, 1}, torch::kFloat64) * 0.5;
  const auto x2 = x1 + (torch::rand({n, dim}, torch::kFloat64) * 2 - 1) * eps;
  const auto dx = (x2 - x1).abs().amax(1);
  const auto dy = (radiance_preactivation(p, x2) - radiance_preactivation(p, x1)).abs().amax(1);
  const auto violations = (dy > dx * bound + 1e-6).sum().item<int64_t>();
  CHECK(violations == 0);
}

TEST_CASE("positional encoding") {
  const auto x = torch::tensor({0.3, -0.7, 0.1}).reshape({1, 3});
  CHECK(torch::equal(positional_encode(x, 0), x));
  CHECK(positional_encode(x, 6).size(1) == 39);
  const auto z = positional_encode(torch::zeros({1, 3}), 4);
  for (int l = 0; l < 4; ++l) {
    CHECK(z.slice(1, 3 + 6 * l, 6 + 6 * l).abs().max().item<double>() == 0.0);
    CHECK(torch::equal(z.slice(1, 6 + 6 * l, 9 + 6 * l), torch::ones({1, 3})));
  }
  const auto e = positional_encode(x.to(torch::kFloat64), 2);
  CHECK(e[0][3 + 6 + 1].item<double>() == doctest::Approx(std::sin(2.0 * M_PI * -0.7)));
  CHECK(e[0][3 + 6 + 3 + 1].item<double>() == doctest::Approx(std::cos(2.0 * M_PI * -0.7)));
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  Checkpoint ck;
  ck.params = init_fields(tiny_config(), 9);
  ck.stage = "stage1";
  ck.step = 42;
  ck.rng_state = "1 2 3";
  ck.optimizer_state.emplace_back("adam/x", torch::randn({3, 2}));
  save_checkpoint(dir / "a.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.params.config == ck.params.config);
  CHECK(back.stage == "stage1");
  CHECK(back.step == 42);
  CHECK(back.rng_state == "1 2 3");
  const auto a = ck.params.named_parameters(), b = back.params.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(torch::equal(a[i].second, b[i].second));
  }
  REQUIRE(back.optimizer_state.size() == 1);
  CHECK(torch::equal(back.optimizer_state[0].second, ck.optimizer_state[0].second));

  const FieldParams t = load_template(dir / "a.ckpt");
  CHECK(torch::equal(t.beta_raw, ck.params.beta_raw));
  FieldConfig other = tiny_config();
  other.feature_dim = 8;
  CHECK_THROWS_AS(load_template(dir / "a.ckpt", &other), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}
