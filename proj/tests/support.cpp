#include "support.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <unistd.h>
#include <algorithm>
#include <functional>

namespace testing_support {

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path = std::filesystem::temp_directory_path() /
         ("gradsurf_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path, ec);
}

gradsurf::Image random_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  gradsurf::Image img(w, h, c);
  for (double& v : img.data) v = uni(rng);
  return img;
}

gradsurf::FieldConfig tiny_config() {
  gradsurf::FieldConfig c;
  c.sdf_layers = {16, 16};
  c.skip_layer = -1;
  c.radiance_layers = {16, 16};
  c.pos_freqs = 2;
  c.dir_freqs = 1;
  c.feature_dim = 4;
  c.beta_init = 0.05;
  return c;
}

std::vector<double> kernel_magnitude_oracle(const gradsurf::Image& img, bool sobel, bool pad) {
  const int w = img.width, h = img.height, ch = img.channels;
  auto px = [&](int u, int v, int c) {
    u = std::clamp(u, 0, w - 1);
    v = std::clamp(v, 0, h - 1);
    return img.at(u, v, c);
  };
  const int lo = pad ? 0 : 1;
  const int hi_u = pad ? w : w - 1, hi_v = pad ? h : h - 1;
  std::vector<double> out;
  for (int v = lo; v < hi_v; ++v) {
    for (int u = lo; u < hi_u; ++u) {
      double sx = 0.0, sy = 0.0;
      for (int c = 0; c < ch; ++c) {
        double gx, gy;
        if (sobel) {
          gx = ((px(u + 1, v - 1, c) + 2 * px(u + 1, v, c) + px(u + 1, v + 1, c)) -
                (px(u - 1, v - 1, c) + 2 * px(u - 1, v, c) + px(u - 1, v + 1, c))) / 8.0;
          gy = ((px(u - 1, v + 1, c) + 2 * px(u, v + 1, c) + px(u + 1, v + 1, c)) -
                (px(u - 1, v - 1, c) + 2 * px(u, v - 1, c) + px(u + 1, v - 1, c))) / 8.0;
        } else {
          gx = (px(u + 1, v, c) - px(u - 1, v, c)) / 2.0;
          gy = (px(u, v + 1, c) - px(u, v - 1, c)) / 2.0;
        }
        sx += gx * gx;
        sy += gy * gy;
      }
      out.push_back(std::sqrt(sx) + std::sqrt(sy));
    }
  }
  return out;
}

NaiveComposite naive_composite(const std::vector<std::array<double, 3>>& colors, const std::vector<double>& sigma,
                               const std::vector<double>& delta, const std::array<double, 3>& background) {
  NaiveComposite r{{0.0, 0.0, 0.0}, {}, {}, 0.0};
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    double t = 1.0;
    for (std::size_t j = 0; j < i; ++j) t *= std::exp(-sigma[j] * delta[j]);
    const double alpha = 1.0 - std::exp(-sigma[i] * delta[i]);
    const double w = t * alpha;
    r.transmittance.push_back(t);
    r.weights.push_back(w);
    r.opacity += w;
    for (int c = 0; c < 3; ++c) r.color[c] += w * colors[i][c];
  }
  for (int c = 0; c < 3; ++c) r.color[c] += (1.0 - r.opacity) * background[c];
  return r;
}

std::vector<double> brute_force_nearest(const std::vector<Eigen::Vector3d>& q, const std::vector<Eigen::Vector3d>& r) {
  std::vector<double> out;
  for (const auto& a : q) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : r) best = std::min(best, (a - b).norm());
    out.push_back(best);
  }
  return out;
}

gradsurf::FieldParams fit_sphere(double radius) {
  gradsurf::FieldConfig c = tiny_config();
  c.sdf_layers = {32, 32};
  c.init_radius = radius;
  gradsurf::FieldParams p = gradsurf::init_fields(c, 7, torch::kFloat64);
  p.set_requires_grad(true);
  torch::optim::Adam opt(p.parameters(), torch::optim::AdamOptions(3e-3));
  torch::manual_seed(3);
  for (int it = 0; it < 400; ++it) {
    const auto x = torch::rand({512, 3}, torch::kFloat64) * 2.0 - 1.0;
    const auto loss = (gradsurf::eval_sdf(p, x) - (x.norm(2, 1) - radius)).abs().mean();
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  return p;
}

// Central differences on a sample of entries of every parameter tensor.
// Returns the worst relative error.
double worst_fd_error(gradsurf::FieldParams& p, const std::function<torch::Tensor()>& loss, const std::string& label) {
  for (auto& t : p.parameters())
    if (t.grad().defined()) t.grad().zero_();
  loss().backward();
  const double h = 1e-4;
  double worst = 0.0;
  std::mt19937_64 rng(1);
  for (auto& [name, t] : p.named_parameters()) {
    const auto g = t.grad().defined() ? t.grad().clone().view(-1) : torch::zeros({t.numel()}, t.options());
    const int64_t n = t.numel();
    for (int k = 0; k < std::min<int64_t>(n, 6); ++k) {
      const int64_t i = n <= 6 ? k : static_cast<int64_t>(rng() % n);
      double fp, fm;
      {
        torch::NoGradGuard ng;
        auto flat = t.view(-1);
        flat[i] += h;
      }
      fp = loss().item<double>();
      {
        torch::NoGradGuard ng;
        auto flat = t.view(-1);
        flat[i] -= 2 * h;
      }
      fm = loss().item<double>();
      {
        torch::NoGradGuard ng;
        auto flat = t.view(-1);
        flat[i] += h;
      }
      const double fd = (fp - fm) / (2 * h);
      const double an = g[i].item<double>();
      const double rel = std::abs(fd - an) / std::max({std::abs(an), std::abs(fd), 1e-6});
      if (rel > 1e-2) std::cerr << label << " " << name << "[" << i << "] analytic " << an << " fd " << fd << "\n";
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace testing_support
