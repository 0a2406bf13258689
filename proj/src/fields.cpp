#include "gradsurf/fields.hpp"

#include <cmath>
#include <random>

#include "gradsurf/error.hpp"

namespace gradsurf {

using torch::indexing::None;
using torch::indexing::Slice;

FieldConfig FieldConfig::desk() {
  FieldConfig c;
  c.sdf_layers = {64, 64, 64};
  c.skip_layer = -1;
  c.radiance_layers = {64, 64};
  c.pos_freqs = 4;
  c.dir_freqs = 2;
  c.feature_dim = 16;
  c.beta_init = 0.03;  // the object spans half the bounding sphere; 0.1 fogs the whole volume
  return c;
}

void FieldConfig::validate() const {
  if (sdf_layers.empty() || radiance_layers.empty()) throw Error("neural_fields", "networks need >= 1 hidden layer");
  for (int w : sdf_layers)
    if (w < 1) throw Error("neural_fields", "layer widths must be >= 1");
  for (int w : radiance_layers)
    if (w < 1) throw Error("neural_fields", "layer widths must be >= 1");
  if (pos_freqs < 0 || dir_freqs < 0) throw Error("neural_fields", "encoding frequency counts must be >= 0");
  if (feature_dim < 0) throw Error("neural_fields", "feature_dim must be >= 0");
  if (skip_layer >= static_cast<int>(sdf_layers.size()) || skip_layer == 0)
    throw Error("neural_fields", "skip_layer must index a hidden layer after the first");
  if (!(beta_init > beta_min) || !(beta_min > 0.0)) throw Error("neural_fields", "need beta_init > beta_min > 0");
}

nlohmann::json FieldConfig::to_json() const {
  return {{"sdf_layers", sdf_layers},         {"skip_layer", skip_layer},   {"radiance_layers", radiance_layers},
          {"pos_freqs", pos_freqs},           {"dir_freqs", dir_freqs},     {"geometric_init", geometric_init},
          {"feature_dim", feature_dim},       {"init_radius", init_radius}, {"softplus_beta", softplus_beta},
          {"beta_init", beta_init},           {"beta_min", beta_min}};
}

FieldConfig FieldConfig::from_json(const nlohmann::json& j) {
  FieldConfig c;
  c.sdf_layers = j.value("sdf_layers", c.sdf_layers);
  c.skip_layer = j.value("skip_layer", c.skip_layer);
  c.radiance_layers = j.value("radiance_layers", c.radiance_layers);
  c.pos_freqs = j.value("pos_freqs", c.pos_freqs);
  c.dir_freqs = j.value("dir_freqs", c.dir_freqs);
  c.geometric_init = j.value("geometric_init", c.geometric_init);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.init_radius = j.value("init_radius", c.init_radius);
  c.softplus_beta = j.value("softplus_beta", c.softplus_beta);
  c.beta_init = j.value("beta_init", c.beta_init);
  c.beta_min = j.value("beta_min", c.beta_min);
  c.validate();
  return c;
}

double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

torch::Tensor FieldParams::beta() const { return beta_raw.abs() + config.beta_min; }

std::vector<std::pair<std::string, torch::Tensor>> FieldParams::named_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (std::size_t i = 0; i < sdf_weights.size(); ++i) {
    out.emplace_back("sdf." + std::to_string(i) + ".weight", sdf_weights[i]);
    out.emplace_back("sdf." + std::to_string(i) + ".bias", sdf_biases[i]);
  }
  for (std::size_t i = 0; i < rad_weights.size(); ++i) {
    out.emplace_back("radiance." + std::to_string(i) + ".weight", rad_weights[i]);
    out.emplace_back("radiance." + std::to_string(i) + ".bias", rad_biases[i]);
  }
  out.emplace_back("radiance.lipschitz_m", lipschitz_m);
  out.emplace_back("beta_raw", beta_raw);
  return out;
}

std::vector<torch::Tensor> FieldParams::parameters() const {
  std::vector<torch::Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

FieldParams FieldParams::clone() const {
  FieldParams p;
  p.config = config;
  auto copy = [](const std::vector<torch::Tensor>& v) {
    std::vector<torch::Tensor> o;
    for (const auto& t : v) o.push_back(t.detach().clone());
    return o;
  };
  p.sdf_weights = copy(sdf_weights);
  p.sdf_biases = copy(sdf_biases);
  p.rad_weights = copy(rad_weights);
  p.rad_biases = copy(rad_biases);
  p.lipschitz_m = lipschitz_m.detach().clone();
  p.beta_raw = beta_raw.detach().clone();
  return p;
}

void FieldParams::set_requires_grad(bool on) {
  for (auto& t : parameters()) t.requires_grad_(on);
}

namespace {

// Fills tensors from a seeded std engine so initialization is independent of
// torch's global generator.
struct InitSource {
  std::mt19937_64 rng;
  torch::ScalarType dtype;

  torch::Tensor normal(int64_t rows, int64_t cols, double mean, double std) {
    std::normal_distribution<double> d(mean, std);
    std::vector<double> buf(static_cast<std::size_t>(rows * cols));
    for (double& x : buf) x = d(rng);
    return torch::from_blob(buf.data(), {rows, cols}, torch::kFloat64).clone().to(dtype);
  }
  torch::Tensor uniform(std::vector<int64_t> shape, double bound) {
    std::uniform_real_distribution<double> d(-bound, bound);
    int64_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> buf(static_cast<std::size_t>(n));
    for (double& x : buf) x = d(rng);
    return torch::from_blob(buf.data(), shape, torch::kFloat64).clone().to(dtype);
  }
};

}  // namespace

FieldParams init_fields(const FieldConfig& config, std::uint64_t seed, torch::ScalarType dtype) {
  config.validate();
  FieldParams p;
  p.config = config;
  InitSource src{std::mt19937_64(seed), dtype};
  const auto opts = torch::TensorOptions().dtype(dtype);

  const int enc_dim = config.encoded_position_dim();
  std::vector<int> dims;
  dims.push_back(enc_dim);
  for (int w : config.sdf_layers) dims.push_back(w);
  dims.push_back(1 + config.feature_dim);
  const int n_layers = static_cast<int>(dims.size()) - 1;
  for (int l = 0; l < n_layers; ++l) {
    const int in = dims[l] + (l == config.skip_layer ? enc_dim : 0);
    const int out = dims[l + 1];
    torch::Tensor w, b;
    if (config.geometric_init) {
      if (l == n_layers - 1) {
        w = src.normal(out, in, std::sqrt(M_PI) / std::sqrt(in), 1e-4);
        b = torch::full({out}, -config.init_radius, opts);
      } else {
        w = src.normal(out, in, 0.0, std::sqrt(2.0) / std::sqrt(out));
        b = torch::zeros({out}, opts);
        // Frequency columns start at zero so the initial field is a smooth sphere.
        if (l == 0 && config.pos_freqs > 0) w.index_put_({Slice(), Slice(3, None)}, 0.0);
        if (l == config.skip_layer && config.pos_freqs > 0)
          w.index_put_({Slice(), Slice(dims[l] + 3, None)}, 0.0);
      }
    } else {
      const double bound = 1.0 / std::sqrt(in);
      w = src.uniform({out, in}, bound);
      b = src.uniform({out}, bound);
    }
    p.sdf_weights.push_back(w);
    p.sdf_biases.push_back(b);
  }

  std::vector<int> rdims;
  rdims.push_back(config.radiance_input_dim());
  for (int w : config.radiance_layers) rdims.push_back(w);
  rdims.push_back(3);
  std::vector<double> m_init;
  for (std::size_t l = 0; l + 1 < rdims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(rdims[l]);
    torch::Tensor w = src.uniform({rdims[l + 1], rdims[l]}, bound);
    p.rad_weights.push_back(w);
    p.rad_biases.push_back(src.uniform({rdims[l + 1]}, bound));
    const double inf_norm = w.to(torch::kFloat64).abs().sum(1).max().item<double>();
    m_init.push_back(softplus_inverse(inf_norm));
  }
  p.lipschitz_m = torch::tensor(m_init, torch::TensorOptions().dtype(torch::kFloat64)).to(dtype);
  p.beta_raw = torch::tensor(config.beta_init - config.beta_min, torch::TensorOptions().dtype(torch::kFloat64)).to(dtype);
  return p;
}

torch::Tensor positional_encode(const torch::Tensor& x, int frequencies) {
  if (frequencies < 0) throw Error("neural_fields", "frequency count must be >= 0");
  std::vector<torch::Tensor> parts{x};
  for (int k = 0; k < frequencies; ++k) {
    const auto scaled = x * (std::ldexp(1.0, k) * M_PI);
    parts.push_back(torch::sin(scaled));
    parts.push_back(torch::cos(scaled));
  }
  return torch::cat(parts, -1);
}

namespace {

void check_points(const torch::Tensor& x) {
  if (x.dim() != 2 || x.size(1) != 3) throw Error("neural_fields", "points must be an [N, 3] tensor");
  if (!torch::isfinite(x).all().item<bool>()) throw Error("neural_fields", "non-finite input point");
}

}  // namespace

SdfOutput sdf_forward(const FieldParams& params, const torch::Tensor& x) {
  check_points(x);
  const auto& cfg = params.config;
  const torch::Tensor enc = positional_encode(x.to(params.dtype()), cfg.pos_freqs);
  torch::Tensor h = enc;
  const std::size_t n = params.sdf_weights.size();
  for (std::size_t l = 0; l < n; ++l) {
    if (static_cast<int>(l) == cfg.skip_layer) h = torch::cat({h, enc}, -1) / std::sqrt(2.0);
    h = torch::addmm(params.sdf_biases[l], h, params.sdf_weights[l].t());
    if (l + 1 < n) h = torch::nn::functional::softplus(h, torch::nn::functional::SoftplusFuncOptions().beta(cfg.softplus_beta));
  }
  SdfOutput out;
  out.sdf = h.index({Slice(), 0});
  out.feature = h.index({Slice(), Slice(1, None)});
  return out;
}

torch::Tensor eval_sdf(const FieldParams& params, const torch::Tensor& x) { return sdf_forward(params, x).sdf; }

SdfOutput eval_sdf_with_gradient(const FieldParams& params, const torch::Tensor& x, bool create_graph) {
  torch::Tensor xg = x.detach().to(params.dtype()).requires_grad_(true);
  SdfOutput out;
  {
    torch::AutoGradMode enable(true);
    out = sdf_forward(params, xg);
    out.gradient = torch::autograd::grad({out.sdf}, {xg}, {torch::ones_like(out.sdf)}, create_graph, create_graph,
                                         /*allow_unused=*/true)[0];
  }
  if (!out.gradient.defined()) out.gradient = torch::zeros_like(xg);
  if (!create_graph) {
    out.sdf = out.sdf.detach();
    out.feature = out.feature.detach();
    out.gradient = out.gradient.detach();
  }
  return out;
}

torch::Tensor eval_sdf_grad(const FieldParams& params, const torch::Tensor& x) {
  return eval_sdf_with_gradient(params, x, false).gradient;
}

torch::Tensor lipschitz_normalize(const torch::Tensor& weight, const torch::Tensor& m) {
  const auto inf_norm = weight.abs().sum(1).max();
  const auto bound = torch::nn::functional::softplus(m);
  const auto scale = torch::clamp_max(bound / torch::clamp_min(inf_norm, 1e-30), 1.0);
  return weight * scale;
}

torch::Tensor lipschitz_forward(const torch::Tensor& weight, const torch::Tensor& bias, const torch::Tensor& m,
                                const torch::Tensor& x, bool relu) {
  auto y = torch::addmm(bias, x, lipschitz_normalize(weight, m).t());
  return relu ? torch::relu(y) : y;
}

torch::Tensor lipschitz_product(const FieldParams& params) {
  return torch::nn::functional::softplus(params.lipschitz_m).prod();
}

torch::Tensor radiance_input(const FieldParams& params, const torch::Tensor& x, const torch::Tensor& normal,
                             const torch::Tensor& dir, const torch::Tensor& feature) {
  const auto n = x.size(0);
  if (x.dim() != 2 || normal.sizes() != x.sizes() || dir.sizes() != x.sizes() || x.size(1) != 3)
    throw Error("neural_fields", "radiance inputs x, normal, dir must all be [N, 3]");
  if (feature.dim() != 2 || feature.size(0) != n || feature.size(1) != params.config.feature_dim)
    throw Error("neural_fields", "feature must be [N, feature_dim]");
  return torch::cat({x, normal, positional_encode(dir, params.config.dir_freqs), feature}, -1).to(params.dtype());
}

torch::Tensor radiance_preactivation(const FieldParams& params, const torch::Tensor& input) {
  if (input.dim() != 2 || input.size(1) != params.config.radiance_input_dim())
    throw Error("neural_fields", "radiance input has the wrong width");
  torch::Tensor h = input;
  const std::size_t n = params.rad_weights.size();
  for (std::size_t l = 0; l < n; ++l)
    h = lipschitz_forward(params.rad_weights[l], params.rad_biases[l], params.lipschitz_m.index({static_cast<int64_t>(l)}),
                          h, l + 1 < n);
  return h;
}

torch::Tensor eval_radiance(const FieldParams& params, const torch::Tensor& x, const torch::Tensor& normal,
                            const torch::Tensor& dir, const torch::Tensor& feature) {
  return torch::sigmoid(radiance_preactivation(params, radiance_input(params, x, normal, dir, feature)));
}

}  // namespace gradsurf
