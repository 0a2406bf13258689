#include "gradsurf/losses.hpp"

#include <cmath>

#include "gradsurf/error.hpp"
#include "gradsurf/privacy.hpp"

namespace gradsurf {

void StageWeights::validate() const {
  for (double w : {rgb, eikonal, lipschitz, grad})
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("losses", "loss weights must be finite and non-negative");
}

torch::Tensor rgb_loss(const torch::Tensor& rendered, const torch::Tensor& reference) {
  if (rendered.sizes() != reference.sizes())
    throw Error("losses", "rgb_loss shape mismatch");
  if (rendered.dim() < 1 || rendered.numel() == 0) throw Error("losses", "rgb_loss needs at least one pixel");
  return (rendered - reference).abs().sum(-1).mean();
}

torch::Tensor eikonal_loss(const torch::Tensor& gradients) {
  if (gradients.dim() != 2 || gradients.size(1) != 3) throw Error("losses", "eikonal_loss expects [N, 3] gradients");
  if (gradients.size(0) == 0) throw Error("losses", "eikonal_loss needs N >= 1 points");
  return (gradients.norm(2, -1) - 1.0).pow(2).mean();
}

torch::Tensor grad_loss(const torch::Tensor& rendered_patch, const torch::Tensor& reference, const OperatorConfig& cfg,
                        const std::optional<OperatorConfig>& expected) {
  if (expected && !(*expected == cfg))
    throw Error("losses", "operator config mismatch: data was protected with " + expected->kernel_name() +
                              ", loss configured with " + cfg.kernel_name());
  const auto mag = gradient_magnitude(rendered_patch, cfg);
  if (mag.sizes() != reference.sizes())
    throw Error("losses", "grad_loss: patch interior and protected reference differ in shape");
  return (mag - reference.to(mag.dtype())).abs().mean();
}

torch::Tensor lip_loss(const FieldParams& params) { return lipschitz_product(params); }

LossValues total_loss(const LossTerms& terms, const StageWeights& w) {
  w.validate();
  LossValues out;
  torch::Tensor total;
  auto add = [&](double weight, const std::function<torch::Tensor()>& fn, std::optional<double>& slot,
                 const char* name) {
    if (weight == 0.0) return;
    if (!fn) throw Error("losses", std::string("no ") + name + " term supplied for a non-zero weight");
    const torch::Tensor v = fn();
    slot = v.item<double>();
    total = total.defined() ? total + weight * v : weight * v;
  };
  add(w.rgb, terms.rgb, out.rgb, "rgb");
  add(w.eikonal, terms.eikonal, out.eikonal, "eikonal");
  add(w.lipschitz, terms.lipschitz, out.lipschitz, "lipschitz");
  add(w.grad, terms.grad, out.grad, "grad");
  out.total = total.defined() ? total : torch::zeros({}, torch::kFloat64);
  return out;
}

}  // namespace gradsurf
