#include "gradsurf/trainer.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "gradsurf/error.hpp"
#include "gradsurf/extract.hpp"
#include "gradsurf/renderer.hpp"

namespace gradsurf {

using torch::indexing::Slice;

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.field = FieldConfig();
  c.grid_res = 512;
  return c;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.stage1_epochs = 200;
  c.stage2_epochs = 100;
  c.rays_per_step = 512;
  c.patches_per_step = 4;
  c.patch_size = 16;
  c.eikonal_points = 512;
  c.n_coarse = 32;
  c.n_fine = 16;
  c.field = FieldConfig::desk();
  c.grid_res = 256;
  return c;
}

TrainConfig TrainConfig::quick() {
  TrainConfig c = desk();
  c.stage1_epochs = 8;
  c.stage2_epochs = 20;
  c.rays_per_step = 256;
  c.patches_per_step = 2;
  c.patch_size = 16;
  c.eikonal_points = 256;
  c.n_coarse = 24;
  c.n_fine = 12;
  c.learning_rate = 1e-3;
  c.stage2_learning_rate = 3e-4;
  c.grid_res = 128;
  return c;
}

void TrainConfig::validate() const {
  if (!(stage1_epochs >= 0) || !(stage2_epochs >= 0)) throw Error("trainer", "epochs must be >= 0");
  if (rays_per_step < 1 || patches_per_step < 1 || patch_size < 1 || eikonal_points < 2)
    throw Error("trainer", "per-step sample counts must be positive");
  if (!(learning_rate > 0) || !(final_lr_ratio > 0 && final_lr_ratio <= 1) ||
      (stage2_learning_rate && !(*stage2_learning_rate > 0)))
    throw Error("trainer", "learning rate schedule is invalid");
  if (n_coarse < 1 || n_fine < 0) throw Error("trainer", "ray sample counts are invalid");
  if (grid_res < 16) throw Error("trainer", "grid_res must be >= 16");
  stage1_weights.validate();
  stage2_weights.validate();
  field.validate();
}

namespace {

nlohmann::json weights_json(const StageWeights& w) {
  return {{"rgb", w.rgb}, {"eikonal", w.eikonal}, {"lipschitz", w.lipschitz}, {"grad", w.grad}};
}

StageWeights weights_from_json(const nlohmann::json& j, StageWeights w) {
  for (const auto& [k, v] : j.items()) {
    if (k == "rgb") w.rgb = v.get<double>();
    else if (k == "eikonal") w.eikonal = v.get<double>();
    else if (k == "lipschitz") w.lipschitz = v.get<double>();
    else if (k == "grad") w.grad = v.get<double>();
    else throw Error("trainer", "unknown loss weight '" + k + "'");
  }
  return w;
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"stage1_epochs", stage1_epochs},
                      {"stage2_epochs", stage2_epochs},
                      {"rays_per_step", rays_per_step},
                      {"patches_per_step", patches_per_step},
                      {"patch_size", patch_size},
                      {"learning_rate", learning_rate},
                      {"final_lr_ratio", final_lr_ratio},
                      {"eikonal_points", eikonal_points},
                      {"n_coarse", n_coarse},
                      {"n_fine", n_fine},
                      {"seed", seed},
                      {"field", field.to_json()},
                      {"stage1_weights", weights_json(stage1_weights)},
                      {"stage2_weights", weights_json(stage2_weights)},
                      {"kernel", op.kernel_name()},
                      {"normalization", op.normalization},
                      {"grid_res", grid_res}};
  j["stage2_learning_rate"] = stage2_learning_rate ? nlohmann::json(*stage2_learning_rate) : nlohmann::json(nullptr);
  j["template_path"] = template_path ? nlohmann::json(*template_path) : nlohmann::json(nullptr);
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  if (!j.is_object()) throw Error("trainer", "train config must be a JSON object");
  TrainConfig c = base;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "stage1_epochs") c.stage1_epochs = v.get<double>();
      else if (k == "stage2_epochs") c.stage2_epochs = v.get<double>();
      else if (k == "rays_per_step") c.rays_per_step = v.get<int>();
      else if (k == "patches_per_step") c.patches_per_step = v.get<int>();
      else if (k == "patch_size") c.patch_size = v.get<int>();
      else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "final_lr_ratio") c.final_lr_ratio = v.get<double>();
      else if (k == "stage2_learning_rate") {
        if (v.is_null()) c.stage2_learning_rate.reset();
        else c.stage2_learning_rate = v.get<double>();
      }
      else if (k == "eikonal_points") c.eikonal_points = v.get<int>();
      else if (k == "n_coarse") c.n_coarse = v.get<int>();
      else if (k == "n_fine") c.n_fine = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "field") {
        nlohmann::json merged = c.field.to_json();
        merged.update(v);
        c.field = FieldConfig::from_json(merged);
      }
      else if (k == "stage1_weights") c.stage1_weights = weights_from_json(v, c.stage1_weights);
      else if (k == "stage2_weights") c.stage2_weights = weights_from_json(v, c.stage2_weights);
      else if (k == "kernel") {
        const double norm = c.op.normalization;
        const bool custom = !(c.op == OperatorConfig::from_name(c.op.kernel_name()));
        c.op = OperatorConfig::from_name(v.get<std::string>());
        if (custom) c.op.normalization = norm;
      } else if (k == "normalization") c.op.normalization = v.get<double>();
      else if (k == "grid_res") c.grid_res = v.get<int>();
      else if (k == "template_path") {
        if (v.is_null()) c.template_path.reset();
        else c.template_path = v.get<std::string>();
      } else throw Error("trainer", "unknown train config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("trainer", std::string("bad train config value: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }

std::string loss_csv_header() { return "step,stage,L_rgb,L_eik,L_lip,L_grad,total,beta"; }

std::string loss_csv_row(const LossRecord& r) {
  std::ostringstream os;
  os.precision(10);
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
    os << ',';
  };
  os << r.step << ',' << r.stage << ',';
  opt(r.rgb);
  opt(r.eikonal);
  opt(r.lipschitz);
  opt(r.grad);
  os << r.total << ',' << r.beta;
  return os.str();
}

std::int64_t stage1_total_steps(const Dataset& dataset, const TrainConfig& config) {
  std::int64_t pixels = 0;
  for (std::size_t i : dataset.indices(Sensitivity::neutral))
    pixels += static_cast<std::int64_t>(dataset.views[i].camera().width) * dataset.views[i].camera().height;
  return static_cast<std::int64_t>(std::ceil(config.stage1_epochs * static_cast<double>(pixels) / config.rays_per_step));
}

std::int64_t stage2_total_steps(const Dataset& dataset, const TrainConfig& config) {
  std::int64_t patches = 0;
  for (std::size_t i : dataset.indices(Sensitivity::protected_view)) {
    const Camera& c = dataset.views[i].camera();
    patches += static_cast<std::int64_t>((c.width - 2) / config.patch_size) * ((c.height - 2) / config.patch_size);
  }
  return static_cast<std::int64_t>(
      std::ceil(config.stage2_epochs * static_cast<double>(patches) / config.patches_per_step));
}

namespace {

struct NeutralView {
  Camera camera;
  torch::Tensor colors;  // [H*W, 3]
};

struct ProtectedView {
  Camera camera;
  Image magnitude;
};

struct StageSpec {
  std::string name;
  StageWeights weights;
  std::int64_t total_steps = 0;
  double learning_rate = 0.0;
};

std::vector<NeutralView> load_neutral(const Dataset& d, torch::ScalarType dtype) {
  std::vector<NeutralView> out;
  for (std::size_t i : d.indices(Sensitivity::neutral)) {
    const Image& img = d.rgb(i);
    NeutralView v{d.views[i].camera(), torch::from_blob(const_cast<double*>(img.data.data()),
                                                        {static_cast<int64_t>(img.pixel_count()), 3}, torch::kFloat64)
                                           .to(dtype)};
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<ProtectedView> load_protected(const Dataset& d, const TrainConfig& cfg) {
  if (d.count(Sensitivity::protected_view) == 0) throw Error("trainer", "stage 2 needs at least one protected view");
  if (d.operator_config && !(*d.operator_config == cfg.op))
    throw Error("trainer", "operator config mismatch: data protected with " + d.operator_config->kernel_name() +
                               " (normalization " + std::to_string(d.operator_config->normalization) +
                               "), training configured with " + cfg.op.kernel_name());
  std::vector<ProtectedView> out;
  for (std::size_t i : d.indices(Sensitivity::protected_view)) {
    const ViewRecord& v = d.views[i];
    if (!v.has_protected()) throw Error("trainer", "view " + v.name() + " has not been protected; run protect first");
    const ProtectedImage& p = d.protected_image(i);
    if (!(p.op == cfg.op)) throw Error("trainer", "operator config mismatch on view " + v.name());
    if (v.camera().width < cfg.patch_size + 2 || v.camera().height < cfg.patch_size + 2)
      throw Error("trainer", "patch size does not fit view " + v.name());
    out.push_back({v.camera(), p.magnitude});
  }
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> export_adam(torch::optim::Adam& opt, const FieldParams& params) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto& state = opt.state();
  for (const auto& [name, p] : params.named_parameters()) {
    const auto it = state.find(p.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    out.push_back({name + ".step", torch::tensor({static_cast<double>(s.step())})});
    out.push_back({name + ".exp_avg", s.exp_avg().detach().clone()});
    out.push_back({name + ".exp_avg_sq", s.exp_avg_sq().detach().clone()});
  }
  return out;
}

void import_adam(torch::optim::Adam& opt, const FieldParams& params,
                 const std::vector<std::pair<std::string, torch::Tensor>>& saved) {
  std::map<std::string, torch::Tensor> by_name(saved.begin(), saved.end());
  for (const auto& [name, p] : params.named_parameters()) {
    const auto step = by_name.find(name + ".step");
    if (step == by_name.end()) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(static_cast<int64_t>(step->second.item<double>()));
    s->exp_avg(by_name.at(name + ".exp_avg").to(p.scalar_type()).reshape(p.sizes()).clone());
    s->exp_avg_sq(by_name.at(name + ".exp_avg_sq").to(p.scalar_type()).reshape(p.sizes()).clone());
    opt.state()[p.unsafeGetTensorImpl()] = std::move(s);
  }
}

Eigen::Vector3d uniform_in_ball(Rng& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (;;) {
    const Eigen::Vector3d p(uni(rng), uni(rng), uni(rng));
    if (p.squaredNorm() <= 1.0) return p;
  }
}

StageResult run_stage(const StageSpec& spec, const FieldParams& init, const Dataset& dataset, const TrainConfig& cfg,
                      const Checkpoint* resume, bool template_origin) {
  FieldParams params = init.clone();
  params.set_requires_grad(true);
  const auto dtype = params.dtype();
  const StageWeights& w = spec.weights;

  // Only the rasters the active loss terms need are ever touched.
  std::vector<NeutralView> neutral;
  std::vector<ProtectedView> protect;
  std::vector<std::int64_t> pixel_offsets;
  std::int64_t total_pixels = 0;
  if (w.rgb > 0) {
    neutral = load_neutral(dataset, dtype);
    if (neutral.empty()) throw Error("trainer", "provide neutral views or a template");
    for (const auto& v : neutral) {
      pixel_offsets.push_back(total_pixels);
      total_pixels += v.colors.size(0);
    }
  }
  if (w.grad > 0) protect = load_protected(dataset, cfg);

  RenderOptions ropts;
  ropts.n_coarse = cfg.n_coarse;
  ropts.n_fine = cfg.n_fine;
  ropts.scene_bounds = dataset.scene_bounds;

  torch::optim::Adam opt(params.parameters(), torch::optim::AdamOptions(spec.learning_rate).eps(1e-15));
  Rng rng(cfg.seed ^ std::hash<std::string>{}(spec.name));
  std::int64_t step = 0;
  if (resume) {
    std::istringstream is(resume->rng_state);
    is >> rng;
    if (is.fail()) throw Error("trainer", "checkpoint rng state is unreadable");
    step = resume->step;
    import_adam(opt, params, resume->optimizer_state);
  }

  std::ofstream csv;
  if (!cfg.loss_csv.empty()) {
    const bool fresh = !std::filesystem::exists(cfg.loss_csv) || std::filesystem::file_size(cfg.loss_csv) == 0;
    csv.open(cfg.loss_csv, std::ios::app);
    if (!csv) throw Error("trainer", "cannot write loss log " + cfg.loss_csv);
    if (fresh) csv << loss_csv_header() << '\n';
  }

  StageResult result;
  const std::int64_t end =
      cfg.stop_after_steps >= 0 ? std::min(spec.total_steps, cfg.stop_after_steps) : spec.total_steps;
  std::uniform_int_distribution<std::int64_t> pick_pixel(0, std::max<std::int64_t>(total_pixels - 1, 0));
  for (; step < end; ++step) {
    const double progress = spec.total_steps > 0 ? static_cast<double>(step) / spec.total_steps : 0.0;
    const double lr = spec.learning_rate *
                      (cfg.final_lr_ratio + (1.0 - cfg.final_lr_ratio) * 0.5 * (1.0 + std::cos(M_PI * progress)));
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    opt.zero_grad();

    std::vector<torch::Tensor> sample_grads;
    torch::Tensor rgb_pred, rgb_ref;
    if (w.rgb > 0) {
      // Random pixels across all neutral views, drawn with replacement.
      std::vector<std::vector<PixelCoord>> per_view(neutral.size());
      std::vector<std::vector<int64_t>> per_view_idx(neutral.size());
      for (int r = 0; r < cfg.rays_per_step; ++r) {
        const std::int64_t g = pick_pixel(rng);
        const std::size_t v = std::upper_bound(pixel_offsets.begin(), pixel_offsets.end(), g) - pixel_offsets.begin() - 1;
        const std::int64_t local = g - pixel_offsets[v];
        const int width = neutral[v].camera.width;
        per_view[v].push_back({static_cast<double>(local % width), static_cast<double>(local / width)});
        per_view_idx[v].push_back(local);
      }
      std::vector<Ray> rays;
      std::vector<torch::Tensor> refs;
      for (std::size_t v = 0; v < neutral.size(); ++v) {
        if (per_view[v].empty()) continue;
        const auto rs = generate_rays(neutral[v].camera, per_view[v]);
        rays.insert(rays.end(), rs.begin(), rs.end());
        refs.push_back(neutral[v].colors.index_select(0, torch::tensor(per_view_idx[v], torch::kLong)));
      }
      const RenderBatch b = render_rays(params, rays, ropts, rng, true);
      rgb_pred = b.color;
      rgb_ref = torch::cat(refs, 0);
      sample_grads.push_back(b.sdf_gradients);
    }
    std::vector<torch::Tensor> patch_losses;
    if (w.grad > 0) {
      for (int k = 0; k < cfg.patches_per_step; ++k) {
        const ProtectedView& pv = protect[std::uniform_int_distribution<std::size_t>(0, protect.size() - 1)(rng)];
        const int p = cfg.patch_size;
        const int u0 = std::uniform_int_distribution<int>(1, pv.camera.width - 1 - p)(rng);
        const int v0 = std::uniform_int_distribution<int>(1, pv.camera.height - 1 - p)(rng);
        std::vector<double> ref(static_cast<std::size_t>(p) * p);
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x) ref[static_cast<std::size_t>(y) * p + x] = pv.magnitude.at(u0 + x, v0 + y);
        Rng& r = rng;
        std::vector<PixelCoord> pixels;
        for (int y = v0 - 1; y < v0 + p + 1; ++y)
          for (int x = u0 - 1; x < u0 + p + 1; ++x) pixels.push_back({static_cast<double>(x), static_cast<double>(y)});
        const RenderBatch b = render_rays(params, generate_rays(pv.camera, pixels), ropts, r, true);
        const auto patch = b.color.reshape({p + 2, p + 2, 3});
        const auto ref_t = torch::from_blob(ref.data(), {p, p}, torch::kFloat64).to(dtype);
        patch_losses.push_back(grad_loss(patch, ref_t, cfg.op, dataset.operator_config));
        sample_grads.push_back(b.sdf_gradients);
      }
    }

    LossTerms terms;
    terms.rgb = [&] { return rgb_loss(rgb_pred, rgb_ref); };
    terms.grad = [&] { return torch::stack(patch_losses).mean(); };
    terms.lipschitz = [&] { return lip_loss(params); };
    terms.eikonal = [&] {
      const int half = cfg.eikonal_points / 2;
      std::vector<torch::Tensor> grads;
      if (!sample_grads.empty()) {
        const auto all = torch::cat(sample_grads, 0);
        if (all.size(0) > 0) {
          std::vector<int64_t> idx(half);
          std::uniform_int_distribution<int64_t> pick(0, all.size(0) - 1);
          for (auto& i : idx) i = pick(rng);
          grads.push_back(all.index_select(0, torch::tensor(idx, torch::kLong)));
        }
      }
      const int n_uniform = cfg.eikonal_points - (grads.empty() ? 0 : half);
      std::vector<double> pts(static_cast<std::size_t>(n_uniform) * 3);
      for (int i = 0; i < n_uniform; ++i) {
        const Eigen::Vector3d p = uniform_in_ball(rng) * dataset.scene_bounds;
        for (int c = 0; c < 3; ++c) pts[static_cast<std::size_t>(i) * 3 + c] = p[c];
      }
      const auto x = torch::from_blob(pts.data(), {n_uniform, 3}, torch::kFloat64).to(dtype);
      grads.push_back(eval_sdf_with_gradient(params, x, true).gradient);
      return eikonal_loss(torch::cat(grads, 0));
    };
    const LossValues lv = total_loss(terms, w);
    const double total = lv.total.item<double>();
    if (!std::isfinite(total)) throw Error("trainer", "non-finite loss at " + spec.name + " step " + std::to_string(step));
    if (lv.total.requires_grad()) {
      lv.total.backward();
      opt.step();
    }

    LossRecord rec{step, spec.name, lv.rgb, lv.eikonal, lv.lipschitz, lv.grad, total, params.beta().item<double>()};
    if (csv) csv << loss_csv_row(rec) << '\n';
    result.log.push_back(std::move(rec));
  }

  Checkpoint& ck = result.checkpoint;
  ck.params = params.clone();
  ck.stage = spec.name;
  ck.step = step;
  std::ostringstream os;
  os << rng;
  ck.rng_state = os.str();
  ck.template_origin = template_origin;
  ck.train_config = cfg.to_json();
  ck.optimizer_state = export_adam(opt, params);
  return result;
}

}  // namespace

StageResult train_stage1(const Dataset& dataset, const TrainConfig& config, const std::optional<Checkpoint>& resume) {
  config.validate();
  if (config.template_path) {
    StageResult r;
    r.checkpoint.params = load_template(*config.template_path, &config.field);
    r.checkpoint.stage = "stage1";
    r.checkpoint.template_origin = true;
    r.checkpoint.train_config = config.to_json();
    return r;
  }
  if (dataset.count(Sensitivity::neutral) == 0) throw Error("trainer", "provide neutral views or a template");
  const StageSpec spec{"stage1", config.stage1_weights, stage1_total_steps(dataset, config), config.learning_rate};
  if (resume) {
    if (resume->stage != "stage1") throw Error("trainer", "cannot resume stage 1 from a '" + resume->stage + "' checkpoint");
    return run_stage(spec, resume->params, dataset, config, &*resume, resume->template_origin);
  }
  return run_stage(spec, init_fields(config.field, config.seed), dataset, config, nullptr, false);
}

StageResult train_stage2(const Checkpoint& start, const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (!(start.params.config == config.field))
    throw Error("trainer", "checkpoint field config differs from the training config");
  const StageSpec spec{"stage2", config.stage2_weights, stage2_total_steps(dataset, config),
                        config.stage2_learning_rate.value_or(config.learning_rate)};
  const bool resuming = start.stage == "stage2";
  return run_stage(spec, start.params, dataset, config, resuming ? &start : nullptr, start.template_origin);
}

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::grad_only: return "grad-only";
    case AblationMode::single_stage_both: return "single-stage-both";
    case AblationMode::two_stage: return "two-stage";
  }
  return "two-stage";
}

AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "grad-only" || s == "single-stage-grad-only") return AblationMode::grad_only;
  if (s == "single-stage-both" || s == "both") return AblationMode::single_stage_both;
  if (s == "two-stage") return AblationMode::two_stage;
  throw Error("trainer", "unknown ablation mode '" + s + "' (grad-only, single-stage-both, two-stage)");
}

StageResult run_single_stage(const Dataset& dataset, const TrainConfig& config, AblationMode mode) {
  config.validate();
  if (mode == AblationMode::two_stage) throw Error("trainer", "two-stage is not a single-stage regime");
  StageWeights w = config.stage2_weights;
  if (mode == AblationMode::single_stage_both) {
    w.rgb = config.stage1_weights.rgb;
    if (dataset.count(Sensitivity::neutral) == 0) throw Error("trainer", "provide neutral views or a template");
  }
  const StageSpec spec{"single", w, stage1_total_steps(dataset, config) + stage2_total_steps(dataset, config),
                        config.learning_rate};
  return run_stage(spec, init_fields(config.field, config.seed), dataset, config, nullptr, false);
}

AblationReport run_ablation(const Dataset& dataset, const TriangleMesh& gt_mesh, const TrainConfig& config,
                            const std::vector<AblationMode>& modes, std::size_t cd_samples) {
  AblationReport report;
  for (AblationMode m : modes) {
    Checkpoint ck;
    if (m == AblationMode::two_stage) {
      ck = train_stage2(train_stage1(dataset, config).checkpoint, dataset, config).checkpoint;
    } else {
      ck = run_single_stage(dataset, config, m).checkpoint;
    }
    const TriangleMesh mesh = extract_mesh(ck.params, config.grid_res, dataset.scene_bounds);
    report.cd[m] = chamfer_distance(mesh, gt_mesh, cd_samples, config.seed);
    report.checkpoints[m] = std::move(ck);
  }
  return report;
}

}  // namespace gradsurf
