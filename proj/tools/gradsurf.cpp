// gradsurf: privacy-preserving two-stage SDF reconstruction.
#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "gradsurf/chamfer.hpp"
#include "gradsurf/checkpoint.hpp"
#include "gradsurf/dataset.hpp"
#include "gradsurf/error.hpp"
#include "gradsurf/extract.hpp"
#include "gradsurf/privacy.hpp"
#include "gradsurf/renderer.hpp"
#include "gradsurf/synthetic.hpp"
#include "gradsurf/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gradsurf;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex(const unsigned char* d, unsigned n) {
  std::ostringstream os;
  for (unsigned i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(d[i]);
  return os.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  void update_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) update(buf, static_cast<std::size_t>(in.gcount()));
  }
  std::string hex_digest() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    EVP_DigestFinal_ex(ctx_, md, &n);
    return hex(md, n);
  }

 private:
  EVP_MD_CTX* ctx_;
};

// Files hash individually; directories hash every regular file by relative path.
std::string hash_input(const fs::path& p) {
  Sha256 h;
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string rel = fs::relative(f, p).generic_string();
      h.update(rel.data(), rel.size() + 1);
      h.update_file(f);
    }
  } else if (fs::is_regular_file(p)) {
    h.update_file(p);
  } else {
    return "missing";
  }
  return h.hex_digest();
}

struct Manifest {
  explicit Manifest(std::string c) : command(std::move(c)) {}

  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;
  std::string started = now_utc();

  void input(const std::string& key, const fs::path& p) { inputs[key] = p.string(); }

  void write(const fs::path& out, bool out_is_dir) const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["tool_version"] = kVersion;
    json hashes = json::object();
    for (const auto& [k, p] : inputs) hashes[k] = {{"path", p}, {"sha256", hash_input(p)}};
    j["input_hashes"] = hashes;
    j["timestamps"] = {{"started", started}, {"finished", now_utc()}};
    const fs::path target = out_is_dir ? out / "manifest.json" : fs::path(out.string() + ".manifest.json");
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::ofstream f(target);
    f << j.dump(2) << '\n';
  }
};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cli", "cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("cli", "invalid JSON in " + p.string() + ": " + e.what());
  }
}

// A config file is either a bare TrainConfig object or a run manifest whose
// "config" section is replayed.
json load_config_file(const fs::path& p) {
  json j = read_json(p);
  if (j.contains("command") && j.contains("config")) j = j["config"];
  return j;
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw Error("cli", "cannot write " + p.string());
  f << j.dump(2) << '\n';
}

json cd_json(const CdReport& r) {
  return {{"cd", r.cd}, {"mean_ab", r.mean_ab}, {"mean_ba", r.mean_ba}, {"n_samples", r.n_samples},
          {"mode", to_string(r.mode)}};
}

struct PresetOpts {
  std::string preset = "quick";
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string kernel;
  std::optional<int> grid_res;
};

void add_preset_opts(CLI::App* app, PresetOpts& o) {
  app->add_option("--preset", o.preset, "quick | desk | paper")->check(CLI::IsMember({"quick", "desk", "paper"}));
  app->add_flag_callback("--quick", [&o] { o.preset = "quick"; }, "alias for --preset quick");
  app->add_flag_callback("--paper", [&o] { o.preset = "paper"; }, "alias for --preset paper");
  app->add_option("--config", o.config_file, "train config JSON or a manifest to replay");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--kernel", o.kernel, "privacy operator: sobel | cdiff")
      ->check(CLI::IsMember({"sobel", "cdiff", "central-diff"}));
  app->add_option("--grid-res", o.grid_res, "marching-cubes lattice size");
}

TrainConfig resolve_config(const PresetOpts& o, json* section = nullptr) {
  TrainConfig c = o.preset == "paper" ? TrainConfig::paper() : o.preset == "desk" ? TrainConfig::desk() : TrainConfig::quick();
  if (!o.config_file.empty()) {
    json j = load_config_file(o.config_file);
    if (j.contains("train")) {
      if (section) *section = j;
      j = j["train"];
    }
    c = TrainConfig::from_json(j, c);
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.kernel.empty()) c.op = OperatorConfig::from_name(o.kernel);
  if (o.grid_res) c.grid_res = *o.grid_res;
  c.validate();
  return c;
}

std::size_t find_view(const Dataset& d, const std::string& view) {
  for (std::size_t i = 0; i < d.views.size(); ++i)
    if (d.views[i].name() == view) return i;
  try {
    const std::size_t i = std::stoul(view);
    if (i < d.views.size()) return i;
  } catch (const std::exception&) {
  }
  throw Error("cli", "no view named '" + view + "'");
}

Eigen::Vector3d parse_vec(const std::vector<double>& v, std::size_t off) { return {v[off], v[off + 1], v[off + 2]}; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// ---- commands ----------------------------------------------------------

struct SynthArgs {
  std::string shape = "sphere";
  std::uint64_t texture_seed = 0;
  std::uint64_t seed = 0;
  int views = 30;
  int resolution = 64;
  double noise = 0.0;
  double theta = 120.0;
  int mesh_res = 128;
  std::string out;
};

json synth_json(const SynthArgs& a) {
  return {{"shape", a.shape}, {"texture_seed", a.texture_seed}, {"seed", a.seed}, {"views", a.views},
          {"resolution", a.resolution}, {"noise", a.noise}, {"theta", a.theta}, {"mesh_res", a.mesh_res}};
}

void synth_from_json(const json& j, SynthArgs& a) {
  a.shape = j.value("shape", a.shape);
  a.texture_seed = j.value("texture_seed", a.texture_seed);
  a.seed = j.value("seed", a.seed);
  a.views = j.value("views", a.views);
  a.resolution = j.value("resolution", a.resolution);
  a.noise = j.value("noise", a.noise);
  a.theta = j.value("theta", a.theta);
  a.mesh_res = j.value("mesh_res", a.mesh_res);
}

void add_synth_opts(CLI::App* app, SynthArgs& a) {
  app->add_option("--texture-seed", a.texture_seed, "procedural texture seed");
  app->add_option("--views", a.views, "number of ring views");
  app->add_option("--res", a.resolution, "image resolution");
  app->add_option("--noise", a.noise, "pixel noise std");
  app->add_option("--theta", a.theta, "frontal cone half-angle in degrees for the split");
  app->add_option("--mesh-res", a.mesh_res, "ground-truth marching-cubes lattice");
}

// Builds the scene, applies the split and returns the dataset plus gt mesh.
SyntheticScene make_synth(const SynthArgs& a) {
  SynthConfig sc;
  sc.shape = synth_shape_from_string(a.shape);
  sc.texture_seed = a.texture_seed;
  sc.seed = a.seed;
  sc.n_views = a.views;
  sc.resolution = a.resolution;
  sc.noise = a.noise;
  sc.mesh_resolution = a.mesh_res;
  SyntheticScene s = synth_scene(sc);
  SplitResult split = split_views(s.dataset, YawThresholdPolicy{a.theta});
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << '\n';
  s.dataset = std::move(split.dataset);
  return s;
}

int cmd_synth(SynthArgs& a) {
  Manifest m{"synth"};
  const SyntheticScene s = make_synth(a);
  save_dataset(s.dataset, a.out);
  write_obj(fs::path(a.out) / "gt_mesh.obj", s.gt_mesh);
  std::cout << "synth: " << s.dataset.views.size() << " views (" << s.dataset.count(Sensitivity::neutral)
            << " neutral, " << s.dataset.count(Sensitivity::protected_view) << " protected), gt mesh "
            << s.gt_mesh.vertices.size() << " vertices -> " << a.out << '\n';
  m.config = synth_json(a);
  m.seed = a.seed;
  m.write(a.out, true);
  return kOk;
}

struct ProtectArgs {
  std::string data, out, kernel = "sobel";
};

void print_audit(const fs::path& dir) {
  const auto offending = audit_protected_output(dir);
  if (offending.empty()) {
    std::cout << "audit: 0 color rasters of protected views in " << dir.string() << '\n';
  } else {
    std::cout << "audit: " << offending.size() << " color rasters of protected views found:";
    for (const auto& f : offending) std::cout << ' ' << f;
    std::cout << '\n';
  }
}

ProtectResult protect_and_report(const Dataset& d, const OperatorConfig& op) {
  ProtectResult r = protect_dataset(d, op);
  for (const auto& n : r.notices) std::cout << "notice: " << n << '\n';
  for (std::size_t i : r.dataset.indices(Sensitivity::protected_view)) {
    const ProtectedImage& p = r.dataset.protected_image(i);
    double g_max = 0.0;
    for (double v : p.magnitude.data) g_max = std::max(g_max, v);
    std::cout << "protect: " << r.dataset.views[i].name() << ' ' << p.magnitude.width << 'x' << p.magnitude.height
              << " kernel=" << p.op.kernel_name() << " g_max=" << fmt(g_max) << '\n';
  }
  return r;
}

int cmd_protect(ProtectArgs& a) {
  Manifest m{"protect"};
  m.input("data", a.data);
  const Dataset d = load_dataset(a.data);
  const OperatorConfig op = OperatorConfig::from_name(a.kernel);
  const ProtectResult r = protect_and_report(d, op);
  const fs::path out = a.out.empty() ? fs::path(a.data) : fs::path(a.out);
  save_dataset(r.dataset, out);
  std::cout << "protect: " << r.dataset.count(Sensitivity::protected_view) << " protected files written to "
            << out.string() << '\n';
  print_audit(out);
  m.config = {{"kernel", op.kernel_name()}, {"normalization", op.normalization}};
  m.write(out, true);
  return audit_protected_output(out).empty() ? kOk : kCheckFailed;
}

struct TrainArgs {
  std::string data, out, stage = "both", tmpl, init, ablation, loss_csv, resume;
  std::int64_t stop_after = -1;
  PresetOpts preset;
};

void print_stage(const StageResult& r) {
  if (r.log.empty()) {
    std::cout << r.checkpoint.stage << ": no steps run"
              << (r.checkpoint.template_origin ? " (template)" : "") << '\n';
    return;
  }
  const LossRecord& last = r.log.back();
  std::cout << last.stage << ": " << r.log.size() << " steps, final loss " << fmt(last.total) << ", beta "
            << fmt(last.beta) << '\n';
}

int cmd_train(TrainArgs& a) {
  Manifest m{"train"};
  m.input("data", a.data);
  TrainConfig cfg = resolve_config(a.preset);
  if (!a.tmpl.empty()) {
    cfg.template_path = a.tmpl;
    m.input("template", a.tmpl);
  }
  cfg.loss_csv = a.loss_csv;
  cfg.stop_after_steps = a.stop_after;
  const Dataset d = load_dataset(a.data);
  Checkpoint result;
  if (!a.ablation.empty() && ablation_mode_from_string(a.ablation) != AblationMode::two_stage) {
    const StageResult r = run_single_stage(d, cfg, ablation_mode_from_string(a.ablation));
    print_stage(r);
    result = r.checkpoint;
  } else {
    std::optional<Checkpoint> start;
    if (!a.resume.empty()) {
      start = load_checkpoint(a.resume);
      m.input("resume", a.resume);
    } else if (!a.init.empty()) {
      start = load_checkpoint(a.init);
      m.input("init", a.init);
    }
    const bool run1 = a.stage == "1" || a.stage == "both";
    const bool run2 = a.stage == "2" || a.stage == "both";
    if (run1) {
      const bool resume1 = start && start->stage == "stage1";
      if (start && !resume1 && a.stage == "1") throw UsageError("stage 1 can only resume a stage-1 checkpoint");
      if (!start || resume1) {
        const StageResult r = train_stage1(d, cfg, resume1 ? start : std::nullopt);
        print_stage(r);
        start = r.checkpoint;
      }
    }
    if (run2) {
      if (!start) throw UsageError("--stage 2 needs --init CKPT (a stage-1 checkpoint) or --resume");
      const StageResult r = train_stage2(*start, d, cfg);
      print_stage(r);
      start = r.checkpoint;
    }
    result = *start;
  }
  save_checkpoint(a.out, result);
  std::cout << "checkpoint: " << a.out << " (stage " << result.stage << ", step " << result.step << ")\n";
  m.config = {{"train", cfg.to_json()}, {"stage", a.stage}, {"ablation", a.ablation}};
  m.seed = cfg.seed;
  m.write(a.out, false);
  return kOk;
}

struct RenderArgs {
  std::string ckpt, radiance, data, view = "0", out, mode = "rgb";
  int n_coarse = 64, n_fine = 64;
  std::uint64_t seed = 0;
};

int cmd_render(RenderArgs& a, bool transfer) {
  Manifest m{transfer ? "transfer" : "render"};
  m.input("checkpoint", a.ckpt);
  m.input("data", a.data);
  const Dataset d = load_dataset(a.data);
  const Camera& cam = d.views[find_view(d, a.view)].camera();
  const Checkpoint geom = load_checkpoint(a.ckpt);
  RenderOptions ro;
  ro.n_coarse = a.n_coarse;
  ro.n_fine = a.n_fine;
  ro.scene_bounds = d.scene_bounds;
  Image img;
  if (transfer) {
    m.input("radiance", a.radiance);
    const Checkpoint rad = load_checkpoint(a.radiance);
    img = transfer_render(geom.params, rad.params, cam, ro, a.seed);
  } else {
    img = render_image(geom.params, cam, ro, a.seed, a.mode == "normal" ? RenderMode::normal : RenderMode::rgb);
  }
  write_png_rgb(a.out, img);
  std::cout << (transfer ? "transfer: " : "render: ") << img.width << 'x' << img.height << " -> " << a.out << '\n';
  m.config = {{"view", a.view}, {"mode", a.mode}, {"n_coarse", a.n_coarse}, {"n_fine", a.n_fine}};
  m.seed = a.seed;
  m.write(a.out, false);
  return kOk;
}

struct ExtractArgs {
  std::string ckpt, out;
  int res = 256;
  double bounds = 1.0;
};

int cmd_extract(ExtractArgs& a) {
  Manifest m{"extract"};
  m.input("checkpoint", a.ckpt);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const TriangleMesh mesh = extract_mesh(ck.params, a.res, a.bounds);
  write_obj(a.out, mesh);
  std::cout << "extract: " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces -> " << a.out
            << '\n';
  m.config = {{"res", a.res}, {"bounds", a.bounds}};
  m.write(a.out, false);
  return kOk;
}

struct EvalArgs {
  std::string mesh, gt, out, mode = "euclidean";
  std::vector<double> crop;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
};

int cmd_eval(EvalArgs& a) {
  Manifest m{"eval"};
  m.input("mesh", a.mesh);
  m.input("gt", a.gt);
  TriangleMesh ma = read_obj(a.mesh), mb = read_obj(a.gt);
  if (!a.crop.empty()) {
    ma = crop_mesh(ma, parse_vec(a.crop, 0), parse_vec(a.crop, 3));
    mb = crop_mesh(mb, parse_vec(a.crop, 0), parse_vec(a.crop, 3));
  }
  const CdReport r = chamfer_distance(ma, mb, a.samples, a.seed, cd_mode_from_string(a.mode));
  std::cout << "eval: cd=" << fmt(r.cd) << " (" << a.mode << ", " << r.n_samples << " samples)\n";
  if (!a.out.empty()) write_json(a.out, cd_json(r));
  m.config = {{"mode", a.mode}, {"samples", a.samples}, {"crop", a.crop}};
  m.seed = a.seed;
  if (!a.out.empty()) m.write(a.out, false);
  return kOk;
}

struct VerifyArgs {
  std::string image, data, out, kernel = "sobel";
  std::optional<double> witness_normalization;
};

int cmd_verify_privacy(VerifyArgs& a) {
  if (a.image.empty() == a.data.empty()) throw UsageError("give exactly one of --image or --data");
  Manifest m{"verify-privacy"};
  const OperatorConfig op = OperatorConfig::from_name(a.kernel);
  std::optional<OperatorConfig> witness;
  if (a.witness_normalization) {
    witness = op;
    witness->normalization = *a.witness_normalization;
  }
  std::vector<std::pair<std::string, Image>> images;
  if (!a.image.empty()) {
    m.input("image", a.image);
    images.push_back({fs::path(a.image).stem().string(), read_png_rgb(a.image)});
  } else {
    m.input("data", a.data);
    const Dataset d = load_dataset(a.data);
    for (std::size_t i = 0; i < d.views.size(); ++i)
      if (d.views[i].has_rgb()) images.push_back({d.views[i].name(), d.rgb(i)});
  }
  fs::create_directories(a.out);
  json report = json::array();
  bool all_passed = true;
  for (const auto& [name, img] : images) {
    const MultiplicityReport r = verify_multiplicity(img, op, witness);
    write_png_rgb(fs::path(a.out) / (name + "_source.png"), r.source);
    write_png_rgb(fs::path(a.out) / (name + "_negated.png"), r.negated);
    write_png_rgb(fs::path(a.out) / (name + "_shifted.png"), r.shifted);
    report.push_back({{"image", name},
                      {"degenerate", r.degenerate},
                      {"negation_invariant", r.negation_invariant},
                      {"offset_invariant", r.offset_invariant},
                      {"negated_distance", r.negated_distance},
                      {"shifted_distance", r.shifted_distance},
                      {"quantization_error", r.quantization_error},
                      {"passed", r.passed()}});
    all_passed = all_passed && r.passed();
    std::cout << "verify: " << name << (r.passed() ? " PASS" : " FAIL") << (r.degenerate ? " (degenerate)" : "")
              << " negated_dist=" << fmt(r.negated_distance) << " shifted_dist=" << fmt(r.shifted_distance) << '\n';
  }
  write_json(fs::path(a.out) / "invariance_report.json",
             {{"kernel", op.kernel_name()}, {"all_passed", all_passed}, {"images", report}});
  m.config = {{"kernel", op.kernel_name()}};
  if (witness) m.config["witness_normalization"] = witness->normalization;
  m.write(a.out, true);
  return all_passed ? kOk : kCheckFailed;
}

struct PipelineArgs {
  std::string synth, data, gt, out;
  std::string cd_mode = "euclidean";
  std::size_t cd_samples = 100000;
  bool cd_mode_given = false, cd_samples_given = false;
  SynthArgs synth_args;
  PresetOpts preset;
};

int cmd_pipeline(PipelineArgs& a) {
  Manifest m{"pipeline"};
  json section;
  TrainConfig cfg = resolve_config(a.preset, &section);
  // a replayed manifest supplies the scene and CD settings unless overridden
  if (section.contains("synth") && a.data.empty()) {
    synth_from_json(section["synth"], a.synth_args);
    if (a.synth.empty()) a.synth = a.synth_args.shape;
  }
  if (section.contains("cd_mode") && !a.cd_mode_given) a.cd_mode = section["cd_mode"].get<std::string>();
  if (section.contains("cd_samples") && !a.cd_samples_given) a.cd_samples = section["cd_samples"].get<std::size_t>();
  if (a.synth.empty() == a.data.empty()) throw UsageError("give exactly one of --synth SHAPE or --data DIR");
  if (!a.synth.empty()) a.synth_args.shape = a.synth;
  const fs::path out(a.out);
  fs::create_directories(out);

  Dataset d;
  std::optional<TriangleMesh> gt;
  if (!a.synth.empty()) {
    a.synth_args.seed = cfg.seed;
    SyntheticScene s = make_synth(a.synth_args);
    d = std::move(s.dataset);
    gt = std::move(s.gt_mesh);
    write_obj(out / "gt_mesh.obj", *gt);
  } else {
    m.input("data", a.data);
    d = load_dataset(a.data);
    if (!a.gt.empty()) {
      m.input("gt", a.gt);
      gt = read_obj(a.gt);
    }
  }
  const ProtectResult pr = protect_and_report(d, cfg.op);
  d = pr.dataset;
  save_dataset(d, out / "dataset");
  print_audit(out / "dataset");

  cfg.loss_csv = (out / "losses.csv").string();
  std::error_code ec;
  fs::remove(cfg.loss_csv, ec);
  const StageResult s1 = train_stage1(d, cfg);
  print_stage(s1);
  save_checkpoint(out / "stage1.ckpt", s1.checkpoint);
  const StageResult s2 = train_stage2(s1.checkpoint, d, cfg);
  print_stage(s2);
  save_checkpoint(out / "stage2.ckpt", s2.checkpoint);

  const TriangleMesh mesh1 = extract_mesh(s1.checkpoint.params, cfg.grid_res, d.scene_bounds);
  const TriangleMesh mesh2 = extract_mesh(s2.checkpoint.params, cfg.grid_res, d.scene_bounds);
  write_obj(out / "stage1_mesh.obj", mesh1);
  write_obj(out / "stage2_mesh.obj", mesh2);
  json report = {{"stage1_steps", s1.log.size()}, {"stage2_steps", s2.log.size()}};
  if (gt) {
    const CdMode mode = cd_mode_from_string(a.cd_mode);
    const CdReport c1 = chamfer_distance(mesh1, *gt, a.cd_samples, cfg.seed, mode);
    const CdReport c2 = chamfer_distance(mesh2, *gt, a.cd_samples, cfg.seed, mode);
    report["cd_stage1"] = cd_json(c1);
    report["cd_stage2"] = cd_json(c2);
    std::cout << "pipeline: CD stage1 " << fmt(c1.cd) << " -> stage2 " << fmt(c2.cd) << '\n';
  }
  write_json(out / "report.json", report);
  m.config = {{"train", cfg.to_json()}, {"cd_mode", a.cd_mode}, {"cd_samples", a.cd_samples}};
  if (!a.synth.empty()) m.config["synth"] = synth_json(a.synth_args);
  m.seed = cfg.seed;
  m.write(out, true);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradsurf: privacy-preserving two-stage neural SDF reconstruction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "render a synthetic scene dataset");
  c_synth->add_option("--shape", synth.shape, "sphere | blob | capsule")
      ->check(CLI::IsMember({"sphere", "blob", "capsule"}));
  c_synth->add_option("--seed", synth.seed, "noise seed");
  add_synth_opts(c_synth, synth);
  c_synth->add_option("--out", synth.out, "output dataset directory")->required();

  ProtectArgs protect;
  auto* c_protect = app.add_subcommand("protect", "replace protected views by gradient-magnitude maps");
  c_protect->add_option("--data", protect.data, "dataset directory")->required();
  c_protect->add_option("--kernel", protect.kernel, "sobel | cdiff")
      ->check(CLI::IsMember({"sobel", "cdiff", "central-diff"}));
  c_protect->add_option("--out", protect.out, "output directory (default: in place)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "run stage 1, stage 2 or both");
  c_train->add_option("--data", train.data, "dataset directory")->required();
  c_train->add_option("--stage", train.stage, "1 | 2 | both")->check(CLI::IsMember({"1", "2", "both"}));
  c_train->add_option("--template", train.tmpl, "template checkpoint replacing stage 1");
  c_train->add_option("--init", train.init, "checkpoint to start stage 2 from");
  c_train->add_option("--resume", train.resume, "checkpoint to continue");
  c_train->add_option("--ablation", train.ablation, "grad-only | single-stage-both | two-stage")
      ->check(CLI::IsMember({"grad-only", "single-stage-both", "two-stage"}));
  c_train->add_option("--loss-csv", train.loss_csv, "per-step loss log");
  c_train->add_option("--stop-after", train.stop_after, "stop the current stage at this step");
  c_train->add_option("--out", train.out, "output checkpoint")->required();
  add_preset_opts(c_train, train.preset);

  RenderArgs render;
  auto* c_render = app.add_subcommand("render", "render a view of a checkpoint");
  auto* c_transfer = app.add_subcommand("transfer", "render geometry of one checkpoint with radiance of another");
  for (auto* c : {c_render, c_transfer}) {
    c->add_option("--data", render.data, "dataset directory (cameras)")->required();
    c->add_option("--view", render.view, "view name or index");
    c->add_option("--out", render.out, "output PNG")->required();
    c->add_option("--samples", render.n_coarse, "coarse samples per ray");
    c->add_option("--fine", render.n_fine, "importance samples per ray");
    c->add_option("--seed", render.seed, "sampling seed");
  }
  c_render->add_option("--ckpt", render.ckpt, "checkpoint")->required();
  c_render->add_option("--mode", render.mode, "rgb | normal")->check(CLI::IsMember({"rgb", "normal"}));
  c_transfer->add_option("--geometry", render.ckpt, "geometry checkpoint")->required();
  c_transfer->add_option("--radiance", render.radiance, "radiance checkpoint")->required();

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "marching cubes on a checkpoint's SDF");
  c_extract->add_option("--ckpt", extract.ckpt, "checkpoint")->required();
  c_extract->add_option("--res", extract.res, "lattice points per axis");
  c_extract->add_option("--bounds", extract.bounds, "half-width of the sampled cube");
  c_extract->add_option("--out", extract.out, "output OBJ")->required();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Chamfer distance between two meshes");
  c_eval->add_option("--mesh", eval.mesh, "reconstructed OBJ")->required();
  c_eval->add_option("--gt", eval.gt, "reference OBJ")->required();
  c_eval->add_option("--crop", eval.crop, "x0,y0,z0,x1,y1,z1")->delimiter(',')->expected(6);
  c_eval->add_option("--mode", eval.mode, "euclidean | squared")->check(CLI::IsMember({"euclidean", "squared"}));
  c_eval->add_option("--samples", eval.samples, "surface samples per mesh");
  c_eval->add_option("--seed", eval.seed, "sampling seed");
  c_eval->add_option("--out", eval.out, "report JSON");

  VerifyArgs verify;
  auto* c_verify = app.add_subcommand("verify-privacy", "construct colliding images under the operator");
  c_verify->add_option("--image", verify.image, "RGB PNG");
  c_verify->add_option("--data", verify.data, "dataset directory (RGB views)");
  c_verify->add_option("--kernel", verify.kernel, "sobel | cdiff")
      ->check(CLI::IsMember({"sobel", "cdiff", "central-diff"}));
  c_verify->add_option("--witness-normalization", verify.witness_normalization,
                       "protect the witnesses with a different normalization (operator tamper check)");
  c_verify->add_option("--out", verify.out, "output directory")->required();

  PipelineArgs pipe;
  auto* c_pipe = app.add_subcommand("pipeline", "synth/protect/stage 1/stage 2/extract/eval end to end");
  c_pipe->add_option("--synth", pipe.synth, "synthetic shape")->check(CLI::IsMember({"sphere", "blob", "capsule"}));
  c_pipe->add_option("--data", pipe.data, "dataset directory instead of a synthetic scene");
  c_pipe->add_option("--gt", pipe.gt, "reference mesh for --data");
  auto* o_cd_mode = c_pipe->add_option("--cd-mode", pipe.cd_mode, "euclidean | squared")
                        ->check(CLI::IsMember({"euclidean", "squared"}));
  auto* o_cd_samples = c_pipe->add_option("--cd-samples", pipe.cd_samples, "surface samples per mesh");
  c_pipe->add_option("--out", pipe.out, "output directory")->required();
  add_synth_opts(c_pipe, pipe.synth_args);
  add_preset_opts(c_pipe, pipe.preset);

  try {
    app.parse(argc, argv);
    pipe.cd_mode_given = o_cd_mode->count() > 0;
    pipe.cd_samples_given = o_cd_samples->count() > 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_protect) return cmd_protect(protect);
    if (*c_train) return cmd_train(train);
    if (*c_render) return cmd_render(render, false);
    if (*c_transfer) return cmd_render(render, true);
    if (*c_extract) return cmd_extract(extract);
    if (*c_eval) return cmd_eval(eval);
    if (*c_verify) return cmd_verify_privacy(verify);
    if (*c_pipe) return cmd_pipeline(pipe);
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
