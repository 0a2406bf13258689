#include "gradsurf/dataset.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>

#include "gradsurf/error.hpp"

namespace gradsurf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Sensitivity s) { return s == Sensitivity::neutral ? "neutral" : "protected"; }

Sensitivity sensitivity_from_string(const std::string& s) {
  if (s == "neutral") return Sensitivity::neutral;
  if (s == "protected") return Sensitivity::protected_view;
  throw Error("camera_data", "unknown sensitivity '" + s + "'");
}

OperatorConfig OperatorConfig::from_name(const std::string& name) {
  if (name == "sobel") return sobel();
  if (name == "cdiff" || name == "central-diff") return central_difference();
  throw Error("privacy_operator", "unknown kernel '" + name + "' (expected sobel|cdiff)");
}

std::string OperatorConfig::kernel_name() const {
  return kernel == KernelType::sobel ? "sobel" : "cdiff";
}

ViewRecord ViewRecord::with_rgb(std::string name, Camera camera, Sensitivity s, Image rgb) {
  if (rgb.channels != 3) throw Error("camera_data", "view " + name + ": RGB raster must have 3 channels");
  ViewRecord v;
  v.name_ = std::move(name);
  v.camera_ = std::move(camera);
  v.sensitivity_ = s;
  v.rgb_ = std::move(rgb);
  return v;
}

ViewRecord ViewRecord::with_protected(std::string name, Camera camera, ProtectedImage image) {
  if (image.magnitude.channels != 1)
    throw Error("camera_data", "view " + name + ": protected raster must be single-channel");
  ViewRecord v;
  v.name_ = std::move(name);
  v.camera_ = std::move(camera);
  v.sensitivity_ = Sensitivity::protected_view;
  v.protected_ = std::move(image);
  return v;
}

const Image& Dataset::rgb(std::size_t i) const {
  const ViewRecord& v = views.at(i);
  if (!v.rgb_) throw Error("camera_data", "view " + v.name_ + " holds no RGB raster");
  if (v.sensitivity_ == Sensitivity::neutral)
    ++log_->rgb_reads_neutral;
  else
    ++log_->rgb_reads_protected;
  return *v.rgb_;
}

const ProtectedImage& Dataset::protected_image(std::size_t i) const {
  const ViewRecord& v = views.at(i);
  if (!v.protected_) throw Error("camera_data", "view " + v.name_ + " holds no protected raster");
  ++log_->magnitude_reads;
  return *v.protected_;
}

std::size_t Dataset::count(Sensitivity s) const {
  std::size_t n = 0;
  for (const auto& v : views) n += v.sensitivity() == s;
  return n;
}

std::vector<std::size_t> Dataset::indices(Sensitivity s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < views.size(); ++i)
    if (views[i].sensitivity() == s) out.push_back(i);
  return out;
}

void Dataset::replace_with_protected(std::size_t i, ProtectedImage image) {
  ViewRecord& v = views.at(i);
  v = ViewRecord::with_protected(v.name_, v.camera_, std::move(image));
}

std::uint16_t quantize_magnitude(double value, double g_max) {
  if (g_max <= 0.0) return 0;
  const double level = std::round(std::clamp(value / g_max, 0.0, 1.0) * 65535.0);
  return static_cast<std::uint16_t>(level);
}

double dequantize_magnitude(std::uint16_t level, double g_max) { return level * g_max / 65535.0; }

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("camera_data", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("camera_data", "malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("camera_data", "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::set<std::string> png_stems(const fs::path& dir) {
  std::set<std::string> stems;
  if (!fs::is_directory(dir)) return stems;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") stems.insert(entry.path().stem().string());
  return stems;
}

Camera camera_from_json(const json& j, const std::string& name) {
  try {
    const auto& m = j.at("c2w");
    if (m.size() != 16) throw Error("camera_data", "view " + name + ": c2w must have 16 entries");
    Eigen::Matrix4d c2w;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) c2w(r, c) = m.at(r * 4 + c).get<double>();
    return Camera::from_matrix(c2w, j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                               j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>());
  } catch (const json::exception& e) {
    throw Error("camera_data", "view " + name + ": bad camera entry: " + e.what());
  } catch (const Error& e) {
    throw Error("camera_data", "view " + name + ": " + e.what());
  }
}

json camera_to_json(const Camera& cam, const std::string& name) {
  json j;
  j["name"] = name;
  const Eigen::Matrix4d m = cam.camera_to_world();
  std::vector<double> flat;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
  j["c2w"] = flat;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const std::set<std::string> rgb_names = png_stems(dir / "images");
  const std::set<std::string> protected_names = png_stems(dir / "protected");
  if (rgb_names.empty() && protected_names.empty()) throw Error("camera_data", "no views found in " + dir.string());
  for (const auto& n : rgb_names)
    if (protected_names.count(n))
      throw Error("camera_data", "view " + n + " present both as RGB and protected raster");

  if (!fs::exists(dir / "cameras.json"))
    throw Error("camera_data", "missing camera file cameras.json in " + dir.string());
  const json cams = read_json(dir / "cameras.json");
  const json& cam_list = cams.contains("views") ? cams.at("views") : cams;
  if (!cam_list.is_array()) throw Error("camera_data", "cameras.json: expected an array of views");
  const std::size_t n_images = rgb_names.size() + protected_names.size();
  if (cam_list.size() != n_images) {
    throw Error("camera_data", "manifest/image count mismatch: cameras.json lists " +
                                   std::to_string(cam_list.size()) + " views, found " +
                                   std::to_string(n_images) + " images");
  }

  json split;
  if (fs::exists(dir / "split.json")) split = read_json(dir / "split.json");

  json prot_manifest;
  std::optional<OperatorConfig> op;
  if (!protected_names.empty()) {
    if (!fs::exists(dir / "protected" / "manifest.json"))
      throw Error("camera_data", "protected rasters present but protected/manifest.json missing");
    prot_manifest = read_json(dir / "protected" / "manifest.json");
    OperatorConfig cfg = OperatorConfig::from_name(prot_manifest.at("kernel").get<std::string>());
    cfg.normalization = prot_manifest.value("normalization", cfg.normalization);
    op = cfg;
  }

  Dataset ds;
  ds.scene_bounds = cams.is_object() ? cams.value("scene_bounds", 1.0) : 1.0;
  ds.scale = cams.is_object() ? cams.value("scale", 1.0) : 1.0;
  if (cams.is_object() && cams.contains("front_axis")) {
    const auto& f = cams.at("front_axis");
    ds.front_axis = Eigen::Vector3d(f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()).normalized();
  }
  ds.operator_config = op;

  std::set<std::string> seen;
  for (const auto& entry : cam_list) {
    const std::string name = entry.at("name").get<std::string>();
    if (!seen.insert(name).second) throw Error("camera_data", "duplicate camera entry for view " + name);
    const bool is_rgb = rgb_names.count(name) > 0;
    const bool is_prot = protected_names.count(name) > 0;
    if (!is_rgb && !is_prot) throw Error("camera_data", "camera entry " + name + " has no image file");
    const Camera cam = camera_from_json(entry, name);

    Sensitivity s = is_prot ? Sensitivity::protected_view : Sensitivity::neutral;
    if (!split.is_null()) {
      if (!split.contains(name)) throw Error("camera_data", "split.json has no entry for view " + name);
      s = sensitivity_from_string(split.at(name).get<std::string>());
    }
    if (is_prot && s == Sensitivity::neutral)
      throw Error("camera_data", "view " + name + " is a protected raster but split.json marks it neutral");

    if (is_rgb) {
      Image img = read_png_rgb(dir / "images" / (name + ".png"));
      if (img.width != cam.width || img.height != cam.height)
        throw Error("camera_data", "view " + name + ": image size does not match camera resolution");
      ds.views.push_back(ViewRecord::with_rgb(name, cam, s, std::move(img)));
    } else {
      int w = 0, h = 0;
      const auto levels = read_png_gray16(dir / "protected" / (name + ".png"), w, h);
      if (w != cam.width || h != cam.height)
        throw Error("camera_data", "view " + name + ": image size does not match camera resolution");
      const auto& gmax = prot_manifest.at("g_max");
      if (!gmax.contains(name)) throw Error("camera_data", "protected/manifest.json has no g_max for view " + name);
      const double g_max = gmax.at(name).get<double>();
      ProtectedImage p;
      p.magnitude = Image(w, h, 1);
      for (std::size_t k = 0; k < levels.size(); ++k) p.magnitude.data[k] = dequantize_magnitude(levels[k], g_max);
      p.source_width = w;
      p.source_height = h;
      if (prot_manifest.contains("source_resolution") && prot_manifest["source_resolution"].contains(name)) {
        const auto& res = prot_manifest["source_resolution"][name];
        p.source_width = res.at(0).get<int>();
        p.source_height = res.at(1).get<int>();
      }
      p.op = *op;
      ds.views.push_back(ViewRecord::with_protected(name, cam, std::move(p)));
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json cam_list = json::array();
  json split = json::object();
  json gmax = json::object();
  json source_res = json::object();
  bool any_protected = false;
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    const ViewRecord& v = ds.views[i];
    cam_list.push_back(camera_to_json(v.camera(), v.name()));
    split[v.name()] = to_string(v.sensitivity());
    if (v.has_rgb()) {
      fs::create_directories(dir / "images");
      write_png_rgb(dir / "images" / (v.name() + ".png"), ds.rgb(i));
    } else {
      any_protected = true;
      fs::create_directories(dir / "protected");
      const ProtectedImage& p = ds.protected_image(i);
      double g = 0.0;
      for (double m : p.magnitude.data) g = std::max(g, m);
      std::vector<std::uint16_t> levels(p.magnitude.data.size());
      for (std::size_t k = 0; k < levels.size(); ++k) levels[k] = quantize_magnitude(p.magnitude.data[k], g);
      write_png_gray16(dir / "protected" / (v.name() + ".png"), levels, p.magnitude.width, p.magnitude.height);
      gmax[v.name()] = g;
      source_res[v.name()] = std::vector<int>{p.source_width, p.source_height};
    }
  }
  json cams;
  cams["scene_bounds"] = ds.scene_bounds;
  cams["scale"] = ds.scale;
  cams["front_axis"] = std::vector<double>{ds.front_axis.x(), ds.front_axis.y(), ds.front_axis.z()};
  cams["views"] = cam_list;
  write_json(dir / "cameras.json", cams);
  write_json(dir / "split.json", split);
  if (any_protected) {
    const OperatorConfig op = ds.operator_config.value_or(OperatorConfig::sobel());
    json m;
    m["kernel"] = op.kernel_name();
    m["normalization"] = op.normalization;
    m["boundary"] = "replicate";
    m["g_max"] = gmax;
    m["source_resolution"] = source_res;
    write_json(dir / "protected" / "manifest.json", m);
  }
}

double frontal_angle_degrees(const Camera& camera, const Eigen::Vector3d& front_axis) {
  const Eigen::Vector3d toward_camera = -camera.optical_axis();
  const double c = std::clamp(toward_camera.dot(front_axis.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

SplitResult split_views(const Dataset& dataset, const SplitPolicy& policy) {
  SplitResult result{dataset, {}};
  Dataset& ds = result.dataset;
  for (auto& v : ds.views) {
    Sensitivity s = v.sensitivity();
    if (const auto* yaw = std::get_if<YawThresholdPolicy>(&policy)) {
      s = frontal_angle_degrees(v.camera(), ds.front_axis) < yaw->theta_degrees ? Sensitivity::protected_view
                                                                                 : Sensitivity::neutral;
    } else {
      const auto& manifest = std::get<ExplicitSplit>(policy);
      auto it = manifest.find(v.name());
      if (it != manifest.end()) s = it->second;
    }
    if (s == Sensitivity::neutral && !v.has_rgb())
      throw Error("camera_data", "view " + v.name() + " is already protected and cannot become neutral");
    v.set_sensitivity(s);
  }
  if (ds.count(Sensitivity::neutral) == 0)
    result.warnings.push_back("split yields zero neutral views; stage 1 requires a template");
  return result;
}

}  // namespace gradsurf
