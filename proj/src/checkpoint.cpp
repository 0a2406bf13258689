#include "gradsurf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "gradsurf/error.hpp"

namespace gradsurf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = "GRADSURF-CKPT 1\n";

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("trainer", "truncated checkpoint " + path);
  return value;
}

void put_array(std::ostream& out, const std::string& name, const torch::Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  const torch::Tensor f = t.detach().to(torch::kFloat32).contiguous();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.dim()));
  for (auto d : f.sizes()) put<std::int64_t>(out, d);
  out.write(reinterpret_cast<const char*>(f.data_ptr<float>()), static_cast<std::streamsize>(f.numel() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("trainer", "cannot write checkpoint " + path.string());
  nlohmann::json header = {{"field_config", ckpt.params.config.to_json()},
                           {"stage", ckpt.stage},
                           {"step", ckpt.step},
                           {"rng_state", ckpt.rng_state},
                           {"template_origin", ckpt.template_origin},
                           {"train_config", ckpt.train_config}};
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic) - 1);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto named = ckpt.params.named_parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(named.size() + ckpt.optimizer_state.size()));
  for (const auto& [name, t] : named) put_array(out, name, t);
  for (const auto& [name, t] : ckpt.optimizer_state) put_array(out, "optim/" + name, t);
  if (!out) throw Error("trainer", "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, torch::ScalarType dtype) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("trainer", "cannot open checkpoint " + p);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw Error("trainer", "not a gradsurf checkpoint: " + p);
  const auto header_len = get<std::uint64_t>(in, p);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw Error("trainer", "truncated checkpoint " + p);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("trainer", "corrupt checkpoint header in " + p + ": " + e.what());
  }

  Checkpoint ckpt;
  ckpt.params = init_fields(FieldConfig::from_json(header.at("field_config")), 0, dtype);
  ckpt.stage = header.value("stage", "init");
  ckpt.step = header.value("step", std::int64_t{0});
  ckpt.rng_state = header.value("rng_state", "");
  ckpt.template_origin = header.value("template_origin", false);
  ckpt.train_config = header.value("train_config", nlohmann::json::object());

  std::map<std::string, torch::Tensor> arrays;
  const auto count = get<std::uint32_t>(in, p);
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto name_len = get<std::uint32_t>(in, p);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = get<std::uint32_t>(in, p);
    std::vector<std::int64_t> dims;
    for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(get<std::int64_t>(in, p));
    torch::Tensor t = torch::empty(dims, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw Error("trainer", "truncated checkpoint " + p);
    if (name.rfind("optim/", 0) == 0)
      ckpt.optimizer_state.emplace_back(name.substr(6), t);
    else
      arrays.emplace(name, t);
  }

  for (auto& [name, dst] : ckpt.params.named_parameters()) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw Error("trainer", "checkpoint " + p + " lacks array " + name);
    if (it->second.sizes() != dst.sizes())
      throw Error("trainer", "checkpoint array " + name + " has shape inconsistent with its field config");
    torch::NoGradGuard guard;
    dst.copy_(it->second.to(dtype));
  }
  return ckpt;
}

FieldParams load_template(const std::filesystem::path& path, const FieldConfig* expected) {
  Checkpoint c = load_checkpoint(path);
  if (expected && !(c.params.config == *expected))
    throw Error("trainer", "template field config is incompatible (e.g. feature_dim " +
                               std::to_string(c.params.config.feature_dim) + " vs " +
                               std::to_string(expected->feature_dim) + ")");
  return c.params;
}

}  // namespace gradsurf
