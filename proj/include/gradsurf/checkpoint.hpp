#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "gradsurf/fields.hpp"

namespace gradsurf {

struct Checkpoint {
  FieldParams params;
  std::string stage = "init";  // init | stage1 | stage2 | single
  std::int64_t step = 0;
  std::string rng_state;       // textual engine state
  bool template_origin = false;
  nlohmann::json train_config = nlohmann::json::object();
  // Optimizer moments, stored as extra named arrays so a resumed run
  // continues bit-identically.
  std::vector<std::pair<std::string, torch::Tensor>> optimizer_state;
};

// Layout: "GRADSURF-CKPT 1\n", u64 header length, JSON header (field config,
// stage, step, rng state, ...), u32 array count, then per array: u32 name
// length, name, u32 rank, i64 dims, little-endian float32 payload.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path, torch::ScalarType dtype = torch::kFloat32);

// Loads a checkpoint as a template: params only, marked template_origin.
// Throws when `expected` is given and the field configs differ.
FieldParams load_template(const std::filesystem::path& path, const FieldConfig* expected = nullptr);

}  // namespace gradsurf
