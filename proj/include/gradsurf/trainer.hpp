#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradsurf/chamfer.hpp"
#include "gradsurf/checkpoint.hpp"
#include "gradsurf/dataset.hpp"
#include "gradsurf/fields.hpp"
#include "gradsurf/losses.hpp"
#include "gradsurf/mesh.hpp"
#include "gradsurf/protected_image.hpp"

namespace gradsurf {

struct TrainConfig {
  // One stage-1 epoch is one pass worth of rays over the neutral pixels; one
  // stage-2 epoch is one pass over the non-overlapping patch grid of the
  // protected views. Fractional epochs are allowed.
  double stage1_epochs = 1000;
  double stage2_epochs = 500;
  int rays_per_step = 1024;
  int patches_per_step = 4;
  int patch_size = 16;
  double learning_rate = 5e-4;
  double final_lr_ratio = 0.1;  // cosine decay ends at lr * ratio
  std::optional<double> stage2_learning_rate;  // fine-tuning rate; unset uses learning_rate
  int eikonal_points = 1024;
  int n_coarse = 64;
  int n_fine = 64;
  std::uint64_t seed = 0;
  std::optional<std::string> template_path;
  FieldConfig field;
  StageWeights stage1_weights = StageWeights::stage1();
  StageWeights stage2_weights = StageWeights::stage2();
  OperatorConfig op = OperatorConfig::sobel();
  int grid_res = 256;  // mesh extraction lattice
  std::string loss_csv;  // appended per step when set
  std::int64_t stop_after_steps = -1;  // stop early at this step of the current stage (resume tests)

  static TrainConfig paper();
  static TrainConfig desk();
  static TrainConfig quick();

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep the values of `base`; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossRecord {
  std::int64_t step = 0;
  std::string stage;
  std::optional<double> rgb, eikonal, lipschitz, grad;
  double total = 0.0;
  double beta = 0.0;
};

std::string loss_csv_header();
std::string loss_csv_row(const LossRecord& r);

struct StageResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> log;
};

std::int64_t stage1_total_steps(const Dataset& dataset, const TrainConfig& config);
std::int64_t stage2_total_steps(const Dataset& dataset, const TrainConfig& config);

// Fits geometry and radiance to the neutral views only. With a template
// configured the stage is skipped and the template is returned. Passing a
// stage-1 checkpoint with step < total resumes it.
StageResult train_stage1(const Dataset& dataset, const TrainConfig& config,
                         const std::optional<Checkpoint>& resume = std::nullopt);
// Refines `start` against the protected magnitude maps only. A stage-2
// checkpoint with step < total is resumed instead.
StageResult train_stage2(const Checkpoint& start, const Dataset& dataset, const TrainConfig& config);

enum class AblationMode { grad_only, single_stage_both, two_stage };
std::string to_string(AblationMode m);
AblationMode ablation_mode_from_string(const std::string& s);

// Runs one regime from geometric initialization. The single-stage regimes use
// the same step budget as the two stages combined.
StageResult run_single_stage(const Dataset& dataset, const TrainConfig& config, AblationMode mode);

struct AblationReport {
  std::map<AblationMode, CdReport> cd;
  std::map<AblationMode, Checkpoint> checkpoints;
};

AblationReport run_ablation(const Dataset& dataset, const TriangleMesh& gt_mesh, const TrainConfig& config,
                            const std::vector<AblationMode>& modes = {AblationMode::grad_only,
                                                                       AblationMode::single_stage_both,
                                                                       AblationMode::two_stage},
                            std::size_t cd_samples = 100000);

}  // namespace gradsurf
