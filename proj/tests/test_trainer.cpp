#include "doctest_torch.hpp"

#include <fstream>
#include <sstream>

#include "gradsurf/checkpoint.hpp"
#include "gradsurf/error.hpp"
#include "gradsurf/privacy.hpp"
#include "gradsurf/synthetic.hpp"
#include "gradsurf/trainer.hpp"
#include "support.hpp"

using namespace gradsurf;
using testing_support::TempDir;

namespace {

const Dataset& tiny_dataset() {
  static const Dataset d = [] {
    SynthConfig sc;
    sc.n_views = 6;
    sc.resolution = 24;
    sc.mesh_resolution = 32;
    const Dataset split = split_views(synth_scene(sc).dataset, YawThresholdPolicy{120.0}).dataset;
    return protect_dataset(split, OperatorConfig::sobel()).dataset;
  }();
  return d;
}

TrainConfig tiny_train() {
  TrainConfig c = TrainConfig::quick();
  c.field = testing_support::tiny_config();
  c.stage1_epochs = 0.5;
  c.stage2_epochs = 0.5;
  c.rays_per_step = 64;
  c.patches_per_step = 1;
  c.patch_size = 8;
  c.eikonal_points = 32;
  c.n_coarse = 8;
  c.n_fine = 4;
  c.grid_res = 32;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_params(const FieldParams& a, const FieldParams& b) {
  const auto x = a.named_parameters(), y = b.named_parameters();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!torch::equal(x[i].second, y[i].second)) return false;
  return true;
}

}  // namespace

TEST_CASE("config presets, validation and json") {
  CHECK_NOTHROW(TrainConfig::paper().validate());
  CHECK_NOTHROW(TrainConfig::desk().validate());
  CHECK_NOTHROW(TrainConfig::quick().validate());
  CHECK(TrainConfig::paper().stage1_weights.eikonal == 0.1);
  TrainConfig c = tiny_train();
  c.seed = 17;
  c.op = OperatorConfig::central_difference();
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.field == c.field);
  nlohmann::json j = c.to_json();
  j["bogus"] = 1;
  CHECK_THROWS_AS(TrainConfig::from_json(j), Error);
  TrainConfig bad = tiny_train();
  bad.rays_per_step = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny_train();
  bad.stage2_learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  c.stage2_learning_rate.reset();
  CHECK_FALSE(TrainConfig::from_json(c.to_json()).stage2_learning_rate.has_value());
  CHECK(loss_csv_header() == "step,stage,L_rgb,L_eik,L_lip,L_grad,total,beta");
}

TEST_CASE("epoch arithmetic") {
  const Dataset& d = tiny_dataset();
  REQUIRE(d.count(Sensitivity::neutral) == 2);
  REQUIRE(d.count(Sensitivity::protected_view) == 4);
  const TrainConfig c = tiny_train();
  CHECK(stage1_total_steps(d, c) == 9);  // ceil(0.5 * 2 * 576 / 64)
  CHECK(stage2_total_steps(d, c) == 8);  // 0.5 * 4 views * (22/8)^2 floored patches
}

TEST_CASE("stage 1 is deterministic and resumes bit-identically") {
  TempDir dir("train");
  const Dataset& d = tiny_dataset();
  TrainConfig c = tiny_train();
  c.loss_csv = (dir / "a.csv").string();
  const StageResult a = train_stage1(d, c);
  c.loss_csv = (dir / "b.csv").string();
  const StageResult b = train_stage1(d, c);
  CHECK(a.log.size() == 9);
  CHECK(a.checkpoint.stage == "stage1");
  CHECK(a.checkpoint.step == 9);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv").rfind(loss_csv_header(), 0) == 0);
  CHECK(same_params(a.checkpoint.params, b.checkpoint.params));
  for (const auto& r : a.log) {
    CHECK(r.rgb.has_value());
    CHECK(r.eikonal.has_value());
    CHECK_FALSE(r.grad.has_value());
  }

  TrainConfig part = tiny_train();
  part.stop_after_steps = 4;
  const StageResult first = train_stage1(d, part);
  CHECK(first.checkpoint.step == 4);
  save_checkpoint(dir / "part.ckpt", first.checkpoint);
  const Checkpoint reloaded = load_checkpoint(dir / "part.ckpt");
  const StageResult rest = train_stage1(d, tiny_train(), reloaded);
  CHECK(rest.checkpoint.step == 9);
  CHECK(same_params(rest.checkpoint.params, a.checkpoint.params));
  CHECK(rest.log.back().total == a.log.back().total);
}

TEST_CASE("stage 2 resumes bit-identically") {
  TempDir dir("train2");
  const Dataset& d = tiny_dataset();
  const StageResult s1 = train_stage1(d, tiny_train());
  const StageResult full = train_stage2(s1.checkpoint, d, tiny_train());
  CHECK(full.checkpoint.stage == "stage2");
  CHECK(full.log.size() == 8);
  for (const auto& r : full.log) {
    CHECK_FALSE(r.rgb.has_value());
    CHECK(r.grad.has_value());
    CHECK(r.lipschitz.has_value());
  }
  TrainConfig part = tiny_train();
  part.stop_after_steps = 3;
  const StageResult first = train_stage2(s1.checkpoint, d, part);
  save_checkpoint(dir / "s2.ckpt", first.checkpoint);
  const StageResult rest = train_stage2(load_checkpoint(dir / "s2.ckpt"), d, tiny_train());
  CHECK(same_params(rest.checkpoint.params, full.checkpoint.params));

  SUBCASE("stage 2 learning rate") {
    TrainConfig same = tiny_train();
    same.stage2_learning_rate = same.learning_rate;
    TrainConfig unset = tiny_train();
    unset.stage2_learning_rate.reset();
    CHECK(same_params(train_stage2(s1.checkpoint, d, same).checkpoint.params,
                      train_stage2(s1.checkpoint, d, unset).checkpoint.params));
    CHECK_FALSE(same_params(train_stage2(s1.checkpoint, d, same).checkpoint.params, full.checkpoint.params));
  }
}

TEST_CASE("stages only read the rasters they are entitled to") {
  Dataset d = tiny_dataset();
  d.reset_access_log();
  const StageResult s1 = train_stage1(d, tiny_train());
  CHECK(d.access_log().rgb_reads_neutral > 0);
  CHECK(d.access_log().rgb_reads_protected == 0);
  CHECK(d.access_log().magnitude_reads == 0);
  d.reset_access_log();
  train_stage2(s1.checkpoint, d, tiny_train());
  CHECK(d.access_log().rgb_reads_neutral == 0);
  CHECK(d.access_log().rgb_reads_protected == 0);
  CHECK(d.access_log().magnitude_reads > 0);
}

TEST_CASE("template skips stage 1") {
  TempDir dir("tmpl");
  Checkpoint ck;
  ck.params = init_fields(testing_support::tiny_config(), 99);
  save_checkpoint(dir / "t.ckpt", ck);
  TrainConfig c = tiny_train();
  c.template_path = (dir / "t.ckpt").string();
  const StageResult r = train_stage1(tiny_dataset(), c);
  CHECK(r.log.empty());
  CHECK(r.checkpoint.template_origin);
  CHECK(same_params(r.checkpoint.params, ck.params));

  Dataset only_protected = tiny_dataset();
  std::erase_if(only_protected.views, [](const ViewRecord& v) { return v.sensitivity() == Sensitivity::neutral; });
  CHECK_NOTHROW(train_stage1(only_protected, c));
  CHECK_THROWS_WITH_AS(train_stage1(only_protected, tiny_train()),
                       doctest::Contains("provide neutral views or a template"), Error);

  FieldConfig other = testing_support::tiny_config();
  other.feature_dim = 7;
  Checkpoint wrong;
  wrong.params = init_fields(other, 1);
  save_checkpoint(dir / "w.ckpt", wrong);
  c.template_path = (dir / "w.ckpt").string();
  CHECK_THROWS_AS(train_stage1(tiny_dataset(), c), Error);
}

TEST_CASE("stage 2 rejects a different operator") {
  TrainConfig c = tiny_train();
  c.op = OperatorConfig::central_difference();
  Checkpoint start;
  start.params = init_fields(c.field, 0);
  CHECK_THROWS_WITH_AS(train_stage2(start, tiny_dataset(), c), doctest::Contains("operator"), Error);
}

TEST_CASE("non-finite loss aborts training") {
  Checkpoint start;
  start.params = init_fields(testing_support::tiny_config(), 0);
  {
    torch::NoGradGuard ng;
    start.params.sdf_weights[0].fill_(std::nan(""));
  }
  try {
    train_stage2(start, tiny_dataset(), tiny_train());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("trainer") != std::string::npos);
  }
}
