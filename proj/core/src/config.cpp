#include "reasonlab/config.hpp"

#include <array>

#include "reasonlab/error.hpp"

namespace reasonlab {
namespace {

constexpr std::array<std::string_view, 4> kStageNames = {"midtrain", "sft", "dpo", "rl"};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kInvalidArgument, what);
}

}  // namespace

std::string_view stage_name(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
}

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  throw Error(ErrorKind::kInvalidArgument, "unknown optimizer '" + std::string(name) + "'");
}

void StageConfig::validate() const {
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(epochs >= 1 || total_steps >= 1, "need epochs or total_steps");
  require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "warmup_fraction must lie in [0, 1)");
  require(sequence_length >= 1, "sequence_length must be >= 1");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
  require(packing == (stage == Stage::kMidtrain), "packing is on for midtrain and off for every other stage");
  clip.validate();
  if (stage == Stage::kRl) {
    require(recipe.group_size >= 2, "group_size must be >= 2");
    require(recipe.prompts_per_step >= 1, "prompts_per_step must be >= 1");
    require(recipe.oversample_cap >= recipe.group_size, "oversample_cap must be >= group_size");
    require(recipe.cv_threshold >= 0.0, "cv_threshold must be >= 0");
    require(recipe.top_p > 0.0 && recipe.top_p <= 1.0, "top_p must lie in (0, 1]");
    AnnealSchedule{recipe.t_start, recipe.t_end, recipe.anneal_fraction, 1}.validate();
  }
}

StageConfig full_scale_defaults(Stage stage) {
  StageConfig c;
  c.stage = stage;
  c.batch_size = 128;
  c.warmup_fraction = 0.1;
  c.packing = stage == Stage::kMidtrain;
  switch (stage) {
    case Stage::kMidtrain:
      c.learning_rate = 1e-5;
      c.epochs = 5;
      c.sequence_length = 16384;
      break;
    case Stage::kSft:
      c.learning_rate = 1e-5;
      c.epochs = 5;
      c.sequence_length = 20480;
      break;
    case Stage::kDpo:
      c.learning_rate = 5e-7;
      c.epochs = 1;
      c.sequence_length = 16384;
      break;
    case Stage::kRl:
      c.learning_rate = 5e-7;
      c.epochs = 1;
      c.sequence_length = 25600;
      break;
  }
  return c;
}

StageConfig desk_defaults(Stage stage) {
  StageConfig c = full_scale_defaults(stage);
  c.optimizer = Optimizer::kAdam;
  switch (stage) {
    case Stage::kMidtrain:
      c.sequence_length = 256;
      c.batch_size = 8;
      c.learning_rate = 3e-3;
      c.epochs = 3;
      c.eval_interval = 100;
      c.eval_tasks = 100;
      break;
    case Stage::kSft:
      c.sequence_length = 320;
      c.batch_size = 16;
      c.learning_rate = 1e-3;
      c.epochs = 2;
      c.warmup_fraction = 0.05;
      break;
    case Stage::kDpo:
      c.sequence_length = 256;
      c.batch_size = 32;
      c.learning_rate = 5e-5;
      c.epochs = 1;
      c.warmup_fraction = 0.05;
      break;
    case Stage::kRl:
      c.sequence_length = 320;
      c.learning_rate = 2e-4;
      c.total_steps = 100;
      c.warmup_fraction = 0.0;
      c.eval_interval = 20;
      c.eval_tasks = 100;
      c.grad_clip = 1.0;
      break;
  }
  return c;
}

PolicyShape desk_policy_shape() { return PolicyShape{}; }

std::optional<Stage> required_predecessor(Stage stage) {
  switch (stage) {
    case Stage::kMidtrain: return std::nullopt;
    case Stage::kSft: return Stage::kMidtrain;
    case Stage::kDpo: return Stage::kSft;
    case Stage::kRl: return Stage::kDpo;
  }
  return std::nullopt;
}

}  // namespace reasonlab
