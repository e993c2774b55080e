#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "reasonlab/objectives.hpp"
#include "reasonlab/policy.hpp"
#include "reasonlab/recipe.hpp"
#include "reasonlab/task.hpp"

namespace reasonlab {

enum class Stage { kMidtrain = 0, kSft, kDpo, kRl };

std::string_view stage_name(Stage s);
// Throws kInvalidArgument.
Stage parse_stage(std::string_view name);

enum class Optimizer { kSgd, kAdam };
std::string_view optimizer_name(Optimizer o);
Optimizer parse_optimizer(std::string_view name);

struct RecipeConfig {
  std::size_t group_size = 16;
  std::size_t prompts_per_step = 8;
  std::size_t oversample_cap = kOversampleCap;
  double cv_threshold = kDefaultCvThreshold;
  std::size_t probe_rounds = 2;
  double accuracy_threshold = kDefaultAccuracyThreshold;
  double t_start = 1.0;
  double t_end = 0.6;
  double anneal_fraction = 0.5;
  double top_p = 1.0;
  // Replace accuracy filtering, oversampling and rebalancing with the 0/1 accuracy filter.
  bool dapo_baseline = false;
};

struct StageConfig {
  Stage stage = Stage::kMidtrain;
  std::size_t batch_size = 128;
  double learning_rate = 1e-5;
  std::size_t epochs = 5;
  std::size_t total_steps = 0;  // 0: derived from epochs and the data size
  double warmup_fraction = 0.1;
  std::size_t sequence_length = 16384;
  bool packing = true;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kSgd;
  double grad_clip = 0.0;  // global L2 norm cap, 0 disables

  ClipConfig clip;
  RecipeConfig recipe;  // rl only

  // Periodic validation. Midtraining stops early when pass@1 fails to improve
  // by min_improvement over `patience` consecutive evaluations.
  std::size_t eval_interval = 0;  // steps, 0 disables
  std::size_t eval_tasks = 0;     // validation subset size, 0 = all
  std::size_t eval_samples = 16;  // cons@k during rl
  double min_improvement = 0.005;
  std::size_t patience = 3;
  Difficulty sft_min_difficulty = Difficulty::kCollege;  // sft subset selection

  // Throws kInvalidArgument when fields violate their ranges or the
  // stage/packing pairing.
  void validate() const;
};

// Full-scale reference values. The desk profile shrinks lengths, batches
// and raises rates for a model with under a million parameters.
StageConfig full_scale_defaults(Stage stage);
StageConfig desk_defaults(Stage stage);

PolicyShape desk_policy_shape();

// The stage whose marker an input checkpoint must carry, if any.
std::optional<Stage> required_predecessor(Stage stage);

}  // namespace reasonlab
