#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reasonlab/config.hpp"
#include "reasonlab/policy.hpp"
#include "reasonlab/rollout.hpp"
#include "reasonlab/task.hpp"

namespace reasonlab {

// One row of the metrics table. Group statistics are zero outside rl.
struct StepRecord {
  Stage stage = Stage::kMidtrain;
  std::size_t step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double temperature = 0.0;     // rl sampling temperature in effect
  double accuracy = 0.0;        // mean raw group accuracy over sampled prompts
  double mean_length = 0.0;     // mean completion length of the sampled rollouts
  std::size_t groups_kept = 0;
  std::size_t groups_dropped = 0;
  std::size_t rollouts_used = 0;
  std::string eval_metric;      // empty when no evaluation ran at this step
  double eval_value = 0.0;
  std::string checkpoint;
};

// One filter decision, with enough context to replay it.
struct FilterEvent {
  std::size_t step = 0;  // probe decisions use step 0
  std::string prompt_id;
  std::string filter;
  std::string decision;
  std::string reason;
};

struct StageInputs {
  std::vector<Rollout> examples;        // midtrain / sft
  std::vector<PreferencePair> pairs;    // dpo
  std::vector<TaskInstance> prompts;    // rl prompt pool
  std::vector<TaskInstance> validation; // early stopping (midtrain) and cons@k (rl)
};

struct RunOptions {
  std::filesystem::path output_dir;   // empty: nothing is written
  bool allow_out_of_order = false;    // ablation override for the stage-order check
  std::function<void(const StepRecord&)> on_step;
};

struct StageResult {
  PolicyParameters params;
  std::vector<StepRecord> records;
  std::vector<FilterEvent> filters;
  std::vector<std::string> kept_prompts;  // rl pool after the variance filter
  bool stopped_early = false;
};

// Runs one training stage from `input`. Throws kMissingInput, kStageOrder,
// kExampleTooLong and kNonFiniteLoss (after writing "<stage>.last_good.ckpt"
// when an output directory is set).
StageResult run_stage(const StageConfig& config, const PolicyParameters& input, const StageInputs& inputs,
                      const RunOptions& options = {});

// Learning rate at `step` with linear warmup over the first warmup_fraction of steps.
double scheduled_learning_rate(const StageConfig& config, std::size_t step, std::size_t total_steps);

inline constexpr const char* kMetricsHeader =
    "stage,step,loss,learning_rate,temperature,accuracy,mean_length,groups_kept,groups_dropped,rollouts,"
    "eval_metric,eval_value,checkpoint";

std::string metrics_row(const StepRecord& r);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records);
void write_filter_log(const std::filesystem::path& path, const std::vector<FilterEvent>& events);

// Evaluation sampling settings used inside training stages.
inline constexpr double kEvalTemperature = 0.6;
inline constexpr double kEvalTopP = 0.95;

}  // namespace reasonlab
