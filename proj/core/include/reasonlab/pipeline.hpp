#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "reasonlab/rollout.hpp"
#include "reasonlab/task.hpp"

namespace reasonlab {

// Synthetic corpora for one desk-scale run.
struct DataConfig {
  std::size_t train_tasks = 3000;
  std::size_t rollouts_per_task = 8;
  double teacher_error_rate = 0.3;
  std::size_t rl_prompts = 1200;
  std::size_t validation_tasks = 200;
  std::size_t heldout_tasks = 200;
  Difficulty sft_min_difficulty = Difficulty::kCollege;
  Difficulty pair_min_difficulty = Difficulty::kHighSchool;
  std::size_t max_pairs_per_task = 4;
  std::uint64_t seed = 0;

  // Teacher traces plus every other generated task.
  std::size_t example_count() const {
    return train_tasks * rollouts_per_task + rl_prompts + validation_tasks + heldout_tasks;
  }
};

struct DataBundle {
  std::vector<TaskInstance> train_tasks;
  std::vector<Rollout> retained;       // verified teacher traces (midtrain corpus)
  std::vector<Rollout> rejected;       // failed traces, kept for preference mining
  std::vector<Rollout> sft_examples;   // retained traces of hard enough tasks
  std::vector<PreferencePair> pairs;
  std::vector<TaskInstance> rl_prompts;
  std::vector<TaskInstance> validation;
  std::vector<TaskInstance> heldout;
};

// Tasks cycle through every (difficulty, domain) cell. Each split draws its
// seeds from its own stream.
std::vector<TaskInstance> make_tasks(std::size_t count, std::uint64_t seed, std::uint64_t split);

DataBundle generate_data(const DataConfig& config);

// File names used by the command-line tool inside a data directory.
namespace data_files {
inline constexpr const char* kTasks = "tasks.jsonl";
inline constexpr const char* kTraces = "traces.jsonl";
inline constexpr const char* kRetained = "retained.jsonl";
inline constexpr const char* kRejected = "rejected.jsonl";
inline constexpr const char* kSft = "sft.jsonl";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kRlPrompts = "rl_prompts.jsonl";
inline constexpr const char* kValidation = "validation.jsonl";
inline constexpr const char* kHeldout = "heldout.jsonl";
}  // namespace data_files

void write_data(const std::filesystem::path& dir, const DataBundle& data);
// Throws kMissingInput naming the first absent file.
DataBundle read_data(const std::filesystem::path& dir);

}  // namespace reasonlab
