#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reasonlab/task.hpp"
#include "reasonlab/vocabulary.hpp"

namespace reasonlab {

// One sampled (or teacher-written) response to a prompt.
struct Rollout {
  std::string id;
  std::string task_id;
  TokenSequence tokens;  // prompt + completion
  std::size_t prompt_length = 0;
  std::vector<double> logprobs;  // sampling-time, one per completion token (may be empty for teacher data)
  std::optional<std::string> answer;
  int reward = -1;

  std::size_t length() const { return tokens.size() - prompt_length; }
  std::span<const TokenId> completion() const {
    return std::span<const TokenId>(tokens).subspan(prompt_length);
  }
};

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

// Mean and population standard deviation.
LengthStats length_stats(const std::vector<double>& lengths);

struct RolloutGroup {
  std::string prompt_id;
  std::vector<Rollout> rollouts;
  double group_accuracy = 0.0;  // #(reward = +1) / G
  LengthStats length_stats;     // completion lengths of positively rewarded rollouts
  std::vector<double> advantages;  // filled by grpo_advantages, parallel to rollouts

  std::size_t positives() const;
  std::size_t negatives() const { return rollouts.size() - positives(); }
};

// Builds a group and its statistics from scored rollouts.
RolloutGroup make_group(std::string prompt_id, std::vector<Rollout> rollouts);

struct PreferencePair {
  std::string task_id;
  TokenSequence prompt;
  Rollout preferred;     // reward +1
  Rollout dispreferred;  // reward -1
  Difficulty difficulty = Difficulty::kElementary;
};

}  // namespace reasonlab
