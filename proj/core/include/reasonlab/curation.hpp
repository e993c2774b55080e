#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reasonlab/objectives.hpp"
#include "reasonlab/rollout.hpp"
#include "reasonlab/task.hpp"

namespace reasonlab {

struct TeacherConfig {
  double error_rate = 0.3;
  std::uint64_t seed = 0;
};

// Teacher rollouts split by verification outcome. Rejects are kept for
// preference mining. Rollout ids are "<task id>/t<k>".
struct RejectionSampleResult {
  std::vector<Rollout> retained;
  std::vector<Rollout> rejected;
};

inline constexpr std::size_t kDefaultRolloutsPerTask = 8;

// Throws kInvalidArgument when rollouts_per_task is 0.
RejectionSampleResult rejection_sample_dataset(std::span<const TaskInstance> tasks, const TeacherConfig& teacher,
                                               std::size_t rollouts_per_task = kDefaultRolloutsPerTask);

// Pairs each correct rollout of an eligible task with a distinct incorrect
// one, greedily by closest completion length (ties: earlier rollout), up to
// min(#correct, #incorrect, max_pairs_per_task). Tasks are visited in order.
std::vector<PreferencePair> build_preference_pairs(std::span<const TaskInstance> tasks,
                                                   std::span<const Rollout> rollouts,
                                                   Difficulty min_difficulty = Difficulty::kHighSchool,
                                                   std::size_t max_pairs_per_task = 4);

// Rollouts whose task is at or above min_difficulty, in input order.
std::vector<Rollout> select_by_difficulty(std::span<const TaskInstance> tasks, std::span<const Rollout> rollouts,
                                          Difficulty min_difficulty);

// Supervision for one unpacked example: every completion token, <eos> included.
SupervisedSequence supervised_example(const Rollout& example);

struct PackedBatches {
  std::vector<SupervisedSequence> sequences;  // each padded to the capacity
  std::vector<std::size_t> content_lengths;   // tokens before the padding
  std::size_t document_tokens = 0;
  std::size_t total_tokens = 0;
  // Sequence i without its trailing padding. Padding is never attended to
  // and never supervised, so training on this form is equivalent and cheaper.
  SupervisedSequence unpadded(std::size_t i) const;
  double utilization() const {
    return total_tokens == 0 ? 0.0 : static_cast<double>(document_tokens) / static_cast<double>(total_tokens);
  }
};

// Greedy first-fit packing in corpus order. Loss covers completion tokens
// except the closing <eos>; stopping is left to the unpacked stage.
// Throws kExampleTooLong.
PackedBatches pack_batches(std::span<const Rollout> corpus, std::size_t sequence_length,
                           const Vocabulary& vocab = Vocabulary::standard());

}  // namespace reasonlab
