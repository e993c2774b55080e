#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "reasonlab/rollout.hpp"

namespace reasonlab {

enum class FilterDecision { kKeep, kDrop };

inline constexpr double kDefaultCvThreshold = 0.35;
inline constexpr double kDefaultAccuracyThreshold = 0.5;
inline constexpr std::size_t kOversampleCap = 128;

// Keeps a prompt iff the coefficient of variation of the positively rewarded
// completion lengths, pooled over all probe groups, is <= cv_threshold.
// Prompts with no positive rollout are dropped.
FilterDecision prompt_variance_filter(std::span<const RolloutGroup> probe_groups,
                                      double cv_threshold = kDefaultCvThreshold);
// Pooled CV, or nullopt when there is no positive rollout.
std::optional<double> pooled_length_cv(std::span<const RolloutGroup> probe_groups);

// All positives plus min(P, N) negatives drawn uniformly without replacement.
// Rollouts keep their original relative order. Throws kPromptUnusable when P = 0.
RolloutGroup rebalance_group(const RolloutGroup& group, std::uint64_t seed);

// Drops iff group_accuracy > threshold.
FilterDecision accuracy_filter(const RolloutGroup& group, double threshold = kDefaultAccuracyThreshold);

// Drops iff group_accuracy is exactly 0 or 1.
FilterDecision dapo_filter(const RolloutGroup& group);

struct AnnealSchedule {
  double t_start = 1.0;
  double t_end = 0.6;
  double anneal_fraction = 0.5;
  std::size_t total_steps = 1;

  // Throws kInvalidArgument.
  void validate() const;
};

// Linear from t_start at step 0 to t_end at anneal_fraction * total_steps,
// then flat. Throws kStepOutOfRange when step > total_steps.
double anneal_temperature(std::size_t step, const AnnealSchedule& schedule);

std::string_view filter_decision_name(FilterDecision d);

}  // namespace reasonlab
