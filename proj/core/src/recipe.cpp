#include "reasonlab/recipe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reasonlab/error.hpp"
#include "reasonlab/rng.hpp"

namespace reasonlab {

LengthStats length_stats(const std::vector<double>& lengths) {
  LengthStats s;
  s.count = lengths.size();
  if (lengths.empty()) return s;
  double total = 0.0;
  for (double l : lengths) total += l;
  s.mean = total / static_cast<double>(lengths.size());
  double var = 0.0;
  for (double l : lengths) var += (l - s.mean) * (l - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(lengths.size()));
  return s;
}

std::size_t RolloutGroup::positives() const {
  return static_cast<std::size_t>(
      std::count_if(rollouts.begin(), rollouts.end(), [](const Rollout& r) { return r.reward == 1; }));
}

RolloutGroup make_group(std::string prompt_id, std::vector<Rollout> rollouts) {
  RolloutGroup g;
  g.prompt_id = std::move(prompt_id);
  g.rollouts = std::move(rollouts);
  std::vector<double> lengths;
  for (const auto& r : g.rollouts) {
    if (r.reward == 1) lengths.push_back(static_cast<double>(r.length()));
  }
  g.group_accuracy =
      g.rollouts.empty() ? 0.0 : static_cast<double>(lengths.size()) / static_cast<double>(g.rollouts.size());
  g.length_stats = length_stats(lengths);
  return g;
}

std::optional<double> pooled_length_cv(std::span<const RolloutGroup> probe_groups) {
  std::vector<double> lengths;
  for (const auto& g : probe_groups) {
    for (const auto& r : g.rollouts) {
      if (r.reward == 1) lengths.push_back(static_cast<double>(r.length()));
    }
  }
  if (lengths.empty()) return std::nullopt;
  const LengthStats s = length_stats(lengths);
  if (s.mean == 0.0) return 0.0;
  return s.stddev / s.mean;
}

FilterDecision prompt_variance_filter(std::span<const RolloutGroup> probe_groups, double cv_threshold) {
  const auto cv = pooled_length_cv(probe_groups);
  if (!cv) return FilterDecision::kDrop;
  return *cv <= cv_threshold ? FilterDecision::kKeep : FilterDecision::kDrop;
}

RolloutGroup rebalance_group(const RolloutGroup& group, std::uint64_t seed) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    (group.rollouts[i].reward == 1 ? pos : neg).push_back(i);
  }
  if (pos.empty()) throw Error(ErrorKind::kPromptUnusable, "group " + group.prompt_id + " has no positive rollout");
  const std::size_t take = std::min(pos.size(), neg.size());
  // Partial Fisher-Yates: the first `take` entries become a uniform sample.
  Rng rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(neg.size() - i));
    std::swap(neg[i], neg[j]);
  }
  std::vector<std::size_t> keep = pos;
  keep.insert(keep.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(keep.begin(), keep.end());

  std::vector<Rollout> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(group.rollouts[i]);
  return make_group(group.prompt_id, std::move(out));
}

FilterDecision accuracy_filter(const RolloutGroup& group, double threshold) {
  return group.group_accuracy > threshold ? FilterDecision::kDrop : FilterDecision::kKeep;
}

FilterDecision dapo_filter(const RolloutGroup& group) {
  return (group.group_accuracy == 0.0 || group.group_accuracy == 1.0) ? FilterDecision::kDrop
                                                                       : FilterDecision::kKeep;
}

void AnnealSchedule::validate() const {
  if (!(t_end > 0.0) || !(t_start >= t_end)) {
    throw Error(ErrorKind::kInvalidArgument, "anneal schedule needs t_start >= t_end > 0");
  }
  if (!(anneal_fraction > 0.0 && anneal_fraction <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "anneal_fraction must lie in (0, 1]");
  }
}

double anneal_temperature(std::size_t step, const AnnealSchedule& schedule) {
  schedule.validate();
  if (step > schedule.total_steps) {
    throw Error(ErrorKind::kStepOutOfRange,
                "step " + std::to_string(step) + " beyond total " + std::to_string(schedule.total_steps));
  }
  const double knee = schedule.anneal_fraction * static_cast<double>(schedule.total_steps);
  const double s = static_cast<double>(step);
  if (s >= knee) return schedule.t_end;
  return schedule.t_start + (schedule.t_end - schedule.t_start) * (s / knee);
}

std::string_view filter_decision_name(FilterDecision d) { return d == FilterDecision::kKeep ? "keep" : "drop"; }

}  // namespace reasonlab
