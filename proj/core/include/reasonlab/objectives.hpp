#pragma once

#include <span>
#include <vector>

#include "reasonlab/autodiff.hpp"
#include "reasonlab/policy.hpp"
#include "reasonlab/rollout.hpp"

namespace reasonlab {

struct ClipConfig {
  double epsilon = 0.2;
  double beta_kl = 0.01;
  double dpo_beta = 0.1;
  double gamma = 1.0;
  double lambda = 1.0;

  // Throws kInvalidArgument when a field is out of range.
  void validate() const;
};

// A training sequence with the token indices that carry loss. Packed
// sequences list several document starts; a single example uses {0}.
struct SupervisedSequence {
  TokenSequence tokens;
  std::vector<std::size_t> segment_starts{0};
  std::vector<std::size_t> targets;
};

// Mean negative log-likelihood over all supervised targets of the batch.
// Throws kEmptyBatch when no target is supervised.
Scalar sft_loss(GradientContext& ctx, std::span<const SupervisedSequence> batch);
LossAndGradient sft_loss(const PolicyParameters& params, std::span<const SupervisedSequence> batch);

// Summed completion log-probability at temperature 1.
double sequence_logprob(const PolicyParameters& params, const Rollout& rollout);

// -log sigma(beta * (margin_w - margin_l)) with margin = log pi - log pi_ref.
double dpo_pair_loss(double margin_w, double margin_l, double beta);

// Batch mean of the pairwise preference loss against a frozen reference.
// Throws kPromptMismatch if a pair's rollouts do not share the pair's prompt.
Scalar dpo_loss(GradientContext& ctx, const PolicyParameters& ref_params, std::span<const PreferencePair> pairs,
                double beta);
LossAndGradient dpo_loss(const PolicyParameters& params, const PolicyParameters& ref_params,
                         std::span<const PreferencePair> pairs, double beta);

// Generalized advantage estimate by backward recursion:
//   delta_l = R_l + gamma V_{l+1} - V_l,  A_t = delta_t + gamma lambda A_{t+1}.
// values has one more entry than rewards. Throws kLengthMismatch.
std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                                   double lambda);

// min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double epsilon);
Scalar clipped_surrogate(Scalar ratio, double advantage, double epsilon);

// exp(q - p) - (q - p) - 1 with p = log pi_theta, q = log pi_ref.
double kl_estimate(double logp, double ref_logp);
Scalar kl_estimate(Scalar logp, double ref_logp);

// Token-mean clipped surrogate over all completion tokens of `sequences`;
// advantages[i] holds one value per completion token of sequences[i].
Scalar ppo_objective(GradientContext& ctx, const PolicyParameters& old_params, std::span<const Rollout> sequences,
                     std::span<const std::vector<double>> advantages, double epsilon);
double ppo_objective(const PolicyParameters& params, const PolicyParameters& old_params,
                     std::span<const Rollout> sequences, std::span<const std::vector<double>> advantages,
                     double epsilon);

// (R_i - mean) / std with the population standard deviation.
// Throws kInvalidArgument for G < 2 and kDegenerateGroup when all rewards are equal.
std::vector<double> grpo_advantages(std::span<const double> rewards);

// Per-rollout reference quantities at temperature 1, computed once per batch.
struct GroupBaseline {
  std::vector<std::vector<double>> old_logprobs;
  std::vector<std::vector<double>> ref_logprobs;
};
GroupBaseline group_baseline(const PolicyParameters& old_params, const PolicyParameters& ref_params,
                             const RolloutGroup& group);

// (1/G) sum_i [ mean_t clipped(r_it, A_i) - beta_kl mean_t k(p_it, q_it) ].
// Uses group.advantages when present, otherwise computes them (kDegenerateGroup propagates).
Scalar grpo_objective(GradientContext& ctx, const RolloutGroup& group, const GroupBaseline& baseline,
                      double epsilon, double beta_kl);
Scalar grpo_objective(GradientContext& ctx, const PolicyParameters& old_params, const PolicyParameters& ref_params,
                      const RolloutGroup& group, double epsilon, double beta_kl);
double grpo_objective(const PolicyParameters& params, const PolicyParameters& old_params,
                      const PolicyParameters& ref_params, const RolloutGroup& group, double epsilon, double beta_kl);

}  // namespace reasonlab
