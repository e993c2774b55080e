#include "reasonlab/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "reasonlab/error.hpp"

namespace reasonlab {
namespace {

constexpr double kObjectiveTemperature = 1.0;

void check_same_prompt(const PreferencePair& pair) {
  auto prompt_of = [](const Rollout& r) {
    return std::span<const TokenId>(r.tokens).first(std::min(r.prompt_length, r.tokens.size()));
  };
  const auto w = prompt_of(pair.preferred);
  const auto l = prompt_of(pair.dispreferred);
  const bool same = std::equal(w.begin(), w.end(), pair.prompt.begin(), pair.prompt.end()) &&
                    std::equal(l.begin(), l.end(), pair.prompt.begin(), pair.prompt.end());
  if (!same) throw Error(ErrorKind::kPromptMismatch, "preference pair rollouts condition on different prompts");
}

std::vector<double> completion_logprobs_of(const PolicyParameters& params, const Rollout& r) {
  return forward_logprobs(params, r.tokens, r.prompt_length, kObjectiveTemperature);
}

}  // namespace

void ClipConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kInvalidArgument, "epsilon must be > 0");
  if (!(beta_kl >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "beta_kl must be >= 0");
  if (!(dpo_beta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "dpo_beta must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "lambda must lie in [0, 1]");
}

Scalar sft_loss(GradientContext& ctx, std::span<const SupervisedSequence> batch) {
  std::vector<Scalar> nll;
  for (const auto& seq : batch) {
    if (seq.targets.empty()) continue;
    for (Scalar lp : ctx.logprobs(seq.tokens, seq.segment_starts, seq.targets, kObjectiveTemperature)) {
      nll.push_back(-lp);
    }
  }
  if (nll.empty()) throw Error(ErrorKind::kEmptyBatch, "batch has no supervised positions");
  return mean(nll);
}

LossAndGradient sft_loss(const PolicyParameters& params, std::span<const SupervisedSequence> batch) {
  return gradient(params, [&](GradientContext& ctx) { return sft_loss(ctx, batch); });
}

double sequence_logprob(const PolicyParameters& params, const Rollout& rollout) {
  const auto lps = completion_logprobs_of(params, rollout);
  double total = 0.0;
  for (double lp : lps) total += lp;
  return total;
}

double dpo_pair_loss(double margin_w, double margin_l, double beta) {
  const double z = beta * (margin_w - margin_l);
  return z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

Scalar dpo_loss(GradientContext& ctx, const PolicyParameters& ref_params, std::span<const PreferencePair> pairs,
                double beta) {
  if (pairs.empty()) throw Error(ErrorKind::kEmptyBatch, "no preference pairs");
  if (!(beta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "dpo beta must be > 0");
  std::vector<Scalar> losses;
  losses.reserve(pairs.size());
  for (const auto& pair : pairs) {
    check_same_prompt(pair);
    const auto lw = ctx.completion_logprobs(pair.preferred.tokens, pair.preferred.prompt_length, kObjectiveTemperature);
    const auto ll =
        ctx.completion_logprobs(pair.dispreferred.tokens, pair.dispreferred.prompt_length, kObjectiveTemperature);
    const double ref_w = sequence_logprob(ref_params, pair.preferred);
    const double ref_l = sequence_logprob(ref_params, pair.dispreferred);
    const Scalar margin = (sum(lw) - ref_w) - (sum(ll) - ref_l);
    losses.push_back(-log_sigmoid(margin * beta));
  }
  return mean(losses);
}

LossAndGradient dpo_loss(const PolicyParameters& params, const PolicyParameters& ref_params,
                         std::span<const PreferencePair> pairs, double beta) {
  return gradient(params, [&](GradientContext& ctx) { return dpo_loss(ctx, ref_params, pairs, beta); });
}

std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                                   double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw Error(ErrorKind::kLengthMismatch, "values must have exactly one more entry than rewards");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "gamma and lambda must lie in [0, 1]");
  }
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * values[i + 1] - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
  }
  return adv;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage);
}

Scalar clipped_surrogate(Scalar ratio, double advantage, double epsilon) {
  return min(ratio * advantage, clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage);
}

double kl_estimate(double logp, double ref_logp) {
  const double d = ref_logp - logp;
  return std::exp(d) - d - 1.0;
}

Scalar kl_estimate(Scalar logp, double ref_logp) {
  const Scalar d = ref_logp - logp;
  return exp(d) - d - 1.0;
}

Scalar ppo_objective(GradientContext& ctx, const PolicyParameters& old_params, std::span<const Rollout> sequences,
                     std::span<const std::vector<double>> advantages, double epsilon) {
  if (sequences.size() != advantages.size()) throw Error(ErrorKind::kLengthMismatch, "one advantage row per sequence");
  std::vector<Scalar> terms;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& seq = sequences[i];
    if (advantages[i].size() != seq.length()) {
      throw Error(ErrorKind::kLengthMismatch, "advantages must cover every completion token");
    }
    const auto lp = ctx.completion_logprobs(seq.tokens, seq.prompt_length, kObjectiveTemperature);
    const auto old = completion_logprobs_of(old_params, seq);
    for (std::size_t t = 0; t < lp.size(); ++t) {
      terms.push_back(clipped_surrogate(exp(lp[t] - old[t]), advantages[i][t], epsilon));
    }
  }
  if (terms.empty()) throw Error(ErrorKind::kEmptyBatch, "no completion tokens");
  return mean(terms);
}

double ppo_objective(const PolicyParameters& params, const PolicyParameters& old_params,
                     std::span<const Rollout> sequences, std::span<const std::vector<double>> advantages,
                     double epsilon) {
  return evaluate_loss(params, [&](GradientContext& ctx) {
    return ppo_objective(ctx, old_params, sequences, advantages, epsilon);
  });
}

std::vector<double> grpo_advantages(std::span<const double> rewards) {
  const std::size_t G = rewards.size();
  if (G < 2) throw Error(ErrorKind::kInvalidArgument, "a group needs at least two rewards");
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    throw Error(ErrorKind::kDegenerateGroup, "all rewards in the group are equal (zero variance)");
  }
  double mean_r = 0.0;
  for (double r : rewards) mean_r += r;
  mean_r /= static_cast<double>(G);
  double var = 0.0;
  for (double r : rewards) var += (r - mean_r) * (r - mean_r);
  var /= static_cast<double>(G);
  const double sd = std::sqrt(var);
  std::vector<double> adv(G);
  for (std::size_t i = 0; i < G; ++i) adv[i] = (rewards[i] - mean_r) / sd;
  return adv;
}

GroupBaseline group_baseline(const PolicyParameters& old_params, const PolicyParameters& ref_params,
                             const RolloutGroup& group) {
  GroupBaseline b;
  for (const auto& r : group.rollouts) {
    b.old_logprobs.push_back(completion_logprobs_of(old_params, r));
    b.ref_logprobs.push_back(completion_logprobs_of(ref_params, r));
  }
  return b;
}

Scalar grpo_objective(GradientContext& ctx, const RolloutGroup& group, const GroupBaseline& baseline, double epsilon,
                      double beta_kl) {
  const std::size_t G = group.rollouts.size();
  std::vector<double> adv = group.advantages;
  if (adv.empty()) {
    std::vector<double> rewards;
    for (const auto& r : group.rollouts) rewards.push_back(r.reward);
    adv = grpo_advantages(rewards);
  }
  if (G < 2) throw Error(ErrorKind::kInvalidArgument, "a group needs at least two rollouts");
  if (adv.size() != G || baseline.old_logprobs.size() != G || baseline.ref_logprobs.size() != G) {
    throw Error(ErrorKind::kLengthMismatch, "group, advantages and baseline disagree in size");
  }
  std::vector<Scalar> per_sequence;
  per_sequence.reserve(G);
  for (std::size_t i = 0; i < G; ++i) {
    const auto& r = group.rollouts[i];
    const auto lp = ctx.completion_logprobs(r.tokens, r.prompt_length, kObjectiveTemperature);
    const auto& old = baseline.old_logprobs[i];
    const auto& ref = baseline.ref_logprobs[i];
    if (old.size() != lp.size() || ref.size() != lp.size()) {
      throw Error(ErrorKind::kLengthMismatch, "baseline log-probabilities do not match the rollout");
    }
    std::vector<Scalar> surrogate;
    std::vector<Scalar> kl;
    surrogate.reserve(lp.size());
    kl.reserve(lp.size());
    for (std::size_t t = 0; t < lp.size(); ++t) {
      surrogate.push_back(clipped_surrogate(exp(lp[t] - old[t]), adv[i], epsilon));
      kl.push_back(kl_estimate(lp[t], ref[t]));
    }
    per_sequence.push_back(mean(surrogate) - mean(kl) * beta_kl);
  }
  return mean(per_sequence);
}

Scalar grpo_objective(GradientContext& ctx, const PolicyParameters& old_params, const PolicyParameters& ref_params,
                      const RolloutGroup& group, double epsilon, double beta_kl) {
  return grpo_objective(ctx, group, group_baseline(old_params, ref_params, group), epsilon, beta_kl);
}

double grpo_objective(const PolicyParameters& params, const PolicyParameters& old_params,
                      const PolicyParameters& ref_params, const RolloutGroup& group, double epsilon, double beta_kl) {
  return evaluate_loss(params, [&](GradientContext& ctx) {
    return grpo_objective(ctx, old_params, ref_params, group, epsilon, beta_kl);
  });
}

}  // namespace reasonlab
