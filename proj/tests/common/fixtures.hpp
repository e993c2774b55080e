#pragma once

// Small policies, rollouts and finite-difference helpers shared by the unit
// and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "reasonlab/autodiff.hpp"
#include "reasonlab/policy.hpp"
#include "reasonlab/rollout.hpp"
#include "reasonlab/task.hpp"
#include "reasonlab/verifier.hpp"

namespace fixture {

namespace rl = reasonlab;

inline const rl::Vocabulary& vocab() { return rl::Vocabulary::standard(); }

inline rl::PolicyShape tiny_shape() {
  rl::PolicyShape s;
  s.d_model = 8;
  s.n_heads = 2;
  s.d_ff = 16;
  s.n_layers = 1;
  s.max_positions = 64;
  return s;
}

inline rl::PolicyParameters tiny_policy(std::uint64_t seed) {
  return rl::PolicyParameters::initialized(vocab(), tiny_shape(), seed);
}

// Copy of `p` with every entry moved by N(0, sigma).
inline rl::PolicyParameters perturbed(const rl::PolicyParameters& p, double sigma, std::uint64_t seed) {
  rl::PolicyParameters out = p;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.values().flat()) v += noise(gen);
  return out;
}

inline rl::TaskInstance task(std::uint64_t seed) {
  return rl::generate_task(static_cast<rl::Difficulty>(seed % 2), static_cast<rl::DomainTag>(seed % 3), seed);
}

// Sampled completion, scored against the task.
inline rl::Rollout rollout(const rl::PolicyParameters& p, const rl::TaskInstance& t, std::size_t max_len,
                           std::uint64_t seed) {
  const auto s = rl::sample(p, t.prompt, 1.0, 1.0, max_len, seed);
  rl::Rollout r;
  r.id = t.id + "/s" + std::to_string(seed);
  r.task_id = t.id;
  r.tokens = s.tokens;
  r.prompt_length = s.prompt_length;
  r.logprobs = s.logprobs;
  r.answer = rl::extract_final_answer(s.completion());
  r.reward = rl::reward(s.completion(), t.ground_truth).reward;
  return r;
}

// Hand-written completion with a chosen reward.
inline rl::Rollout scripted(const rl::TaskInstance& t, const std::vector<std::string>& completion, int reward,
                            std::string id = "r") {
  rl::Rollout r;
  r.id = std::move(id);
  r.task_id = t.id;
  r.tokens = t.prompt;
  const auto c = vocab().from_symbols(completion);
  r.tokens.insert(r.tokens.end(), c.begin(), c.end());
  r.prompt_length = t.prompt.size();
  r.reward = reward;
  return r;
}

struct FdResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;
};

// Centered differences on `count` random coordinates against the analytic
// gradient. A coordinate passes when |g - fd| <= rel * max(|g|, |fd|) + abs_floor.
// With `active_only`, coordinates are drawn from those the loss depends on
// (nonzero analytic gradient), which skips trivially passing unused rows.
inline FdResult finite_difference_check(const rl::PolicyParameters& params, const rl::LossBuilder& builder,
                                        std::size_t count, std::uint64_t seed, double h = 1e-4, double rel = 1e-3,
                                        double abs_floor = 1e-8, bool active_only = false) {
  const auto analytic = rl::gradient(params, builder);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < params.values().size(); ++i) {
    if (!active_only || analytic.gradient.flat()[i] != 0.0) candidates.push_back(i);
  }
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  rl::PolicyParameters probe = params;
  FdResult out;
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t i = candidates[pick(gen)];
    const double x = params.values().flat()[i];
    probe.values().flat()[i] = x + h;
    const double up = rl::evaluate_loss(probe, builder);
    probe.values().flat()[i] = x - h;
    const double down = rl::evaluate_loss(probe, builder);
    probe.values().flat()[i] = x;
    const double fd = (up - down) / (2 * h);
    const double g = analytic.gradient.flat()[i];
    const double err = std::abs(g - fd);
    const double bound = rel * std::max(std::abs(g), std::abs(fd)) + abs_floor;
    ++out.checked;
    if (err > bound) ++out.failed;
    out.worst = std::max(out.worst, err / (std::max(std::abs(g), std::abs(fd)) + abs_floor));
  }
  return out;
}

}  // namespace fixture

namespace fixture {

// All weights zero except the output bias, so every position predicts
// softmax(bias) regardless of context.
inline rl::PolicyParameters bias_policy(const std::vector<double>& bias, rl::PolicyShape shape = tiny_shape()) {
  rl::PolicyParameters p(vocab(), shape);
  auto b = p.values().array("output.bias");
  std::copy(bias.begin(), bias.end(), b.begin());
  return p;
}

// Bias vector whose softmax puts probability `probs[k]` on token `ids[k]`
// and spreads the remaining mass evenly.
inline std::vector<double> bias_for(const std::vector<rl::TokenId>& ids, const std::vector<double>& probs) {
  const std::size_t V = vocab().size();
  double used = 0.0;
  for (double q : probs) used += q;
  const double rest = (1.0 - used) / static_cast<double>(V - ids.size());
  std::vector<double> bias(V, std::log(rest));
  for (std::size_t k = 0; k < ids.size(); ++k) bias[static_cast<std::size_t>(ids[k])] = std::log(probs[k]);
  return bias;
}

// Answers with a uniformly guessed 0 or 1, marked as having passed every
// stage before rl.
inline rl::PolicyParameters guesser(rl::PolicyShape shape = tiny_shape()) {
  const auto& v = vocab();
  auto p = bias_policy(bias_for({v.answer_start(), v.eos(), v.number(0), v.number(1)}, {0.25, 0.2, 0.25, 0.25}),
                       shape);
  p.stages() = {"midtrain", "sft", "dpo"};
  return p;
}

// Elementary modular tasks whose truth is 0 or 1.
inline std::vector<rl::TaskInstance> binary_tasks(std::size_t n, std::uint64_t seed) {
  std::vector<rl::TaskInstance> out;
  for (; out.size() < n; ++seed) {
    auto t = rl::generate_task(rl::Difficulty::kElementary, rl::DomainTag::kModular, seed);
    if (t.ground_truth == "0" || t.ground_truth == "1") out.push_back(std::move(t));
  }
  return out;
}

}  // namespace fixture
