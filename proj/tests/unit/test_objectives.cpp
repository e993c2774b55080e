#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "reasonlab/error.hpp"
#include "reasonlab/objectives.hpp"

namespace rl = reasonlab;

namespace {

const rl::Vocabulary& vocab() { return rl::Vocabulary::standard(); }

rl::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const rl::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return rl::ErrorKind::kIo;
}

rl::PreferencePair pair_of(const rl::Rollout& w, const rl::Rollout& l, const rl::TaskInstance& t) {
  rl::PreferencePair p;
  p.task_id = t.id;
  p.prompt = t.prompt;
  p.preferred = w;
  p.dispreferred = l;
  return p;
}

rl::SupervisedSequence supervise(const rl::Rollout& r) {
  rl::SupervisedSequence s;
  s.tokens = r.tokens;
  for (std::size_t i = r.prompt_length; i < r.tokens.size(); ++i) s.targets.push_back(i);
  return s;
}

// A group with mixed rewards sampled from `p`.
rl::RolloutGroup mixed_group(const rl::PolicyParameters& p, std::uint64_t seed, std::size_t G) {
  const auto t = fixture::task(seed);
  std::vector<rl::Rollout> rs;
  for (std::size_t i = 0; i < G; ++i) {
    auto r = fixture::rollout(p, t, 5, seed * 100 + i);
    r.reward = i % 3 == 0 ? 1 : -1;
    rs.push_back(r);
  }
  return rl::make_group(t.id, rs);
}

}  // namespace

TEST(Sft, UniformPolicyGivesLogV) {
  const rl::PolicyParameters p(vocab(), fixture::tiny_shape());
  const auto t = fixture::task(1);
  const auto r = fixture::scripted(t, {"3", "+", "4", "<ans>", "7", "<eos>"}, 1);
  const std::vector<rl::SupervisedSequence> batch = {supervise(r)};
  EXPECT_NEAR(rl::sft_loss(p, batch).loss, std::log(static_cast<double>(vocab().size())), 1e-9);
}

TEST(Sft, TwoTokenHandExample) {
  const auto a = vocab().number(5);
  const auto b = vocab().number(6);
  const auto p = fixture::bias_policy(fixture::bias_for({a, b}, {0.5, 0.25}));
  const auto t = fixture::task(2);
  const auto r = fixture::scripted(t, {"5", "6"}, 1);
  const std::vector<rl::SupervisedSequence> batch = {supervise(r)};
  const double loss = rl::sft_loss(p, batch).loss;
  EXPECT_NEAR(loss, (std::log(2.0) + std::log(4.0)) / 2, 1e-12);
  EXPECT_NEAR(loss, 1.0397, 1e-4);
}

TEST(Sft, MasksAndEmptyBatch) {
  const auto p = fixture::tiny_policy(3);
  const auto t = fixture::task(3);
  auto s = supervise(fixture::scripted(t, {"1", "<eos>"}, 1));
  s.targets.clear();
  const std::vector<rl::SupervisedSequence> batch = {s};
  EXPECT_EQ(kind_of([&] { rl::sft_loss(p, batch); }), rl::ErrorKind::kEmptyBatch);
  EXPECT_EQ(kind_of([&] { rl::sft_loss(p, std::vector<rl::SupervisedSequence>{}); }), rl::ErrorKind::kEmptyBatch);

  // Only supervised positions count: one target equals that token's own NLL.
  auto one = supervise(fixture::scripted(t, {"1", "2", "<eos>"}, 1));
  one.targets = {one.tokens.size() - 2};
  const auto lp = rl::forward_logprobs(p, one.tokens, one.tokens.size() - 2, 1.0);
  const std::vector<rl::SupervisedSequence> single = {one};
  EXPECT_NEAR(rl::sft_loss(p, single).loss, -lp[0], 1e-12);
}

TEST(Sft, GradientMatchesFiniteDifferences) {
  const auto p = fixture::tiny_policy(4);
  std::vector<rl::SupervisedSequence> batch;
  for (std::uint64_t s = 0; s < 3; ++s) batch.push_back(supervise(fixture::rollout(p, fixture::task(s), 6, s)));
  const auto fd = fixture::finite_difference_check(
      p, [&](rl::GradientContext& ctx) { return rl::sft_loss(ctx, batch); }, 100, 1);
  EXPECT_EQ(fd.failed, 0u) << fd.worst;
}

TEST(Dpo, EqualsLn2AtReference) {
  const auto p = fixture::tiny_policy(5);
  const auto t = fixture::task(5);
  const auto w = fixture::rollout(p, t, 6, 1);
  const auto l = fixture::rollout(p, t, 6, 2);
  const std::vector<rl::PreferencePair> pairs = {pair_of(w, l, t)};
  EXPECT_NEAR(rl::dpo_loss(p, p, pairs, 0.1).loss, std::log(2.0), 1e-9);
  EXPECT_NEAR(rl::dpo_pair_loss(0.0, 0.0, 0.7), std::log(2.0), 1e-15);
}

TEST(Dpo, UnitMarginHandValue) {
  EXPECT_NEAR(rl::dpo_pair_loss(1.0, 0.0, 1.0), 0.313262, 1e-6);
  EXPECT_NEAR(rl::dpo_pair_loss(1.0, 0.0, 1.0), -oracle::log_sigmoid(1.0), 1e-15);

  // Same value through the policy: a bias that adds exactly one nat to the
  // preferred token relative to the dispreferred one.
  const auto a = vocab().number(1);
  const auto ref = fixture::bias_policy(std::vector<double>(vocab().size(), 0.0));
  std::vector<double> bias(vocab().size(), 0.0);
  bias[static_cast<std::size_t>(a)] = 1.0;
  const auto p = fixture::bias_policy(bias);
  const auto t = fixture::task(6);
  const std::vector<rl::PreferencePair> pairs = {
      pair_of(fixture::scripted(t, {"1"}, 1, "w"), fixture::scripted(t, {"2"}, -1, "l"), t)};
  EXPECT_NEAR(rl::dpo_loss(p, ref, pairs, 1.0).loss, 0.313262, 1e-6);
}

TEST(Dpo, StrictlyDecreasingInMargin) {
  double prev = std::numeric_limits<double>::infinity();
  for (double m = -20.0; m <= 20.0; m += 0.25) {
    const double v = rl::dpo_pair_loss(m, 0.0, 0.5);
    EXPECT_LT(v, prev);
    EXPECT_NEAR(v, -oracle::log_sigmoid(0.5 * m), 1e-12);
    prev = v;
  }
}

TEST(Dpo, GradientStepIncreasesMargin) {
  const auto ref = fixture::tiny_policy(7);
  auto p = fixture::perturbed(ref, 0.01, 3);
  const auto t = fixture::task(7);
  const auto w = fixture::rollout(ref, t, 6, 11);
  const auto l = fixture::rollout(ref, t, 6, 12);
  const std::vector<rl::PreferencePair> pairs = {pair_of(w, l, t)};
  auto margin = [&](const rl::PolicyParameters& q) {
    return (rl::sequence_logprob(q, w) - rl::sequence_logprob(ref, w)) -
           (rl::sequence_logprob(q, l) - rl::sequence_logprob(ref, l));
  };
  const double before = margin(p);
  const auto g = rl::dpo_loss(p, ref, pairs, 0.1);
  for (std::size_t i = 0; i < p.values().size(); ++i) p.values().flat()[i] -= 0.05 * g.gradient.flat()[i];
  EXPECT_GT(margin(p), before);
  EXPECT_LT(rl::dpo_loss(p, ref, pairs, 0.1).loss, g.loss);
}

TEST(Dpo, PromptMismatch) {
  const auto p = fixture::tiny_policy(8);
  const auto t1 = fixture::task(8);
  const auto t2 = fixture::task(9);
  const std::vector<rl::PreferencePair> pairs = {
      pair_of(fixture::scripted(t1, {"1"}, 1), fixture::scripted(t2, {"2"}, -1), t1)};
  EXPECT_EQ(kind_of([&] { rl::dpo_loss(p, p, pairs, 0.1); }), rl::ErrorKind::kPromptMismatch);
}

TEST(Dpo, GradientMatchesFiniteDifferences) {
  const auto ref = fixture::tiny_policy(9);
  const auto p = fixture::perturbed(ref, 0.05, 4);
  std::vector<rl::PreferencePair> pairs;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const auto t = fixture::task(20 + s);
    pairs.push_back(pair_of(fixture::rollout(ref, t, 6, 2 * s), fixture::rollout(ref, t, 6, 2 * s + 1), t));
  }
  const auto fd = fixture::finite_difference_check(
      p, [&](rl::GradientContext& ctx) { return rl::dpo_loss(ctx, ref, pairs, 0.5); }, 100, 2);
  EXPECT_EQ(fd.failed, 0u) << fd.worst;
}

TEST(Gae, HandExamples) {
  const std::vector<double> r = {0.0, 1.0};
  const std::vector<double> v = {0.0, 0.0, 0.0};
  EXPECT_EQ(rl::gae_advantages(r, v, 1.0, 1.0), (std::vector<double>{1.0, 1.0}));
  const std::vector<double> z(4, 0.0);
  const std::vector<double> zv(5, 0.0);
  EXPECT_EQ(rl::gae_advantages(z, zv, 0.9, 0.95), z);
  EXPECT_EQ(kind_of([&] { rl::gae_advantages(r, r, 1.0, 1.0); }), rl::ErrorKind::kLengthMismatch);
}

TEST(Gae, LambdaZeroIsTdError) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> r(7), v(8);
  for (auto& x : r) x = n(gen);
  for (auto& x : v) x = n(gen);
  const auto a = rl::gae_advantages(r, v, 0.9, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) EXPECT_EQ(a[t], r[t] + 0.9 * v[t + 1] - v[t]);
}

TEST(Gae, MatchesDirectSumAndRewardToGo) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(len(gen)));
    std::vector<double> v(r.size() + 1);
    for (auto& x : r) x = n(gen);
    for (auto& x : v) x = n(gen);
    const auto a = rl::gae_advantages(r, v, 0.97, 0.9);
    const auto o = oracle::gae_direct(r, v, 0.97, 0.9);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(a[t], o[t], 1e-10);

    const std::vector<double> zeros(r.size() + 1, 0.0);
    const auto g = rl::gae_advantages(r, zeros, 1.0, 1.0);
    const auto rtg = oracle::reward_to_go(r);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(g[t], rtg[t], 1e-10);
  }
}

TEST(Clipping, HandExamples) {
  EXPECT_DOUBLE_EQ(rl::clipped_surrogate(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(rl::clipped_surrogate(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(rl::clipped_surrogate(1.0, 3.0, 0.2), 3.0);
}

TEST(Clipping, MatchesOracleAndBound) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> ratio(0.0, 3.0);
  std::uniform_real_distribution<double> adv(-3.0, 3.0);
  std::uniform_real_distribution<double> eps(0.01, 0.5);
  for (int i = 0; i < 10000; ++i) {
    const double r = ratio(gen);
    const double a = adv(gen);
    const double e = eps(gen);
    const double c = rl::clipped_surrogate(r, a, e);
    EXPECT_EQ(c, oracle::clipped(r, a, e));
    EXPECT_LE(c, r * a);
    if (a >= 0) {
      EXPECT_LE(std::abs(c), (1 + e) * std::abs(a) + 1e-15);
    }
  }
}

TEST(Ppo, IdentityPolicyGivesMeanAdvantage) {
  const auto p = fixture::tiny_policy(10);
  std::vector<rl::Rollout> seqs;
  std::vector<std::vector<double>> adv;
  double total = 0.0;
  std::size_t count = 0;
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::uint64_t s = 0; s < 3; ++s) {
    seqs.push_back(fixture::rollout(p, fixture::task(s), 6, s));
    std::vector<double> a(seqs.back().length());
    for (auto& x : a) {
      x = n(gen);
      total += x;
      ++count;
    }
    adv.push_back(a);
  }
  EXPECT_NEAR(rl::ppo_objective(p, p, seqs, adv, 0.2), total / static_cast<double>(count), 1e-12);
  adv.back().pop_back();
  EXPECT_EQ(kind_of([&] { rl::ppo_objective(p, p, seqs, adv, 0.2); }), rl::ErrorKind::kLengthMismatch);
}

TEST(Grpo, AdvantageExamples) {
  EXPECT_EQ(rl::grpo_advantages(std::vector<double>{1, -1}), (std::vector<double>{1, -1}));
  const auto a = rl::grpo_advantages(std::vector<double>{1, 1, 1, -1});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[static_cast<std::size_t>(i)], 0.5774, 1e-4);
  EXPECT_NEAR(a[3], -1.7321, 1e-4);
  EXPECT_EQ(kind_of([] { rl::grpo_advantages(std::vector<double>{1, 1, 1, 1}); }), rl::ErrorKind::kDegenerateGroup);
  EXPECT_EQ(kind_of([] { rl::grpo_advantages(std::vector<double>{1}); }), rl::ErrorKind::kInvalidArgument);
}

TEST(Grpo, AdvantagesStandardized) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> size(2, 64);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> r(static_cast<std::size_t>(size(gen)));
    for (auto& x : r) x = n(gen);
    const auto a = rl::grpo_advantages(r);
    EXPECT_LE(std::abs(oracle::mean(a)), 1e-9);
    EXPECT_NEAR(oracle::population_std(a), 1.0, 1e-9);
  }
}

TEST(Grpo, IdentityObjectiveIsZero) {
  const auto p = fixture::tiny_policy(11);
  const auto g = mixed_group(p, 3, 6);
  EXPECT_NEAR(rl::grpo_objective(p, p, p, g, 0.2, 0.04), 0.0, 1e-12);
}

TEST(Grpo, ZeroKlReducesToClippedSurrogate) {
  const auto old = fixture::tiny_policy(12);
  const auto p = fixture::perturbed(old, 0.1, 5);
  const auto ref = fixture::perturbed(old, 0.1, 6);
  const auto g = mixed_group(old, 4, 6);
  std::vector<double> rewards;
  for (const auto& r : g.rollouts) rewards.push_back(r.reward);
  const auto adv = rl::grpo_advantages(rewards);
  double expect = 0.0;
  double expect_kl = 0.0;
  for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
    const auto& r = g.rollouts[i];
    const auto lp = rl::forward_logprobs(p, r.tokens, r.prompt_length, 1.0);
    const auto lo = rl::forward_logprobs(old, r.tokens, r.prompt_length, 1.0);
    const auto lr = rl::forward_logprobs(ref, r.tokens, r.prompt_length, 1.0);
    double s = 0.0;
    double k = 0.0;
    for (std::size_t t = 0; t < lp.size(); ++t) {
      s += oracle::clipped(std::exp(lp[t] - lo[t]), adv[i], 0.2);
      k += oracle::k3(lp[t], lr[t]);
    }
    expect += s / static_cast<double>(lp.size());
    expect_kl += k / static_cast<double>(lp.size());
  }
  const double G = static_cast<double>(g.rollouts.size());
  EXPECT_NEAR(rl::grpo_objective(p, old, ref, g, 0.2, 0.0), expect / G, 1e-12);
  EXPECT_NEAR(rl::grpo_objective(p, old, ref, g, 0.2, 0.3), (expect - 0.3 * expect_kl) / G, 1e-12);
}

TEST(Grpo, DegenerateGroupPropagates) {
  const auto p = fixture::tiny_policy(13);
  auto g = mixed_group(p, 5, 4);
  for (auto& r : g.rollouts) r.reward = 1;
  g = rl::make_group(g.prompt_id, g.rollouts);
  EXPECT_EQ(kind_of([&] { rl::grpo_objective(p, p, p, g, 0.2, 0.0); }), rl::ErrorKind::kDegenerateGroup);
}

TEST(Grpo, GradientMatchesFiniteDifferences) {
  const auto old = fixture::tiny_policy(14);
  const auto p = fixture::perturbed(old, 0.02, 7);
  const auto ref = fixture::perturbed(old, 0.05, 8);
  const auto g = mixed_group(old, 6, 6);
  const auto base = rl::group_baseline(old, ref, g);
  const auto fd = fixture::finite_difference_check(
      p, [&](rl::GradientContext& ctx) { return -rl::grpo_objective(ctx, g, base, 0.2, 0.04); }, 100, 3);
  EXPECT_EQ(fd.failed, 0u) << fd.worst;
}

TEST(Kl, NonNegativeAndZeroOnlyAtEquality) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> lp(-12.0, 0.0);
  for (int i = 0; i < 10000; ++i) {
    const double p = lp(gen);
    const double q = lp(gen);
    const double k = rl::kl_estimate(p, q);
    EXPECT_GE(k, 0.0);
    EXPECT_NEAR(k, oracle::k3(p, q), 1e-12);
    if (p != q) {
      EXPECT_GT(k, 0.0);
    }
    EXPECT_EQ(rl::kl_estimate(p, p), 0.0);
  }
}

TEST(ClipConfig, Validation) {
  rl::ClipConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon = -0.1;
  EXPECT_THROW(c.validate(), rl::Error);
  c = {};
  c.dpo_beta = 0.0;
  EXPECT_THROW(c.validate(), rl::Error);
}
