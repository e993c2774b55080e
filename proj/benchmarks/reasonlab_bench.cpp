#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "reasonlab/autodiff.hpp"
#include "reasonlab/config.hpp"
#include "reasonlab/objectives.hpp"
#include "reasonlab/policy.hpp"
#include "reasonlab/task.hpp"
#include "reasonlab/verifier.hpp"

namespace rl = reasonlab;

namespace {

const rl::PolicyParameters& desk_policy() {
  static const auto p =
      rl::PolicyParameters::initialized(rl::Vocabulary::standard(), rl::desk_policy_shape(), 7);
  return p;
}

// Prompt plus the teacher's reference completion.
rl::SupervisedSequence reference_sequence(std::uint64_t seed) {
  const auto task = rl::generate_task(rl::Difficulty::kHighSchool, rl::DomainTag::kAlgebraic, seed);
  rl::SupervisedSequence s;
  s.tokens = task.prompt;
  const auto completion = rl::reference_completion(task);
  s.tokens.insert(s.tokens.end(), completion.begin(), completion.end());
  for (std::size_t i = task.prompt.size(); i < s.tokens.size(); ++i) s.targets.push_back(i);
  return s;
}

void BM_ForwardLogprobs(benchmark::State& state) {
  const auto seq = reference_sequence(1);
  const std::size_t prompt = seq.targets.front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(rl::forward_logprobs(desk_policy(), seq.tokens, prompt, 1.0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(seq.tokens.size()));
}
BENCHMARK(BM_ForwardLogprobs);

void BM_SftGradient(benchmark::State& state) {
  std::vector<rl::SupervisedSequence> batch;
  for (std::int64_t i = 0; i < state.range(0); ++i) batch.push_back(reference_sequence(static_cast<std::uint64_t>(i)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rl::sft_loss(desk_policy(), batch));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SftGradient)->Arg(1)->Arg(16);

void BM_SampleMany(benchmark::State& state) {
  const auto task = rl::generate_task(rl::Difficulty::kMiddle, rl::DomainTag::kArithmetic, 3);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(state.range(0)));
  std::uint64_t next = 0;
  for (auto _ : state) {
    for (auto& s : seeds) s = next++;
    benchmark::DoNotOptimize(rl::sample_many(desk_policy(), task.prompt, 1.0, 1.0, rl::kMaxCompletionLength, seeds));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleMany)->Arg(1)->Arg(16);

void BM_Verify(benchmark::State& state) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> n(-999, 999);
  std::uniform_int_distribution<int> d(1, 99);
  std::vector<std::pair<std::string, std::string>> cases;
  for (int i = 0; i < 256; ++i) {
    const int a = n(gen);
    const int b = d(gen);
    cases.emplace_back(std::to_string(2 * a) + "/" + std::to_string(2 * b), std::to_string(a) + "/" + std::to_string(b));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [x, y] = cases[i++ % cases.size()];
    benchmark::DoNotOptimize(rl::verify(x, y));
  }
}
BENCHMARK(BM_Verify);

void BM_GrpoAdvantages(benchmark::State& state) {
  std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < rewards.size(); ++i) rewards[i] = i % 3 == 0 ? 1.0 : -1.0;
  for (auto _ : state) benchmark::DoNotOptimize(rl::grpo_advantages(rewards));
}
BENCHMARK(BM_GrpoAdvantages)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
