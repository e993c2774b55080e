#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "reasonlab/policy.hpp"
#include "reasonlab/rollout.hpp"
#include "reasonlab/task.hpp"

namespace reasonlab {

struct EvalConfig {
  std::size_t k = 1;
  std::size_t runs = 3;
  double temperature = 0.6;
  double top_p = 0.95;
  std::size_t max_len = kMaxCompletionLength;
  std::uint64_t seed = 0;

  // Throws kInvalidArgument.
  void validate() const;
};

// n scored samples per task, in sampling order. Sample i of a task uses a
// seed derived from (seed, task id, i), so pools of different sizes share prefixes.
struct SamplePool {
  std::vector<std::string> task_ids;
  std::vector<std::vector<Rollout>> samples;  // parallel to task_ids
};

SamplePool sample_pool(const PolicyParameters& params, std::span<const TaskInstance> tasks, std::size_t n,
                       double temperature, double top_p, std::size_t max_len, std::uint64_t seed);

// Per-task scores over the first k samples of a pool.
bool task_passes(std::span<const Rollout> samples, std::size_t k);
bool task_consensus_correct(std::span<const Rollout> samples, std::size_t k, const std::string& truth);

// Means over tasks. Throw kEmptyTaskSet, and kInvalidArgument when a task has fewer than k samples.
double pass_at_k(const SamplePool& pool, std::size_t k);
double consensus_at_k(const SamplePool& pool, std::span<const TaskInstance> tasks, std::size_t k);

// Draw k fresh samples per task with config.seed and score them.
double pass_at_k(const PolicyParameters& params, std::span<const TaskInstance> tasks, const EvalConfig& config);
double consensus_at_k(const PolicyParameters& params, std::span<const TaskInstance> tasks, const EvalConfig& config);

struct ReportRow {
  std::string checkpoint;
  std::string suite;
  std::string metric;
  double value = 0.0;
  std::size_t runs = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_run;
};

using Suites = std::map<std::string, std::vector<TaskInstance>>;

// pass@1 per suite, averaged over config.runs runs with distinct derived seeds.
// Throws kEmptySuite when there is no suite or a suite has no task.
std::vector<ReportRow> evaluate_suite(const PolicyParameters& params, const std::string& checkpoint,
                                      const Suites& suites, const EvalConfig& config);

std::uint64_t run_seed(std::uint64_t base, std::size_t run);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

// pass@k for each k on one fixed pool (needs max(ks) samples per task).
std::vector<CurvePoint> pass_at_k_curve(const SamplePool& pool, std::span<const std::size_t> ks);

void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows, bool append = false);
void write_curve(const std::filesystem::path& path, const std::string& x_name, const std::string& y_name,
                 std::span<const CurvePoint> points);

// Held-out suite: tasks cycle through difficulties and domains, seeds offset by `seed_base`.
std::vector<TaskInstance> make_suite(std::size_t count, std::uint64_t seed_base);

}  // namespace reasonlab
