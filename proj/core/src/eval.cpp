#include "reasonlab/eval.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "reasonlab/checkpoint.hpp"
#include "reasonlab/error.hpp"
#include "reasonlab/rng.hpp"
#include "reasonlab/verifier.hpp"

namespace reasonlab {
namespace {

void require_tasks(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::kEmptyTaskSet, "no tasks to evaluate");
}

void require_depth(const SamplePool& pool, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  for (const auto& s : pool.samples) {
    if (s.size() < k) throw Error(ErrorKind::kInvalidArgument, "pool holds fewer than k samples for a task");
  }
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

void EvalConfig::validate() const {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  if (runs < 1) throw Error(ErrorKind::kInvalidArgument, "runs must be >= 1");
  if (!(temperature > 0.0)) throw Error(ErrorKind::kNonPositiveTemperature, "temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorKind::kInvalidTopP, "top_p must lie in (0, 1]");
  if (max_len < 1) throw Error(ErrorKind::kInvalidArgument, "max_len must be >= 1");
}

SamplePool sample_pool(const PolicyParameters& params, std::span<const TaskInstance> tasks, std::size_t n,
                       double temperature, double top_p, std::size_t max_len, std::uint64_t seed) {
  require_tasks(tasks.size());
  SamplePool pool;
  for (const auto& task : tasks) {
    std::vector<std::uint64_t> seeds(n);
    const std::uint64_t task_stream = std::hash<std::string>{}(task.id);
    for (std::size_t i = 0; i < n; ++i) seeds[i] = derive_seed(seed, {task_stream, i});
    auto sampled = sample_many(params, task.prompt, temperature, top_p, max_len, seeds);
    std::vector<Rollout> rollouts;
    rollouts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rollout r;
      r.id = task.id + "/s" + std::to_string(i);
      r.task_id = task.id;
      r.tokens = std::move(sampled[i].tokens);
      r.prompt_length = sampled[i].prompt_length;
      r.logprobs = std::move(sampled[i].logprobs);
      r.answer = extract_final_answer(r.completion(), params.vocabulary());
      r.reward = r.answer && verify(*r.answer, task.ground_truth) ? 1 : -1;
      rollouts.push_back(std::move(r));
    }
    pool.task_ids.push_back(task.id);
    pool.samples.push_back(std::move(rollouts));
  }
  return pool;
}

bool task_passes(std::span<const Rollout> samples, std::size_t k) {
  const std::size_t n = std::min(k, samples.size());
  return std::any_of(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n),
                     [](const Rollout& r) { return r.reward == 1; });
}

bool task_consensus_correct(std::span<const Rollout> samples, std::size_t k, const std::string& truth) {
  const std::size_t n = std::min(k, samples.size());
  // Classes in order of first appearance. Samples without a parseable answer
  // share one class that is never correct.
  std::vector<std::optional<std::string>> representative;
  std::vector<std::size_t> count;
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<std::string> answer = samples[i].answer;
    if (answer && !parse_answer_lenient(*answer)) answer.reset();
    std::size_t c = 0;
    for (; c < representative.size(); ++c) {
      const auto& rep = representative[c];
      if (!answer && !rep) break;
      if (answer && rep && verify(*answer, *rep)) break;
    }
    if (c == representative.size()) {
      representative.push_back(answer);
      count.push_back(0);
    }
    ++count[c];
  }
  if (representative.empty()) return false;
  // max_element keeps the first maximum, i.e. the earliest-sampled class on ties.
  const auto best = static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
  return representative[best].has_value() && verify(*representative[best], truth);
}

double pass_at_k(const SamplePool& pool, std::size_t k) {
  require_tasks(pool.samples.size());
  require_depth(pool, k);
  std::size_t solved = 0;
  for (const auto& s : pool.samples) solved += task_passes(s, k) ? 1 : 0;
  return static_cast<double>(solved) / static_cast<double>(pool.samples.size());
}

double consensus_at_k(const SamplePool& pool, std::span<const TaskInstance> tasks, std::size_t k) {
  require_tasks(pool.samples.size());
  require_depth(pool, k);
  if (tasks.size() != pool.samples.size()) throw Error(ErrorKind::kLengthMismatch, "tasks and pool disagree");
  std::size_t solved = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    solved += task_consensus_correct(pool.samples[i], k, tasks[i].ground_truth) ? 1 : 0;
  }
  return static_cast<double>(solved) / static_cast<double>(tasks.size());
}

double pass_at_k(const PolicyParameters& params, std::span<const TaskInstance> tasks, const EvalConfig& config) {
  config.validate();
  require_tasks(tasks.size());
  const auto pool = sample_pool(params, tasks, config.k, config.temperature, config.top_p, config.max_len, config.seed);
  return pass_at_k(pool, config.k);
}

double consensus_at_k(const PolicyParameters& params, std::span<const TaskInstance> tasks, const EvalConfig& config) {
  config.validate();
  require_tasks(tasks.size());
  const auto pool = sample_pool(params, tasks, config.k, config.temperature, config.top_p, config.max_len, config.seed);
  return consensus_at_k(pool, tasks, config.k);
}

std::uint64_t run_seed(std::uint64_t base, std::size_t run) { return derive_seed(base, {0x65'76'61'6cULL, run}); }

std::vector<ReportRow> evaluate_suite(const PolicyParameters& params, const std::string& checkpoint,
                                      const Suites& suites, const EvalConfig& config) {
  config.validate();
  if (suites.empty()) throw Error(ErrorKind::kEmptySuite, "no evaluation suite given");
  std::vector<ReportRow> rows;
  for (const auto& [name, tasks] : suites) {
    if (tasks.empty()) throw Error(ErrorKind::kEmptySuite, "suite '" + name + "' has no tasks");
    ReportRow row;
    row.checkpoint = checkpoint;
    row.suite = name;
    row.metric = "pass@1";
    row.runs = config.runs;
    double total = 0.0;
    for (std::size_t run = 0; run < config.runs; ++run) {
      EvalConfig one = config;
      one.k = 1;
      one.seed = run_seed(config.seed, run);
      const double score = pass_at_k(params, tasks, one);
      row.seeds.push_back(one.seed);
      row.per_run.push_back(score);
      total += score;
    }
    row.value = total / static_cast<double>(config.runs);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CurvePoint> pass_at_k_curve(const SamplePool& pool, std::span<const std::size_t> ks) {
  std::vector<CurvePoint> out;
  for (std::size_t k : ks) out.push_back({static_cast<double>(k), pass_at_k(pool, k)});
  return out;
}

void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows, bool append) {
  const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  if (header) out << "checkpoint,suite,metric,value,runs,seeds\n";
  for (const auto& r : rows) {
    out << r.checkpoint << ',' << r.suite << ',' << r.metric << ',' << format_double(r.value) << ',' << r.runs << ',';
    for (std::size_t i = 0; i < r.seeds.size(); ++i) out << (i ? ";" : "") << r.seeds[i];
    out << '\n';
  }
}

void write_curve(const std::filesystem::path& path, const std::string& x_name, const std::string& y_name,
                 std::span<const CurvePoint> points) {
  std::string text = x_name + "," + y_name + "\n";
  for (const auto& p : points) text += format_double(p.x) + "," + format_double(p.y) + "\n";
  write_file_atomic(path, text);
}

std::vector<TaskInstance> make_suite(std::size_t count, std::uint64_t seed_base) {
  std::vector<TaskInstance> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto difficulty = static_cast<Difficulty>(i % kDifficultyCount);
    const auto domain = static_cast<DomainTag>((i / kDifficultyCount) % kDomainCount);
    tasks.push_back(generate_task(difficulty, domain, seed_base + i));
  }
  return tasks;
}

}  // namespace reasonlab
