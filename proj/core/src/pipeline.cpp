#include "reasonlab/pipeline.hpp"

#include "reasonlab/curation.hpp"
#include "reasonlab/error.hpp"
#include "reasonlab/records.hpp"
#include "reasonlab/rng.hpp"

namespace reasonlab {
namespace {

enum : std::uint64_t { kTrainSplit = 1, kRlSplit, kValidationSplit, kHeldoutSplit, kTeacherStream };

TeacherTrace as_trace(const Rollout& r) {
  TeacherTrace t;
  t.task_id = r.task_id;
  t.tokens.assign(r.completion().begin(), r.completion().end());
  t.stated_answer = r.answer.value_or("");
  t.is_correct = r.reward == 1;
  t.length = t.tokens.size();
  return t;
}

std::filesystem::path need(const std::filesystem::path& dir, const char* name) {
  auto p = dir / name;
  if (!std::filesystem::exists(p)) throw Error(ErrorKind::kMissingInput, "missing " + p.string());
  return p;
}

}  // namespace

std::vector<TaskInstance> make_tasks(std::size_t count, std::uint64_t seed, std::uint64_t split) {
  std::vector<TaskInstance> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto difficulty = static_cast<Difficulty>(i % kDifficultyCount);
    const auto domain = static_cast<DomainTag>((i / kDifficultyCount) % kDomainCount);
    tasks.push_back(generate_task(difficulty, domain, derive_seed(seed, {split, i})));
  }
  return tasks;
}

DataBundle generate_data(const DataConfig& config) {
  DataBundle d;
  d.train_tasks = make_tasks(config.train_tasks, config.seed, kTrainSplit);
  auto sampled = rejection_sample_dataset(
      d.train_tasks, TeacherConfig{config.teacher_error_rate, derive_seed(config.seed, {kTeacherStream})},
      config.rollouts_per_task);
  d.retained = std::move(sampled.retained);
  d.rejected = std::move(sampled.rejected);
  d.sft_examples = select_by_difficulty(d.train_tasks, d.retained, config.sft_min_difficulty);

  std::vector<Rollout> all = d.retained;
  all.insert(all.end(), d.rejected.begin(), d.rejected.end());
  d.pairs = build_preference_pairs(d.train_tasks, all, config.pair_min_difficulty, config.max_pairs_per_task);

  d.rl_prompts = make_tasks(config.rl_prompts, config.seed, kRlSplit);
  d.validation = make_tasks(config.validation_tasks, config.seed, kValidationSplit);
  d.heldout = make_tasks(config.heldout_tasks, config.seed, kHeldoutSplit);
  return d;
}

void write_data(const std::filesystem::path& dir, const DataBundle& data) {
  std::filesystem::create_directories(dir);
  write_jsonl(dir / data_files::kTasks, data.train_tasks);
  std::vector<TeacherTrace> traces;
  for (const auto* set : {&data.retained, &data.rejected}) {
    for (const auto& r : *set) traces.push_back(as_trace(r));
  }
  write_jsonl(dir / data_files::kTraces, traces);
  write_jsonl(dir / data_files::kRetained, data.retained);
  write_jsonl(dir / data_files::kRejected, data.rejected);
  write_jsonl(dir / data_files::kSft, data.sft_examples);
  write_jsonl(dir / data_files::kPairs, data.pairs);
  write_jsonl(dir / data_files::kRlPrompts, data.rl_prompts);
  write_jsonl(dir / data_files::kValidation, data.validation);
  write_jsonl(dir / data_files::kHeldout, data.heldout);
}

DataBundle read_data(const std::filesystem::path& dir) {
  DataBundle d;
  d.train_tasks = read_tasks(need(dir, data_files::kTasks));
  d.retained = read_rollouts(need(dir, data_files::kRetained));
  d.rejected = read_rollouts(need(dir, data_files::kRejected));
  d.sft_examples = read_rollouts(need(dir, data_files::kSft));
  d.pairs = read_pairs(need(dir, data_files::kPairs));
  d.rl_prompts = read_tasks(need(dir, data_files::kRlPrompts));
  d.validation = read_tasks(need(dir, data_files::kValidation));
  d.heldout = read_tasks(need(dir, data_files::kHeldout));
  return d;
}

}  // namespace reasonlab
