#include "reasonlab/curation.hpp"

#include <algorithm>
#include <map>

#include "reasonlab/error.hpp"
#include "reasonlab/rng.hpp"
#include "reasonlab/verifier.hpp"

namespace reasonlab {

RejectionSampleResult rejection_sample_dataset(std::span<const TaskInstance> tasks, const TeacherConfig& teacher,
                                               std::size_t rollouts_per_task) {
  if (rollouts_per_task == 0) throw Error(ErrorKind::kInvalidArgument, "rollouts_per_task must be >= 1");
  RejectionSampleResult out;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    for (std::size_t k = 0; k < rollouts_per_task; ++k) {
      const TeacherTrace trace = teacher_rollout(task, teacher.error_rate, derive_seed(teacher.seed, {t, k}));
      Rollout r;
      r.id = task.id + "/t" + std::to_string(k);
      r.task_id = task.id;
      r.tokens = task.prompt;
      r.tokens.insert(r.tokens.end(), trace.tokens.begin(), trace.tokens.end());
      r.prompt_length = task.prompt.size();
      r.answer = extract_final_answer(r.completion());
      r.reward = reward(r.completion(), task.ground_truth, r.id).reward;
      (r.reward == 1 ? out.retained : out.rejected).push_back(std::move(r));
    }
  }
  return out;
}

std::vector<PreferencePair> build_preference_pairs(std::span<const TaskInstance> tasks,
                                                   std::span<const Rollout> rollouts, Difficulty min_difficulty,
                                                   std::size_t max_pairs_per_task) {
  std::map<std::string, std::vector<const Rollout*>, std::less<>> by_task;
  for (const auto& r : rollouts) by_task[r.task_id].push_back(&r);

  std::vector<PreferencePair> pairs;
  for (const auto& task : tasks) {
    if (task.difficulty < min_difficulty) continue;
    auto it = by_task.find(task.id);
    if (it == by_task.end()) continue;
    std::vector<const Rollout*> good;
    std::vector<const Rollout*> bad;
    for (const Rollout* r : it->second) (r->reward == 1 ? good : bad).push_back(r);
    const std::size_t limit = std::min({good.size(), bad.size(), max_pairs_per_task});
    std::vector<bool> used(bad.size(), false);
    for (std::size_t g = 0; g < limit; ++g) {
      std::size_t best = bad.size();
      std::size_t best_gap = 0;
      for (std::size_t b = 0; b < bad.size(); ++b) {
        if (used[b]) continue;
        const std::size_t lg = good[g]->length();
        const std::size_t lb = bad[b]->length();
        const std::size_t gap = lg > lb ? lg - lb : lb - lg;
        if (best == bad.size() || gap < best_gap) {
          best = b;
          best_gap = gap;
        }
      }
      used[best] = true;
      PreferencePair p;
      p.task_id = task.id;
      p.prompt = task.prompt;
      p.preferred = *good[g];
      p.dispreferred = *bad[best];
      p.difficulty = task.difficulty;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::vector<Rollout> select_by_difficulty(std::span<const TaskInstance> tasks, std::span<const Rollout> rollouts,
                                          Difficulty min_difficulty) {
  std::map<std::string, Difficulty, std::less<>> level;
  for (const auto& t : tasks) level.emplace(t.id, t.difficulty);
  std::vector<Rollout> out;
  for (const auto& r : rollouts) {
    auto it = level.find(r.task_id);
    if (it != level.end() && it->second >= min_difficulty) out.push_back(r);
  }
  return out;
}

SupervisedSequence supervised_example(const Rollout& example) {
  SupervisedSequence s;
  s.tokens = example.tokens;
  s.segment_starts = {0};
  for (std::size_t i = std::max<std::size_t>(example.prompt_length, 1); i < example.tokens.size(); ++i) {
    s.targets.push_back(i);
  }
  return s;
}

PackedBatches pack_batches(std::span<const Rollout> corpus, std::size_t sequence_length, const Vocabulary& vocab) {
  struct Bin {
    std::vector<std::size_t> members;
    std::size_t used = 0;
  };
  std::vector<Bin> bins;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::size_t len = corpus[i].tokens.size();
    if (len > sequence_length) {
      throw Error(ErrorKind::kExampleTooLong, "example " + corpus[i].id + " has " + std::to_string(len) +
                                                  " tokens, capacity " + std::to_string(sequence_length));
    }
    auto fit = std::find_if(bins.begin(), bins.end(), [&](const Bin& b) { return b.used + len <= sequence_length; });
    if (fit == bins.end()) {
      bins.emplace_back();
      fit = std::prev(bins.end());
    }
    fit->members.push_back(i);
    fit->used += len;
  }

  PackedBatches out;
  for (const auto& bin : bins) {
    SupervisedSequence s;
    s.segment_starts.clear();
    for (std::size_t i : bin.members) {
      const Rollout& ex = corpus[i];
      const std::size_t start = s.tokens.size();
      s.segment_starts.push_back(start);
      s.tokens.insert(s.tokens.end(), ex.tokens.begin(), ex.tokens.end());
      for (std::size_t j = std::max<std::size_t>(ex.prompt_length, 1); j < ex.tokens.size(); ++j) {
        if (ex.tokens[j] == vocab.eos()) continue;
        s.targets.push_back(start + j);
      }
    }
    out.document_tokens += s.tokens.size();
    out.content_lengths.push_back(s.tokens.size());
    // Padding forms its own unsupervised segment so it never attends to a document.
    if (s.tokens.size() < sequence_length) s.segment_starts.push_back(s.tokens.size());
    s.tokens.resize(sequence_length, vocab.pad());
    out.total_tokens += s.tokens.size();
    out.sequences.push_back(std::move(s));
  }
  return out;
}

SupervisedSequence PackedBatches::unpadded(std::size_t i) const {
  SupervisedSequence s = sequences.at(i);
  s.tokens.resize(content_lengths.at(i));
  if (s.segment_starts.back() == s.tokens.size()) s.segment_starts.pop_back();
  return s;
}

}  // namespace reasonlab
