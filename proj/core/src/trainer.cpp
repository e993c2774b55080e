#include "reasonlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "reasonlab/checkpoint.hpp"
#include "reasonlab/curation.hpp"
#include "reasonlab/error.hpp"
#include "reasonlab/eval.hpp"
#include "reasonlab/objectives.hpp"
#include "reasonlab/recipe.hpp"
#include "reasonlab/rng.hpp"
#include "reasonlab/verifier.hpp"

namespace reasonlab {
namespace {

// Stream tags for derive_seed.
enum : std::uint64_t { kShuffleStream = 1, kProbeStream, kRolloutStream, kRebalanceStream, kEvalStream };

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

class Updater {
 public:
  Updater(const StageConfig& config, std::size_t n) : config_(config) {
    if (config.optimizer == Optimizer::kAdam) {
      m_.assign(n, 0.0);
      v_.assign(n, 0.0);
    }
  }

  void apply(ParameterSet& params, ParameterSet& grad, double lr) {
    auto g = grad.flat();
    if (config_.grad_clip > 0.0) {
      double sq = 0.0;
      for (double x : g) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm > config_.grad_clip) {
        const double scale = config_.grad_clip / norm;
        for (double& x : g) x *= scale;
      }
    }
    auto p = params.flat();
    if (config_.optimizer == Optimizer::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  const StageConfig& config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

std::vector<TaskInstance> eval_subset(const StageConfig& config, const std::vector<TaskInstance>& validation) {
  if (config.eval_tasks == 0 || config.eval_tasks >= validation.size()) return validation;
  return {validation.begin(), validation.begin() + static_cast<std::ptrdiff_t>(config.eval_tasks)};
}

// Shared driver: owns the parameters, warmup schedule, update and failure handling.
class StageRun {
 public:
  StageRun(const StageConfig& config, const PolicyParameters& input, const RunOptions& options)
      : config_(config), options_(options), result_{input, {}, {}, {}, false},
        updater_(config, input.values().size()) {
    if (!options_.output_dir.empty()) {
      std::filesystem::create_directories(options_.output_dir);
      metrics_path_ = options_.output_dir / (std::string(stage_name(config_.stage)) + "_metrics.csv");
      write_file_atomic(metrics_path_, std::string(kMetricsHeader) + "\n");
    }
  }

  PolicyParameters& params() { return result_.params; }
  StageResult& result() { return result_; }

  // Descends on the loss built by `builder`; returns the loss before the update.
  double step(std::size_t step, std::size_t total, const LossBuilder& builder, StepRecord& record) {
    const double lr = scheduled_learning_rate(config_, step, total);
    record.learning_rate = lr;
    try {
      auto lg = gradient(result_.params, builder);
      ParameterSet before = result_.params.values();
      updater_.apply(result_.params.values(), lg.gradient, lr);
      if (!result_.params.values().all_finite()) {
        result_.params.values() = std::move(before);
        throw Error(ErrorKind::kNonFiniteLoss, "update produced non-finite parameters");
      }
      return lg.loss;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNonFiniteLoss && !options_.output_dir.empty()) {
        save_checkpoint(options_.output_dir / (std::string(stage_name(config_.stage)) + ".last_good.ckpt"),
                        result_.params);
      }
      throw;
    }
  }

  // Rows reach the metrics file one step late so the final row can carry the checkpoint name.
  void emit(StepRecord record) {
    if (options_.on_step) options_.on_step(record);
    if (!result_.records.empty()) append_metrics(result_.records.back());
    result_.records.push_back(std::move(record));
  }

  StageResult finish() {
    result_.params.stages().emplace_back(stage_name(config_.stage));
    if (!options_.output_dir.empty()) {
      const std::string name(stage_name(config_.stage));
      const auto ckpt = options_.output_dir / (name + ".ckpt");
      save_checkpoint(ckpt, result_.params);
      if (!result_.records.empty()) {
        result_.records.back().checkpoint = ckpt.filename().string();
        append_metrics(result_.records.back());
      }
      write_eval_curve(options_.output_dir / (name + "_eval_curve.csv"));
      if (!result_.filters.empty()) {
        write_filter_log(options_.output_dir / (name + "_filters.csv"), result_.filters);
      }
    }
    return std::move(result_);
  }

 private:
  const StageConfig& config_;
  const RunOptions& options_;
  StageResult result_;
  Updater updater_;
  std::filesystem::path metrics_path_;

  // Two-column metric-vs-step table for the periodic evaluations, if any ran.
  void write_eval_curve(const std::filesystem::path& path) const {
    std::string text;
    for (const auto& r : result_.records) {
      if (r.eval_metric.empty()) continue;
      if (text.empty()) text = "step," + r.eval_metric + "\n";
      text += std::to_string(r.step) + "," + fmt(r.eval_value) + "\n";
    }
    if (!text.empty()) write_file_atomic(path, text);
  }

  void append_metrics(const StepRecord& r) {
    if (metrics_path_.empty()) return;
    std::ofstream out(metrics_path_, std::ios::app);
    if (!out) throw Error(ErrorKind::kIo, "cannot append to " + metrics_path_.string());
    out << metrics_row(r) << '\n';
  }
};

StageResult run_supervised(const StageConfig& config, const PolicyParameters& input, const StageInputs& inputs,
                           const RunOptions& options) {
  if (inputs.examples.empty()) {
    throw Error(ErrorKind::kMissingInput, std::string(stage_name(config.stage)) + " needs training examples");
  }
  std::vector<SupervisedSequence> data;
  if (config.packing) {
    const auto packed = pack_batches(inputs.examples, config.sequence_length, input.vocabulary());
    for (std::size_t i = 0; i < packed.sequences.size(); ++i) data.push_back(packed.unpadded(i));
  } else {
    for (const auto& ex : inputs.examples) {
      if (ex.tokens.size() > config.sequence_length) {
        throw Error(ErrorKind::kExampleTooLong, "example " + ex.id + " exceeds the sequence length");
      }
      data.push_back(supervised_example(ex));
    }
  }

  const std::size_t per_epoch = (data.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total = config.total_steps > 0 ? config.total_steps : per_epoch * config.epochs;
  const auto validation = eval_subset(config, inputs.validation);
  const bool evaluating = config.eval_interval > 0 && !validation.empty();
  const std::uint64_t eval_seed = derive_seed(config.seed, {kEvalStream});

  StageRun run(config, input, options);
  double best = -1.0;
  std::size_t stale = 0;
  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t epoch = step / per_epoch;
    const std::size_t slot = step % per_epoch;
    if (slot == 0) order = permutation(data.size(), derive_seed(config.seed, {kShuffleStream, epoch}));
    std::vector<SupervisedSequence> batch;
    for (std::size_t i = slot * config.batch_size; i < std::min(data.size(), (slot + 1) * config.batch_size); ++i) {
      batch.push_back(data[order[i]]);
    }
    StepRecord record;
    record.stage = config.stage;
    record.step = step;
    record.loss = run.step(step, total, [&](GradientContext& ctx) { return sft_loss(ctx, batch); }, record);

    const bool last = step + 1 == total;
    if (evaluating && ((step + 1) % config.eval_interval == 0 || last)) {
      EvalConfig ec;
      ec.temperature = kEvalTemperature;
      ec.top_p = kEvalTopP;
      ec.seed = eval_seed;
      record.eval_metric = "pass@1";
      record.eval_value = pass_at_k(run.params(), validation, ec);
      if (record.eval_value >= best + config.min_improvement) {
        best = record.eval_value;
        stale = 0;
      } else {
        ++stale;
      }
    }
    run.emit(std::move(record));
    if (config.stage == Stage::kMidtrain && evaluating && stale >= config.patience) {
      run.result().stopped_early = true;
      break;
    }
  }
  return run.finish();
}

StageResult run_dpo(const StageConfig& config, const PolicyParameters& input, const StageInputs& inputs,
                    const RunOptions& options) {
  if (inputs.pairs.empty()) throw Error(ErrorKind::kMissingInput, "dpo needs preference pairs");
  for (const auto& p : inputs.pairs) {
    if (p.preferred.tokens.size() > config.sequence_length || p.dispreferred.tokens.size() > config.sequence_length) {
      throw Error(ErrorKind::kExampleTooLong, "pair for " + p.task_id + " exceeds the sequence length");
    }
  }
  const PolicyParameters reference = input;
  const std::size_t n = inputs.pairs.size();
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total = config.total_steps > 0 ? config.total_steps : per_epoch * config.epochs;

  StageRun run(config, input, options);
  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t epoch = step / per_epoch;
    const std::size_t slot = step % per_epoch;
    if (slot == 0) order = permutation(n, derive_seed(config.seed, {kShuffleStream, epoch}));
    std::vector<PreferencePair> batch;
    for (std::size_t i = slot * config.batch_size; i < std::min(n, (slot + 1) * config.batch_size); ++i) {
      batch.push_back(inputs.pairs[order[i]]);
    }
    StepRecord record;
    record.stage = config.stage;
    record.step = step;
    record.loss = run.step(
        step, total, [&](GradientContext& ctx) { return dpo_loss(ctx, reference, batch, config.clip.dpo_beta); },
        record);
    run.emit(std::move(record));
  }
  return run.finish();
}

std::vector<Rollout> sample_rollouts(const PolicyParameters& params, const TaskInstance& task, double temperature,
                                     double top_p, std::size_t count, std::size_t first_index,
                                     std::uint64_t seed_base) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t j = 0; j < count; ++j) seeds[j] = derive_seed(seed_base, {first_index + j});
  auto sampled = sample_many(params, task.prompt, temperature, top_p, kMaxCompletionLength, seeds);
  std::vector<Rollout> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    Rollout r;
    r.id = task.id + "/r" + std::to_string(first_index + j);
    r.task_id = task.id;
    r.tokens = std::move(sampled[j].tokens);
    r.prompt_length = sampled[j].prompt_length;
    r.logprobs = std::move(sampled[j].logprobs);
    r.answer = extract_final_answer(r.completion(), params.vocabulary());
    r.reward = reward(r.completion(), task.ground_truth, r.id, params.vocabulary()).reward;
    out.push_back(std::move(r));
  }
  return out;
}

StageResult run_rl(const StageConfig& config, const PolicyParameters& input, const StageInputs& inputs,
                   const RunOptions& options) {
  const RecipeConfig& rc = config.recipe;
  if (inputs.prompts.empty()) throw Error(ErrorKind::kMissingInput, "rl needs a prompt pool");
  const std::size_t total = config.total_steps > 0 ? config.total_steps : config.epochs;
  const AnnealSchedule schedule{rc.t_start, rc.t_end, rc.anneal_fraction, total};
  schedule.validate();

  StageRun run(config, input, options);
  const PolicyParameters reference = input;
  auto& filters = run.result().filters;

  // Prompt optimization: keep prompts whose correct answers have uniform lengths.
  std::vector<const TaskInstance*> pool;
  for (std::size_t i = 0; i < inputs.prompts.size(); ++i) {
    const auto& task = inputs.prompts[i];
    std::vector<RolloutGroup> probes;
    for (std::size_t round = 0; round < rc.probe_rounds; ++round) {
      probes.push_back(make_group(task.id, sample_rollouts(input, task, rc.t_start, rc.top_p, rc.group_size, 0,
                                                           derive_seed(config.seed, {kProbeStream, i, round}))));
    }
    const auto cv = pooled_length_cv(probes);
    const auto decision = prompt_variance_filter(probes, rc.cv_threshold);
    filters.push_back({0, task.id, "prompt_variance", std::string(filter_decision_name(decision)),
                       cv ? "cv=" + fmt(*cv) : "no positive rollout"});
    if (decision == FilterDecision::kKeep) {
      pool.push_back(&task);
      run.result().kept_prompts.push_back(task.id);
    }
  }
  if (pool.empty()) throw Error(ErrorKind::kMissingInput, "no prompt survived the variance filter");

  const auto validation = eval_subset(config, inputs.validation);
  const bool evaluating = config.eval_interval > 0 && !validation.empty();
  EvalConfig ec;
  ec.k = config.eval_samples;
  ec.temperature = kEvalTemperature;
  ec.top_p = kEvalTopP;
  ec.seed = derive_seed(config.seed, {kEvalStream});
  const std::string cons_name = "cons@" + std::to_string(ec.k);

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::size_t pass = 0;
  for (std::size_t step = 0; step <= total; ++step) {
    StepRecord record;
    record.stage = Stage::kRl;
    record.step = step;
    record.temperature = anneal_temperature(step, schedule);
    if (evaluating && (step % config.eval_interval == 0 || step == total)) {
      record.eval_metric = cons_name;
      record.eval_value = consensus_at_k(run.params(), validation, ec);
    }
    if (step == total) {
      // Evaluation-only row after the last update.
      record.learning_rate = 0.0;
      run.emit(std::move(record));
      break;
    }

    std::vector<RolloutGroup> kept;
    double accuracy_sum = 0.0;
    double length_sum = 0.0;
    std::size_t sampled = 0;
    for (std::size_t b = 0; b < rc.prompts_per_step; ++b) {
      if (cursor == 0) order = permutation(pool.size(), derive_seed(config.seed, {kShuffleStream, pass}));
      const std::size_t pool_index = order[cursor];
      const TaskInstance& task = *pool[pool_index];
      if (++cursor == pool.size()) {
        cursor = 0;
        ++pass;
      }
      const std::uint64_t seed_base = derive_seed(config.seed, {kRolloutStream, step, b});
      auto rollouts = sample_rollouts(run.params(), task, record.temperature, rc.top_p, rc.group_size, 0, seed_base);
      RolloutGroup group = make_group(task.id, rollouts);
      accuracy_sum += group.group_accuracy;
      for (const auto& r : group.rollouts) length_sum += static_cast<double>(r.length());
      sampled += group.rollouts.size();

      auto drop = [&](const std::string& filter, const std::string& reason) {
        filters.push_back({step, task.id, filter, "drop", reason});
        ++record.groups_dropped;
      };
      const std::string acc_reason = "accuracy=" + fmt(group.group_accuracy);
      if (rc.dapo_baseline) {
        if (dapo_filter(group) == FilterDecision::kDrop) {
          drop("dapo", acc_reason);
          continue;
        }
        filters.push_back({step, task.id, "dapo", "keep", acc_reason});
      } else {
        // Oversample in increments of G while no rollout is correct.
        while (group.positives() == 0 && group.rollouts.size() + rc.group_size <= rc.oversample_cap) {
          auto more = sample_rollouts(run.params(), task, record.temperature, rc.top_p, rc.group_size,
                                      group.rollouts.size(), seed_base);
          auto all = group.rollouts;
          all.insert(all.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
          group = make_group(task.id, std::move(all));
        }
        const std::string reason = "accuracy=" + fmt(group.group_accuracy) + " n=" + std::to_string(group.rollouts.size());
        if (accuracy_filter(group, rc.accuracy_threshold) == FilterDecision::kDrop) {
          drop("accuracy", reason);
          continue;
        }
        filters.push_back({step, task.id, "accuracy", "keep", reason});
        try {
          group = rebalance_group(group, derive_seed(config.seed, {kRebalanceStream, step, b}));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kPromptUnusable) throw;
          drop("rebalance", "no positive rollout in " + std::to_string(group.rollouts.size()));
          continue;
        }
        filters.push_back({step, task.id, "rebalance", "keep",
                           "positives=" + std::to_string(group.positives()) +
                               " negatives=" + std::to_string(group.negatives())});
      }
      std::vector<double> rewards;
      for (const auto& r : group.rollouts) rewards.push_back(r.reward);
      try {
        group.advantages = grpo_advantages(rewards);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kDegenerateGroup && e.kind() != ErrorKind::kInvalidArgument) throw;
        drop("advantage", "zero reward variance");
        continue;
      }
      kept.push_back(std::move(group));
    }
    record.accuracy = accuracy_sum / static_cast<double>(rc.prompts_per_step);
    record.mean_length = sampled ? length_sum / static_cast<double>(sampled) : 0.0;
    record.groups_kept = kept.size();
    for (const auto& g : kept) record.rollouts_used += g.rollouts.size();

    if (kept.empty()) {
      record.learning_rate = scheduled_learning_rate(config, step, total);
    } else {
      std::vector<GroupBaseline> baselines;
      for (const auto& g : kept) baselines.push_back(group_baseline(run.params(), reference, g));
      record.loss = run.step(
          step, total,
          [&](GradientContext& ctx) {
            std::vector<Scalar> objectives;
            for (std::size_t g = 0; g < kept.size(); ++g) {
              objectives.push_back(
                  grpo_objective(ctx, kept[g], baselines[g], config.clip.epsilon, config.clip.beta_kl));
            }
            return -mean(objectives);
          },
          record);
    }
    run.emit(std::move(record));
  }
  return run.finish();
}

}  // namespace

double scheduled_learning_rate(const StageConfig& config, std::size_t step, std::size_t total_steps) {
  const auto warmup = static_cast<std::size_t>(std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
  if (warmup == 0 || step >= warmup) return config.learning_rate;
  return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

StageResult run_stage(const StageConfig& config, const PolicyParameters& input, const StageInputs& inputs,
                      const RunOptions& options) {
  config.validate();
  if (!input.values().all_finite()) throw Error(ErrorKind::kNonFiniteLoss, "input checkpoint is not finite");
  if (const auto need = required_predecessor(config.stage); need && !options.allow_out_of_order) {
    if (!input.has_stage(stage_name(*need))) {
      throw Error(ErrorKind::kStageOrder, std::string(stage_name(config.stage)) + " expects a checkpoint that went through " +
                                              std::string(stage_name(*need)));
    }
  }
  switch (config.stage) {
    case Stage::kMidtrain:
    case Stage::kSft: return run_supervised(config, input, inputs, options);
    case Stage::kDpo: return run_dpo(config, input, inputs, options);
    case Stage::kRl: return run_rl(config, input, inputs, options);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown stage");
}

std::string metrics_row(const StepRecord& r) {
  std::ostringstream ss;
  ss << stage_name(r.stage) << ',' << r.step << ',' << fmt(r.loss) << ',' << fmt(r.learning_rate) << ','
     << fmt(r.temperature) << ',' << fmt(r.accuracy) << ',' << fmt(r.mean_length) << ',' << r.groups_kept << ','
     << r.groups_dropped << ',' << r.rollouts_used << ',' << r.eval_metric << ','
     << (r.eval_metric.empty() ? std::string() : fmt(r.eval_value)) << ',' << r.checkpoint;
  return ss.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records) {
  std::string text = std::string(kMetricsHeader) + "\n";
  for (const auto& r : records) text += metrics_row(r) + "\n";
  write_file_atomic(path, text);
}

void write_filter_log(const std::filesystem::path& path, const std::vector<FilterEvent>& events) {
  std::string text = "step,prompt_id,filter,decision,reason\n";
  for (const auto& e : events) {
    text += std::to_string(e.step) + "," + e.prompt_id + "," + e.filter + "," + e.decision + "," + e.reason + "\n";
  }
  write_file_atomic(path, text);
}

}  // namespace reasonlab
