// Command-line front end: data generation, the four training stages,
// evaluation and standalone verification.
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "reasonlab/checkpoint.hpp"
#include "reasonlab/error.hpp"
#include "reasonlab/eval.hpp"
#include "reasonlab/pipeline.hpp"
#include "reasonlab/records.hpp"
#include "reasonlab/trainer.hpp"
#include "reasonlab/verifier.hpp"

namespace fs = std::filesystem;
using namespace reasonlab;

namespace {

struct StageFlags {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string input;
  std::string out_dir;
  bool allow_out_of_order = false;
  std::optional<std::size_t> batch_size, epochs, total_steps, sequence_length, eval_interval, eval_tasks, eval_samples;
  std::optional<double> learning_rate, warmup_fraction, grad_clip;
  std::optional<std::string> optimizer;
  std::optional<double> epsilon, beta_kl, dpo_beta;
  // rl recipe
  std::optional<std::size_t> group_size, prompts_per_step, oversample_cap, probe_rounds;
  std::optional<double> cv_threshold, accuracy_threshold, t_start, t_end, anneal_fraction, top_p;
  bool dapo_baseline = false;
};

template <typename T>
void apply(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

StageConfig stage_config(Stage stage, const StageFlags& f) {
  StageConfig c;
  if (f.profile == "desk") {
    c = desk_defaults(stage);
  } else if (f.profile == "full") {
    c = full_scale_defaults(stage);
  } else {
    throw Error(ErrorKind::kInvalidArgument, "profile must be desk or full");
  }
  c.seed = f.seed;
  apply(f.batch_size, c.batch_size);
  apply(f.epochs, c.epochs);
  apply(f.total_steps, c.total_steps);
  apply(f.sequence_length, c.sequence_length);
  apply(f.eval_interval, c.eval_interval);
  apply(f.eval_tasks, c.eval_tasks);
  apply(f.eval_samples, c.eval_samples);
  apply(f.learning_rate, c.learning_rate);
  apply(f.warmup_fraction, c.warmup_fraction);
  apply(f.grad_clip, c.grad_clip);
  if (f.optimizer) c.optimizer = parse_optimizer(*f.optimizer);
  apply(f.epsilon, c.clip.epsilon);
  apply(f.beta_kl, c.clip.beta_kl);
  apply(f.dpo_beta, c.clip.dpo_beta);
  auto& r = c.recipe;
  apply(f.group_size, r.group_size);
  apply(f.prompts_per_step, r.prompts_per_step);
  apply(f.oversample_cap, r.oversample_cap);
  apply(f.probe_rounds, r.probe_rounds);
  apply(f.cv_threshold, r.cv_threshold);
  apply(f.accuracy_threshold, r.accuracy_threshold);
  apply(f.t_start, r.t_start);
  apply(f.t_end, r.t_end);
  apply(f.anneal_fraction, r.anneal_fraction);
  apply(f.top_p, r.top_p);
  r.dapo_baseline = f.dapo_baseline;
  return c;
}

void add_stage_options(CLI::App* cmd, StageFlags& f, Stage stage) {
  cmd->add_option("--seed", f.seed, "Run seed")->required();
  cmd->add_option("--data", f.data_dir, "Directory written by gen-data")->required();
  cmd->add_option("--input", f.input, "Input checkpoint")->required();
  cmd->add_option("--out", f.out_dir, "Output directory for checkpoint and metrics")->required();
  cmd->add_option("--profile", f.profile, "Default values: desk or full")->capture_default_str();
  cmd->add_flag("--allow-out-of-order", f.allow_out_of_order, "Skip the stage-order check (ablations)");
  cmd->add_option("--batch-size", f.batch_size);
  cmd->add_option("--learning-rate", f.learning_rate);
  cmd->add_option("--epochs", f.epochs);
  cmd->add_option("--total-steps", f.total_steps);
  cmd->add_option("--warmup-fraction", f.warmup_fraction);
  cmd->add_option("--sequence-length", f.sequence_length);
  cmd->add_option("--optimizer", f.optimizer, "sgd or adam");
  cmd->add_option("--grad-clip", f.grad_clip, "Global gradient norm cap, 0 disables");
  cmd->add_option("--eval-interval", f.eval_interval);
  cmd->add_option("--eval-tasks", f.eval_tasks);
  if (stage == Stage::kDpo) cmd->add_option("--dpo-beta", f.dpo_beta);
  if (stage == Stage::kRl) {
    cmd->add_option("--eval-samples", f.eval_samples, "k for cons@k during training");
    cmd->add_option("--epsilon", f.epsilon);
    cmd->add_option("--beta-kl", f.beta_kl);
    cmd->add_option("--group-size", f.group_size);
    cmd->add_option("--prompts-per-step", f.prompts_per_step);
    cmd->add_option("--oversample-cap", f.oversample_cap);
    cmd->add_option("--probe-rounds", f.probe_rounds);
    cmd->add_option("--cv-threshold", f.cv_threshold);
    cmd->add_option("--accuracy-threshold", f.accuracy_threshold);
    cmd->add_option("--t-start", f.t_start);
    cmd->add_option("--t-end", f.t_end);
    cmd->add_option("--anneal-fraction", f.anneal_fraction);
    cmd->add_option("--top-p", f.top_p);
    cmd->add_flag("--dapo-baseline", f.dapo_baseline, "Use the 0/1 accuracy filter instead of the recipe");
  }
}

int run_training(Stage stage, const StageFlags& f) {
  const StageConfig config = stage_config(stage, f);
  const DataBundle data = read_data(f.data_dir);
  const PolicyParameters input = load_checkpoint(f.input);
  StageInputs in;
  switch (stage) {
    case Stage::kMidtrain: in.examples = data.retained; break;
    case Stage::kSft: in.examples = data.sft_examples; break;
    case Stage::kDpo: in.pairs = data.pairs; break;
    case Stage::kRl: in.prompts = data.rl_prompts; break;
  }
  in.validation = data.validation;
  RunOptions options;
  options.output_dir = f.out_dir;
  options.allow_out_of_order = f.allow_out_of_order;
  options.on_step = [](const StepRecord& r) {
    if (r.eval_metric.empty() && r.step % 50 != 0) return;
    std::cerr << stage_name(r.stage) << " step " << r.step << " loss " << r.loss;
    if (!r.eval_metric.empty()) std::cerr << ' ' << r.eval_metric << ' ' << r.eval_value;
    std::cerr << '\n';
  };
  const StageResult result = run_stage(config, input, in, options);
  std::cout << stage_name(stage) << ": " << result.records.size() << " steps"
            << (result.stopped_early ? " (stopped early)" : "") << ", checkpoint "
            << (fs::path(f.out_dir) / (std::string(stage_name(stage)) + ".ckpt")).string() << '\n';
  return 0;
}

std::pair<std::string, std::string> split_named(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) return {fs::path(spec).stem().string(), spec};
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reasonlab: a desk-scale reasoning-model training lab"};
  app.set_config("--config", "", "Plain-text run file; [section] names match subcommands");
  app.require_subcommand(1);

  DataConfig data_config;
  std::string data_out;
  auto* gen = app.add_subcommand("gen-data", "Generate tasks, teacher traces, preference pairs and suites");
  gen->add_option("--seed", data_config.seed)->required();
  gen->add_option("--out", data_out)->required();
  gen->add_option("--train-tasks", data_config.train_tasks)->capture_default_str();
  gen->add_option("--rollouts-per-task", data_config.rollouts_per_task)->capture_default_str();
  gen->add_option("--error-rate", data_config.teacher_error_rate)->capture_default_str();
  gen->add_option("--rl-prompts", data_config.rl_prompts)->capture_default_str();
  gen->add_option("--validation-tasks", data_config.validation_tasks)->capture_default_str();
  gen->add_option("--heldout-tasks", data_config.heldout_tasks)->capture_default_str();
  gen->add_option("--max-pairs-per-task", data_config.max_pairs_per_task)->capture_default_str();

  std::uint64_t init_seed = 0;
  std::string init_out;
  PolicyShape shape = desk_policy_shape();
  auto* init = app.add_subcommand("init", "Write a randomly initialized base checkpoint");
  init->add_option("--seed", init_seed)->required();
  init->add_option("--out", init_out)->required();
  init->add_option("--d-model", shape.d_model)->capture_default_str();
  init->add_option("--heads", shape.n_heads)->capture_default_str();
  init->add_option("--d-ff", shape.d_ff)->capture_default_str();
  init->add_option("--layers", shape.n_layers)->capture_default_str();

  std::map<Stage, StageFlags> flags;
  std::map<Stage, CLI::App*> stage_cmds;
  for (Stage s : {Stage::kMidtrain, Stage::kSft, Stage::kDpo, Stage::kRl}) {
    auto* cmd = app.add_subcommand(std::string(stage_name(s)), "Run the " + std::string(stage_name(s)) + " stage");
    add_stage_options(cmd, flags[s], s);
    stage_cmds[s] = cmd;
  }

  std::vector<std::string> checkpoints, suites;
  std::vector<std::size_t> ks = {1, 2, 4, 8, 16, 32};
  EvalConfig eval_config;
  std::string eval_out;
  bool append = false;
  auto* ev = app.add_subcommand("eval", "pass@1 table and pass@k curves for checkpoints");
  ev->add_option("--checkpoint", checkpoints, "name=path, repeatable")->required();
  ev->add_option("--suite", suites, "name=path of a task file, repeatable")->required();
  ev->add_option("--out", eval_out)->required();
  ev->add_option("--seed", eval_config.seed)->capture_default_str();
  ev->add_option("--runs", eval_config.runs)->capture_default_str();
  ev->add_option("--temperature", eval_config.temperature)->capture_default_str();
  ev->add_option("--top-p", eval_config.top_p)->capture_default_str();
  ev->add_option("--max-len", eval_config.max_len)->capture_default_str();
  ev->add_option("--ks", ks, "k values for the pass@k curve")->delimiter(',')->capture_default_str();
  ev->add_flag("--append", append, "Append to an existing report");

  std::string verify_tasks, verify_rollouts, verify_out;
  auto* ver = app.add_subcommand("verify", "Score a rollout file against a task file");
  ver->add_option("--tasks", verify_tasks)->required();
  ver->add_option("--rollouts", verify_rollouts)->required();
  ver->add_option("--out", verify_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const DataBundle d = generate_data(data_config);
      write_data(data_out, d);
      std::cout << "tasks " << d.train_tasks.size() << ", retained " << d.retained.size() << ", rejected "
                << d.rejected.size() << ", sft " << d.sft_examples.size() << ", pairs " << d.pairs.size()
                << ", rl prompts " << d.rl_prompts.size() << '\n';
      return 0;
    }
    if (*init) {
      save_checkpoint(init_out, PolicyParameters::initialized(Vocabulary::standard(), shape, init_seed));
      return 0;
    }
    for (auto& [stage, cmd] : stage_cmds) {
      if (*cmd) return run_training(stage, flags[stage]);
    }
    if (*ev) {
      Suites suite_map;
      for (const auto& s : suites) {
        auto [name, path] = split_named(s);
        suite_map[name] = read_tasks(path);
      }
      fs::create_directories(eval_out);
      const std::size_t pool_size = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
      bool first = !append;
      for (const auto& c : checkpoints) {
        auto [name, path] = split_named(c);
        const PolicyParameters params = load_checkpoint(path);
        const auto rows = evaluate_suite(params, name, suite_map, eval_config);
        write_report_csv(fs::path(eval_out) / "report.csv", rows, !first);
        first = false;
        for (const auto& r : rows) std::cout << name << ' ' << r.suite << ' ' << r.metric << ' ' << r.value << '\n';
        if (pool_size > 0) {
          for (const auto& [suite_name, tasks] : suite_map) {
            const auto pool = sample_pool(params, tasks, pool_size, eval_config.temperature, eval_config.top_p,
                                          eval_config.max_len, eval_config.seed);
            write_curve(fs::path(eval_out) / ("pass_at_k_" + name + "_" + suite_name + ".csv"), "k", "pass_at_k",
                        pass_at_k_curve(pool, ks));
          }
        }
      }
      return 0;
    }
    if (*ver) {
      std::map<std::string, std::string> truth;
      for (const auto& t : read_tasks(verify_tasks)) truth[t.id] = t.ground_truth;
      std::vector<RewardRecord> records;
      bool malformed = false;
      for (const auto& r : read_rollouts(verify_rollouts)) {
        auto it = truth.find(r.task_id);
        try {
          if (it == truth.end()) throw Error(ErrorKind::kMalformedTruth, "no task " + r.task_id);
          records.push_back(reward(r.completion(), it->second, r.id));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kMalformedTruth) throw;
          std::cerr << e.what() << '\n';
          malformed = true;
        }
      }
      write_jsonl(verify_out, records);
      return malformed ? 1 : 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
