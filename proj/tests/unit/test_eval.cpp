#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "reasonlab/checkpoint.hpp"
#include "reasonlab/error.hpp"
#include "reasonlab/eval.hpp"

namespace rl = reasonlab;
namespace fs = std::filesystem;

namespace {

rl::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const rl::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return rl::ErrorKind::kIo;
}

rl::Rollout answered(const std::optional<std::string>& answer, int reward) {
  rl::Rollout r;
  r.answer = answer;
  r.reward = reward;
  return r;
}

// Policy that emits <ans>, digits and <eos> with fixed probabilities.
rl::PolicyParameters guesser() {
  const auto& v = rl::Vocabulary::standard();
  std::vector<rl::TokenId> ids = {v.answer_start(), v.eos()};
  std::vector<double> probs = {0.3, 0.2};
  for (int d = 0; d < 9; ++d) {
    ids.push_back(v.number(d));
    probs.push_back(0.05);
  }
  return fixture::bias_policy(fixture::bias_for(ids, probs));
}

std::vector<rl::TaskInstance> easy_tasks(std::size_t n) {
  std::vector<rl::TaskInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(rl::generate_task(rl::Difficulty::kElementary, rl::DomainTag::kModular, 40 + i));
  }
  return out;
}

}  // namespace

TEST(Eval, PassAtOneCountsSolvedTasks) {
  rl::SamplePool pool;
  for (int r : {1, -1, 1, 1}) {
    pool.task_ids.push_back("t");
    pool.samples.push_back({answered("1", r)});
  }
  EXPECT_DOUBLE_EQ(rl::pass_at_k(pool, 1), 0.75);
  EXPECT_EQ(kind_of([&] { rl::pass_at_k(pool, 2); }), rl::ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([&] { rl::pass_at_k(rl::SamplePool{}, 1); }), rl::ErrorKind::kEmptyTaskSet);
}

TEST(Eval, TaskPassesWithinFirstK) {
  const std::vector<rl::Rollout> s = {answered("1", -1), answered("2", -1), answered("3", 1)};
  EXPECT_FALSE(rl::task_passes(s, 1));
  EXPECT_FALSE(rl::task_passes(s, 2));
  EXPECT_TRUE(rl::task_passes(s, 3));
}

TEST(Eval, ConsensusMajorityAndTies) {
  const std::vector<rl::Rollout> majority = {answered("3", 1), answered("4", -1), answered("6/2", 1)};
  EXPECT_TRUE(rl::task_consensus_correct(majority, 3, "3"));
  const std::vector<rl::Rollout> wrong = {answered("4", -1), answered("3", 1), answered("4.0", -1)};
  EXPECT_FALSE(rl::task_consensus_correct(wrong, 3, "3"));
  // Tie: the earliest class wins.
  const std::vector<rl::Rollout> tie = {answered("3", 1), answered("5", -1)};
  EXPECT_TRUE(rl::task_consensus_correct(tie, 2, "3"));
  const std::vector<rl::Rollout> tie2 = {answered("5", -1), answered("3", 1)};
  EXPECT_FALSE(rl::task_consensus_correct(tie2, 2, "3"));
}

TEST(Eval, NoAnswerFormsOneLosingClass) {
  const std::vector<rl::Rollout> s = {answered(std::nullopt, -1), answered("..", -1), answered("3", 1),
                                      answered(std::nullopt, -1)};
  EXPECT_FALSE(rl::task_consensus_correct(s, 4, "3"));
  EXPECT_FALSE(rl::task_consensus_correct(s, 3, "3"));
  const std::vector<rl::Rollout> t = {answered(std::nullopt, -1), answered("3", 1), answered("3", 1)};
  EXPECT_TRUE(rl::task_consensus_correct(t, 3, "3"));
}

TEST(Eval, PoolMetricsMonotoneAndConsistent) {
  const auto p = guesser();
  const auto tasks = easy_tasks(30);
  const auto pool = rl::sample_pool(p, tasks, 32, 1.0, 1.0, 8, 5);
  ASSERT_EQ(pool.samples.size(), tasks.size());
  const std::vector<std::size_t> ks = {1, 2, 4, 8, 16, 32};
  const auto curve = rl::pass_at_k_curve(pool, ks);
  ASSERT_EQ(curve.size(), ks.size());
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_GE(curve[i].y, curve[i - 1].y);
  EXPECT_GT(curve.back().y, 0.0);
  EXPECT_DOUBLE_EQ(rl::pass_at_k(pool, 1), rl::consensus_at_k(pool, tasks, 1));

  // Smaller pools are prefixes of larger ones.
  const auto small = rl::sample_pool(p, tasks, 4, 1.0, 1.0, 8, 5);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(small.samples[t][i].tokens, pool.samples[t][i].tokens);
  }
  // Rewards agree with the verifier.
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (const auto& r : pool.samples[t]) {
      EXPECT_EQ(r.reward, rl::reward(r.completion(), tasks[t].ground_truth).reward);
    }
  }
}

TEST(Eval, ParamsOverloadsAndErrors) {
  const auto p = guesser();
  const auto tasks = easy_tasks(10);
  rl::EvalConfig c;
  c.k = 4;
  c.temperature = 1.0;
  c.seed = 3;
  const double a = rl::pass_at_k(p, tasks, c);
  EXPECT_EQ(a, rl::pass_at_k(p, tasks, c));
  EXPECT_EQ(a, rl::pass_at_k(rl::sample_pool(p, tasks, 4, 1.0, c.top_p, c.max_len, 3), 4));
  EXPECT_EQ(kind_of([&] { rl::pass_at_k(p, std::vector<rl::TaskInstance>{}, c); }), rl::ErrorKind::kEmptyTaskSet);
  EXPECT_EQ(kind_of([&] { rl::consensus_at_k(p, std::vector<rl::TaskInstance>{}, c); }),
            rl::ErrorKind::kEmptyTaskSet);
  c.k = 0;
  EXPECT_THROW(rl::pass_at_k(p, tasks, c), rl::Error);
}

TEST(Eval, SuiteReportAndFiles) {
  const auto p = guesser();
  rl::EvalConfig c;
  c.runs = 2;
  c.seed = 9;
  const rl::Suites suites = {{"easy", easy_tasks(6)}};
  const auto rows = rl::evaluate_suite(p, "base", suites, c);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].runs, 2u);
  ASSERT_EQ(rows[0].seeds.size(), 2u);
  EXPECT_NE(rows[0].seeds[0], rows[0].seeds[1]);
  EXPECT_DOUBLE_EQ(rows[0].value, (rows[0].per_run[0] + rows[0].per_run[1]) / 2);
  EXPECT_EQ(kind_of([&] { rl::evaluate_suite(p, "base", rl::Suites{}, c); }), rl::ErrorKind::kEmptySuite);
  EXPECT_EQ(kind_of([&] { rl::evaluate_suite(p, "base", rl::Suites{{"none", {}}}, c); }),
            rl::ErrorKind::kEmptySuite);

  const auto dir = fs::temp_directory_path() / "reasonlab_unit_eval";
  fs::create_directories(dir);
  rl::write_report_csv(dir / "report.csv", rows);
  rl::write_report_csv(dir / "report.csv", rows, true);
  std::ifstream in(dir / "report.csv");
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "checkpoint,suite,metric,value,runs,seeds");
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(line.rfind("base,easy,pass@1,", 0), 0u);
    EXPECT_NE(line.find(';'), std::string::npos);
  }
  EXPECT_EQ(lines, 2);

  const std::vector<rl::CurvePoint> pts = {{1, 0.25}, {2, 0.5}};
  rl::write_curve(dir / "curve.csv", "k", "pass_at_k", pts);
  EXPECT_EQ(rl::read_file(dir / "curve.csv"), "k,pass_at_k\n1,0.25\n2,0.5\n");
  fs::remove_all(dir);
}

TEST(Eval, SuiteCyclesCells) {
  const auto suite = rl::make_suite(30, 1000);
  ASSERT_EQ(suite.size(), 30u);
  int cells[5][3] = {};
  for (const auto& t : suite) ++cells[static_cast<int>(t.difficulty)][static_cast<int>(t.domain_tag)];
  for (auto& row : cells) {
    for (int c : row) EXPECT_EQ(c, 2);
  }
}
