#include "reasonlab/task.hpp"

#include <array>
#include <cstdlib>

#include "reasonlab/error.hpp"
#include "reasonlab/rng.hpp"
#include "reasonlab/verifier.hpp"

namespace reasonlab {
namespace {

constexpr std::array<std::string_view, kDifficultyCount> kDifficultyNames = {
    "elementary", "middle", "high_school", "college", "graduate"};
constexpr std::array<std::string_view, kDomainCount> kDomainNames = {"arithmetic", "modular", "algebraic"};

int positive_mod(int v, int m) { return ((v % m) + m) % m; }

int apply(char op, int lhs, int rhs) { return op == '+' ? lhs + rhs : lhs - rhs; }

// Running values written into the completion, one per operand.
std::vector<int> running_values(const ParsedPrompt& p) {
  const int n = static_cast<int>(p.operands.size());
  std::vector<int> values(n);
  switch (p.domain) {
    case DomainTag::kArithmetic:
      values[0] = p.operands[0];
      for (int k = 1; k < n; ++k) values[k] = apply(p.operators[k], values[k - 1], p.operands[k]);
      break;
    case DomainTag::kModular:
      values[0] = positive_mod(p.operands[0], p.modulus);
      for (int k = 1; k < n; ++k) {
        values[k] = positive_mod(apply(p.operators[k], values[k - 1], p.operands[k]), p.modulus);
      }
      break;
    case DomainTag::kAlgebraic:
      values[0] = 0;
      for (int k = 1; k < n; ++k) values[k] = apply(p.operators[k], values[k - 1], p.operands[k]);
      break;
  }
  return values;
}

int final_answer(const ParsedPrompt& p, const std::vector<int>& values) {
  return p.domain == DomainTag::kAlgebraic ? p.rhs - values.back() : values.back();
}

void append_answer(TokenSequence& out, int answer, const Vocabulary& vocab) {
  if (answer < 0) out.push_back(vocab.id("-"));
  out.push_back(vocab.number(std::abs(answer)));
}

TokenSequence completion_from_values(const ParsedPrompt& p, const std::vector<int>& values, int answer,
                                     const Vocabulary& vocab) {
  TokenSequence out;
  out.push_back(vocab.number(values[0]));
  for (std::size_t k = 1; k < values.size(); ++k) {
    out.push_back(vocab.id(std::string(1, p.operators[k])));
    out.push_back(vocab.number(values[k]));
  }
  out.push_back(vocab.answer_start());
  append_answer(out, answer, vocab);
  out.push_back(vocab.eos());
  return out;
}

bool value_in_range(const ParsedPrompt& p, int v) {
  if (p.domain == DomainTag::kModular) return v >= 0 && v < p.modulus;
  return v >= 0 && v <= kMaxNumberToken;
}

}  // namespace

std::string_view difficulty_name(Difficulty d) { return kDifficultyNames[static_cast<int>(d)]; }
std::string_view domain_name(DomainTag d) { return kDomainNames[static_cast<int>(d)]; }

Difficulty parse_difficulty(std::string_view name) {
  for (int i = 0; i < kDifficultyCount; ++i) {
    if (kDifficultyNames[i] == name) return static_cast<Difficulty>(i);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown difficulty '" + std::string(name) + "'");
}

DomainTag parse_domain(std::string_view name) {
  for (int i = 0; i < kDomainCount; ++i) {
    if (kDomainNames[i] == name) return static_cast<DomainTag>(i);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown domain '" + std::string(name) + "'");
}

std::pair<int, int> operand_band(Difficulty d) {
  switch (d) {
    case Difficulty::kElementary: return {2, 2};
    case Difficulty::kMiddle: return {3, 3};
    case Difficulty::kHighSchool: return {4, 5};
    case Difficulty::kCollege: return {6, 8};
    case Difficulty::kGraduate: return {9, 12};
  }
  return {2, 2};
}

TaskInstance generate_task(Difficulty difficulty, DomainTag domain, std::uint64_t seed) {
  const auto& vocab = Vocabulary::standard();
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(difficulty), static_cast<std::uint64_t>(domain)}));
  auto [lo, hi] = operand_band(difficulty);
  const int n = rng.between(lo, hi);
  const bool addition_only = difficulty == Difficulty::kElementary;

  ParsedPrompt p;
  p.domain = domain;
  p.operands.assign(n, 0);
  p.operators.assign(n, '+');
  if (domain == DomainTag::kModular) p.modulus = rng.between(2, 9);

  int running = 0;
  for (int k = 0; k < n; ++k) {
    if (k == 0 && domain == DomainTag::kAlgebraic) continue;
    const int operand = rng.between(1, 9);
    p.operands[k] = operand;
    if (k == 0) {
      running = operand;
      continue;
    }
    char op = (addition_only || rng.bernoulli(0.5)) ? '+' : '-';
    // Arithmetic and algebraic running values stay within the number tokens.
    if (domain != DomainTag::kModular) {
      if (op == '-' && running - operand < 0) op = '+';
      if (op == '+' && running + operand > kMaxNumberToken) op = '-';
    }
    p.operators[k] = op;
    running = apply(op, running, operand);
  }
  if (domain == DomainTag::kAlgebraic) {
    // x lands in [-9, 9] and the right-hand side stays a number token.
    int x = rng.between(-9, 9);
    if (running + x < 0) x = -running;
    if (running + x > kMaxNumberToken) x = kMaxNumberToken - running;
    p.rhs = running + x;
  }

  TaskInstance task;
  task.difficulty = difficulty;
  task.domain_tag = domain;
  task.seed = seed;
  task.id = std::string(domain_name(domain)) + "-" + std::string(difficulty_name(difficulty)) + "-" +
            std::to_string(seed);

  task.prompt.assign(kPromptLength, vocab.filler());
  task.prompt[0] = domain == DomainTag::kAlgebraic ? vocab.id("x") : vocab.number(p.operands[0]);
  for (int k = 1; k < n; ++k) {
    task.prompt[2 * k - 1] = vocab.id(std::string(1, p.operators[k]));
    task.prompt[2 * k] = vocab.number(p.operands[k]);
  }
  auto tail = task.prompt.begin() + kExpressionSlots;
  switch (domain) {
    case DomainTag::kArithmetic:
      tail[3] = vocab.id("=");
      tail[4] = vocab.id("?");
      break;
    case DomainTag::kModular:
      tail[1] = vocab.id("%");
      tail[2] = vocab.number(p.modulus);
      tail[3] = vocab.id("=");
      tail[4] = vocab.id("?");
      break;
    case DomainTag::kAlgebraic:
      tail[2] = vocab.id("=");
      tail[3] = vocab.number(p.rhs);
      tail[4] = vocab.id("?");
      break;
  }
  task.ground_truth = std::to_string(final_answer(p, running_values(p)));
  return task;
}

ParsedPrompt parse_prompt(const TokenSequence& prompt, const Vocabulary& vocab) {
  auto fail = [](const std::string& why) { return Error(ErrorKind::kInvalidArgument, "malformed prompt: " + why); };
  if (prompt.size() != static_cast<std::size_t>(kPromptLength)) throw fail("wrong length");
  const auto tail = std::span(prompt).subspan(kExpressionSlots);
  ParsedPrompt p;
  if (vocab.symbol(tail[1]) == "%") {
    p.domain = DomainTag::kModular;
    p.modulus = vocab.number_value(tail[2]);
    if (p.modulus < 2) throw fail("bad modulus");
  } else if (vocab.symbol(tail[2]) == "=") {
    p.domain = DomainTag::kAlgebraic;
    p.rhs = vocab.number_value(tail[3]);
    if (p.rhs < 0) throw fail("bad right-hand side");
  } else if (vocab.symbol(tail[3]) == "=") {
    p.domain = DomainTag::kArithmetic;
  } else {
    throw fail("unknown tail");
  }

  if (p.domain == DomainTag::kAlgebraic) {
    if (vocab.symbol(prompt[0]) != "x") throw fail("missing unknown");
    p.operands.push_back(0);
  } else {
    const int v = vocab.number_value(prompt[0]);
    if (v < 0) throw fail("missing first operand");
    p.operands.push_back(v);
  }
  p.operators.push_back('+');
  for (int k = 1; k < kMaxOperands; ++k) {
    if (prompt[2 * k - 1] == vocab.filler()) break;
    const auto& op = vocab.symbol(prompt[2 * k - 1]);
    const int v = vocab.number_value(prompt[2 * k]);
    if ((op != "+" && op != "-") || v < 0) throw fail("bad operand slot");
    p.operators.push_back(op[0]);
    p.operands.push_back(v);
  }
  if (p.operands.size() < 2) throw fail("fewer than two operands");
  return p;
}

std::string render_prompt(const TaskInstance& task, const Vocabulary& vocab) {
  const auto p = parse_prompt(task.prompt, vocab);
  std::string expr = p.domain == DomainTag::kAlgebraic ? "x" : std::to_string(p.operands[0]);
  for (std::size_t k = 1; k < p.operands.size(); ++k) {
    expr += p.operators[k];
    expr += std::to_string(p.operands[k]);
  }
  switch (p.domain) {
    case DomainTag::kArithmetic: return expr + "=?";
    case DomainTag::kModular: return "(" + expr + ")%" + std::to_string(p.modulus) + "=?";
    case DomainTag::kAlgebraic: return expr + "=" + std::to_string(p.rhs);
  }
  return expr;
}

TokenSequence reference_completion(const TaskInstance& task, const Vocabulary& vocab) {
  const auto p = parse_prompt(task.prompt, vocab);
  const auto values = running_values(p);
  return completion_from_values(p, values, final_answer(p, values), vocab);
}

TeacherTrace teacher_rollout(const TaskInstance& task, double error_rate, std::uint64_t seed) {
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "error_rate must lie in [0, 1]");
  }
  const auto& vocab = Vocabulary::standard();
  const auto p = parse_prompt(task.prompt, vocab);
  auto values = running_values(p);
  int answer = final_answer(p, values);

  Rng rng(derive_seed(seed, {std::hash<std::string>{}(task.id)}));
  const bool make_error = rng.uniform() < error_rate;
  if (make_error) {
    const int n = static_cast<int>(values.size());
    constexpr std::array<int, 6> kDeltas = {-3, -2, -1, 1, 2, 3};
    bool slipped = false;
    for (int attempt = 0; attempt < 32 && !slipped; ++attempt) {
      // Step 0 of an algebraic trace is the literal 0 and is never mistyped.
      const int first = p.domain == DomainTag::kAlgebraic ? 1 : 0;
      const int k = rng.between(first, n - 1);
      const int delta = kDeltas[rng.below(kDeltas.size())];
      auto trial = values;
      trial[k] = values[k] + delta;
      if (p.domain == DomainTag::kModular) trial[k] = positive_mod(trial[k], p.modulus);
      if (trial[k] == values[k] || !value_in_range(p, trial[k])) continue;
      bool ok = true;
      for (int j = k + 1; j < n && ok; ++j) {
        trial[j] = apply(p.operators[j], trial[j - 1], p.operands[j]);
        if (p.domain == DomainTag::kModular) trial[j] = positive_mod(trial[j], p.modulus);
        ok = value_in_range(p, trial[j]);
      }
      const int wrong = final_answer(p, trial);
      if (!ok || wrong == answer) continue;
      values = std::move(trial);
      answer = wrong;
      slipped = true;
    }
    if (!slipped) {
      // Only the stated answer is off.
      answer += (answer > 0 ? -1 : 1);
    }
  }

  TeacherTrace trace;
  trace.task_id = task.id;
  trace.tokens = completion_from_values(p, values, answer, vocab);
  trace.length = trace.tokens.size();
  trace.stated_answer = extract_final_answer(trace.tokens, vocab).value_or("");
  trace.is_correct = verify(trace.stated_answer, task.ground_truth);
  return trace;
}

bool has_repeated_block(std::span<const TokenId> tokens, std::size_t window, std::size_t count) {
  if (window == 0 || count == 0) return false;
  const std::size_t span = window * count;
  if (tokens.size() < span) return false;
  for (std::size_t start = 0; start + span <= tokens.size(); ++start) {
    bool repeated = true;
    for (std::size_t i = window; i < span && repeated; ++i) {
      repeated = tokens[start + i] == tokens[start + i - window];
    }
    if (repeated) return true;
  }
  return false;
}

AnnotationRecord annotate(const TaskInstance& task, const std::vector<TeacherTrace>& traces) {
  if (traces.empty()) throw Error(ErrorKind::kEmptyTraceList, "annotate needs at least one trace for " + task.id);
  AnnotationRecord record;
  record.difficulty = task.difficulty;
  record.domain_tag = task.domain_tag;
  for (const auto& t : traces) {
    if (has_repeated_block(t.tokens)) {
      record.repetitive_pattern = true;
      break;
    }
  }
  return record;
}

}  // namespace reasonlab
