#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reasonlab/vocabulary.hpp"

namespace reasonlab {

enum class Difficulty { kElementary = 0, kMiddle, kHighSchool, kCollege, kGraduate };
enum class DomainTag { kArithmetic = 0, kModular, kAlgebraic };

inline constexpr int kDifficultyCount = 5;
inline constexpr int kDomainCount = 3;

std::string_view difficulty_name(Difficulty d);
std::string_view domain_name(DomainTag d);
// Throw kInvalidArgument on unknown names.
Difficulty parse_difficulty(std::string_view name);
DomainTag parse_domain(std::string_view name);

// Prompt layout. Every prompt has the same length: operand slots first
// (operand k at slot 2k, its operator at slot 2k-1), filler up to the tail,
// then a five-token tail carrying "= ?", the modulus or the right-hand side.
// Completion token j therefore always lines up with prompt slot j.
inline constexpr int kMaxOperands = 12;
inline constexpr int kExpressionSlots = 2 * kMaxOperands - 1;
inline constexpr int kTailSlots = 5;
inline constexpr int kPromptLength = kExpressionSlots + kTailSlots;
// Longest teacher completion: 2n value/operator tokens, <ans>, sign, value, <eos>.
inline constexpr int kMaxCompletionLength = 2 * kMaxOperands + 3;

// Inclusive operand-count band for a difficulty level.
std::pair<int, int> operand_band(Difficulty d);

struct TaskInstance {
  std::string id;
  TokenSequence prompt;
  std::string ground_truth;
  Difficulty difficulty = Difficulty::kElementary;
  DomainTag domain_tag = DomainTag::kArithmetic;
  std::uint64_t seed = 0;
};

// Structured view of a prompt, recovered from its tokens.
struct ParsedPrompt {
  DomainTag domain = DomainTag::kArithmetic;
  std::vector<int> operands;     // operands[0] unused for algebraic (the unknown)
  std::vector<char> operators;   // operators[k] joins operand k-1 and k; [0] unused
  int modulus = 0;               // modular only
  int rhs = 0;                   // algebraic only
};

TaskInstance generate_task(Difficulty difficulty, DomainTag domain, std::uint64_t seed);
// Throws kInvalidArgument if the tokens are not a well-formed prompt.
ParsedPrompt parse_prompt(const TokenSequence& prompt, const Vocabulary& vocab = Vocabulary::standard());
// Conventional infix text, e.g. "3+4=?", "(5+6-2)%7=?", "x+3-1=9".
std::string render_prompt(const TaskInstance& task, const Vocabulary& vocab = Vocabulary::standard());

struct TeacherTrace {
  std::string task_id;
  TokenSequence tokens;  // completion only; ends with <eos>
  std::string stated_answer;
  bool is_correct = false;
  std::size_t length = 0;
};

// The error-free step-by-step completion for a task.
TokenSequence reference_completion(const TaskInstance& task, const Vocabulary& vocab = Vocabulary::standard());

// Scripted teacher: correct with probability 1 - error_rate, otherwise one
// intermediate value slips and the error propagates to the final answer.
TeacherTrace teacher_rollout(const TaskInstance& task, double error_rate, std::uint64_t seed);

struct AnnotationRecord {
  Difficulty difficulty = Difficulty::kElementary;
  DomainTag domain_tag = DomainTag::kArithmetic;
  bool repetitive_pattern = false;
};

inline constexpr std::size_t kRepetitionWindow = 8;
inline constexpr std::size_t kRepetitionCount = 4;

// True iff some window-length block occurs `count` times back to back.
bool has_repeated_block(std::span<const TokenId> tokens, std::size_t window = kRepetitionWindow,
                        std::size_t count = kRepetitionCount);

// Throws kEmptyTraceList.
AnnotationRecord annotate(const TaskInstance& task, const std::vector<TeacherTrace>& traces);

}  // namespace reasonlab
