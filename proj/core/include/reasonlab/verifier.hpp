#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

#include "reasonlab/vocabulary.hpp"

namespace reasonlab {

using BigInt = boost::multiprecision::cpp_int;

enum class AnswerKind { kInteger, kRational, kDecimal };

// An exact numeric answer. numerator/denominator are always in lowest terms
// with a positive denominator; `written` keeps a decimal's digits verbatim.
struct AnswerValue {
  AnswerKind kind = AnswerKind::kInteger;
  BigInt numerator = 0;
  BigInt denominator = 1;
  std::string written;

  bool negative() const { return numerator < 0; }
  // "n" or "n/d" in lowest terms; zero is "0".
  std::string canonical() const;
  bool same_value(const AnswerValue& other) const {
    return numerator == other.numerator && denominator == other.denominator;
  }
};

enum class VerifyStage { kPrimary, kFallback };

std::string_view verify_stage_name(VerifyStage stage);

// Strict grammar: -?D+ | -?D+/D+ | -?D+.D+ with a nonzero denominator.
std::optional<AnswerValue> parse_answer(std::string_view text);
// Re-verification parse: drops whitespace, resolves redundant signs
// ("+5", "--5", "3/-4") and bare decimal points (".5", "5.") before parsing strictly.
std::optional<AnswerValue> parse_answer_lenient(std::string_view text);

// Canonical string of any parseable answer, or nullopt.
std::optional<std::string> canonical_answer(std::string_view text);

// Span of answer-grammar tokens after the last answer-start marker.
// nullopt is the NoAnswer value.
std::optional<std::string> extract_final_answer(std::span<const TokenId> tokens,
                                                const Vocabulary& vocab = Vocabulary::standard());

struct VerifyOutcome {
  bool equivalent = false;
  VerifyStage decided_by = VerifyStage::kPrimary;
};

// Two-stage check. Throws kMalformedTruth when the truth does not parse.
VerifyOutcome verify_detailed(std::string_view candidate, std::string_view truth);
bool verify(std::string_view candidate, std::string_view truth);

struct RewardRecord {
  std::string rollout_id;
  int reward = -1;  // exactly +1 or -1
  VerifyStage verified_by = VerifyStage::kPrimary;
};

// +1 iff the extracted final answer verifies against the truth.
RewardRecord reward(std::span<const TokenId> tokens, std::string_view truth,
                    std::string rollout_id = {}, const Vocabulary& vocab = Vocabulary::standard());

}  // namespace reasonlab
