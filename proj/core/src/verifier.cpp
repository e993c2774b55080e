#include "reasonlab/verifier.hpp"

#include <cctype>

#include "reasonlab/error.hpp"

namespace reasonlab {
namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

BigInt to_bigint(std::string_view digits) {
  BigInt v = 0;
  for (char c : digits) v = v * 10 + (c - '0');
  return v;
}

void reduce(AnswerValue& v) {
  if (v.numerator == 0) {
    v.denominator = 1;
    return;
  }
  BigInt g = boost::multiprecision::gcd(v.numerator, v.denominator);
  if (g < 0) g = -g;
  v.numerator /= g;
  v.denominator /= g;
  if (v.denominator < 0) {
    v.numerator = -v.numerator;
    v.denominator = -v.denominator;
  }
}

bool is_answer_token(const std::string& symbol) {
  if (symbol == "-" || symbol == "/" || symbol == ".") return true;
  return all_digits(symbol);
}

}  // namespace

std::string_view verify_stage_name(VerifyStage stage) {
  return stage == VerifyStage::kPrimary ? "primary" : "fallback";
}

std::string AnswerValue::canonical() const {
  if (denominator == 1) return numerator.str();
  return numerator.str() + "/" + denominator.str();
}

std::optional<AnswerValue> parse_answer(std::string_view text) {
  bool negative = false;
  if (!text.empty() && text.front() == '-') {
    negative = true;
    text.remove_prefix(1);
  }
  AnswerValue v;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    auto num = text.substr(0, slash);
    auto den = text.substr(slash + 1);
    if (!all_digits(num) || !all_digits(den)) return std::nullopt;
    v.kind = AnswerKind::kRational;
    v.numerator = to_bigint(num);
    v.denominator = to_bigint(den);
    if (v.denominator == 0) return std::nullopt;
  } else if (auto dot = text.find('.'); dot != std::string_view::npos) {
    auto whole = text.substr(0, dot);
    auto frac = text.substr(dot + 1);
    if (!all_digits(whole) || !all_digits(frac)) return std::nullopt;
    v.kind = AnswerKind::kDecimal;
    v.written = std::string(negative ? "-" : "") + std::string(text);
    v.numerator = to_bigint(whole) * pow(BigInt(10), static_cast<unsigned>(frac.size())) + to_bigint(frac);
    v.denominator = pow(BigInt(10), static_cast<unsigned>(frac.size()));
  } else {
    if (!all_digits(text)) return std::nullopt;
    v.kind = AnswerKind::kInteger;
    v.numerator = to_bigint(text);
  }
  if (negative) v.numerator = -v.numerator;
  reduce(v);
  return v;
}

std::optional<AnswerValue> parse_answer_lenient(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  // Collapse a run of leading signs into one.
  bool negative = false;
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    if (s[i] == '-') negative = !negative;
    ++i;
  }
  std::string body = s.substr(i);
  if (auto slash = body.find('/'); slash != std::string::npos) {
    std::string den = body.substr(slash + 1);
    std::size_t j = 0;
    while (j < den.size() && (den[j] == '+' || den[j] == '-')) {
      if (den[j] == '-') negative = !negative;
      ++j;
    }
    body = body.substr(0, slash) + "/" + den.substr(j);
  } else if (auto dot = body.find('.'); dot != std::string::npos) {
    if (dot == 0) body.insert(0, "0");
    if (body.back() == '.') body.push_back('0');
  }
  return parse_answer((negative ? "-" : "") + body);
}

std::optional<std::string> canonical_answer(std::string_view text) {
  auto v = parse_answer(text);
  if (!v) v = parse_answer_lenient(text);
  if (!v) return std::nullopt;
  return v->canonical();
}

std::optional<std::string> extract_final_answer(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::size_t last = tokens.size();
  for (std::size_t i = tokens.size(); i-- > 0;) {
    if (tokens[i] == vocab.answer_start()) {
      last = i;
      break;
    }
  }
  if (last == tokens.size()) return std::nullopt;
  std::string span;
  for (std::size_t i = last + 1; i < tokens.size(); ++i) {
    if (!vocab.valid(tokens[i])) break;
    const auto& sym = vocab.symbol(tokens[i]);
    if (!is_answer_token(sym)) break;
    span += sym;
  }
  if (span.empty()) return std::nullopt;
  return span;
}

VerifyOutcome verify_detailed(std::string_view candidate, std::string_view truth) {
  auto truth_value = parse_answer(truth);
  if (!truth_value) truth_value = parse_answer_lenient(truth);
  if (!truth_value) throw Error(ErrorKind::kMalformedTruth, "ground truth '" + std::string(truth) + "' does not parse");

  if (auto primary = parse_answer(candidate); primary && primary->same_value(*truth_value)) {
    return {true, VerifyStage::kPrimary};
  }
  // Anything the strict stage rejects is re-checked once before the final verdict.
  auto fallback = parse_answer_lenient(candidate);
  return {fallback && fallback->same_value(*truth_value), VerifyStage::kFallback};
}

bool verify(std::string_view candidate, std::string_view truth) {
  return verify_detailed(candidate, truth).equivalent;
}

RewardRecord reward(std::span<const TokenId> tokens, std::string_view truth, std::string rollout_id,
                    const Vocabulary& vocab) {
  RewardRecord record;
  record.rollout_id = std::move(rollout_id);
  auto answer = extract_final_answer(tokens, vocab);
  if (!answer) {
    // Still validates the truth so MalformedTruth is never masked by NoAnswer.
    verify_detailed("", truth);
    record.reward = -1;
    record.verified_by = VerifyStage::kPrimary;
    return record;
  }
  auto outcome = verify_detailed(*answer, truth);
  record.reward = outcome.equivalent ? 1 : -1;
  record.verified_by = outcome.decided_by;
  return record;
}

}  // namespace reasonlab
