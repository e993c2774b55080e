#include "reasonlab/vocabulary.hpp"

#include <charconv>

#include "reasonlab/error.hpp"

namespace reasonlab {
namespace {

std::vector<std::string> standard_symbols() {
  std::vector<std::string> symbols = {"<pad>", "<eos>", "<ans>", "_", "+", "-", "*",
                                      "/",     "%",     "=",     "?", "x", "."};
  for (int i = 0; i <= kMaxNumberToken; ++i) symbols.push_back(std::to_string(i));
  return symbols;
}

int parse_number_symbol(const std::string& s) {
  if (s.empty() || s.size() > 2) return -1;
  if (s.size() == 2 && s[0] == '0') return -1;
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return -1;
  return value;
}

}  // namespace

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab(standard_symbols());
  return vocab;
}

Vocabulary::Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  number_values_.assign(symbols_.size(), -1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto& s = symbols_[i];
    if (s.empty()) throw Error(ErrorKind::kInvalidArgument, "empty vocabulary symbol");
    if (!index_.emplace(s, static_cast<TokenId>(i)).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate vocabulary symbol '" + s + "'");
    }
    number_values_[i] = parse_number_symbol(s);
  }
  auto find = [&](const char* s) {
    auto it = index_.find(s);
    return it == index_.end() ? TokenId{-1} : it->second;
  };
  pad_ = find("<pad>");
  eos_ = find("<eos>");
  answer_start_ = find("<ans>");
  filler_ = find("_");
  if (eos_ < 0 || answer_start_ < 0) {
    throw Error(ErrorKind::kInvalidArgument, "vocabulary lacks <eos> or <ans> marker");
  }
}

TokenId Vocabulary::id(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) throw Error(ErrorKind::kUnknownToken, "unknown symbol '" + std::string(symbol) + "'");
  return it->second;
}

bool Vocabulary::contains(std::string_view symbol) const {
  return index_.count(std::string(symbol)) > 0;
}

const std::string& Vocabulary::symbol(TokenId id) const {
  if (!valid(id)) throw Error(ErrorKind::kUnknownToken, "token id " + std::to_string(id) + " out of range");
  return symbols_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::number(int value) const {
  if (value < 0 || value > kMaxNumberToken) {
    throw Error(ErrorKind::kInvalidArgument, "no number token for " + std::to_string(value));
  }
  return id(std::to_string(value));
}

int Vocabulary::number_value(TokenId id) const {
  return valid(id) ? number_values_[static_cast<std::size_t>(id)] : -1;
}

std::vector<std::string> Vocabulary::to_symbols(std::span<const TokenId> tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) out.push_back(symbol(t));
  return out;
}

TokenSequence Vocabulary::from_symbols(std::span<const std::string> symbols) const {
  TokenSequence out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(id(s));
  return out;
}

std::string Vocabulary::render(std::span<const TokenId> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += symbol(tokens[i]);
  }
  return out;
}

}  // namespace reasonlab
