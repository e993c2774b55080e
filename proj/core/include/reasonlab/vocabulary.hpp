#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reasonlab {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr int kMaxNumberToken = 99;

// Ordered symbol table. The standard vocabulary holds the special markers,
// operators/delimiters and one token per integer 0..99.
class Vocabulary {
 public:
  static const Vocabulary& standard();

  // Throws kInvalidArgument on duplicate symbols or missing markers.
  explicit Vocabulary(std::vector<std::string> symbols);

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  // Throws kUnknownToken.
  TokenId id(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;
  const std::string& symbol(TokenId id) const;
  bool valid(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < symbols_.size(); }

  TokenId pad() const { return pad_; }
  TokenId eos() const { return eos_; }
  TokenId answer_start() const { return answer_start_; }
  TokenId filler() const { return filler_; }
  // Token for a non-negative integer in [0, kMaxNumberToken].
  TokenId number(int value) const;
  // Value of a number token, or -1 if the token is not a number.
  int number_value(TokenId id) const;

  std::vector<std::string> to_symbols(std::span<const TokenId> tokens) const;
  // Throws kUnknownToken.
  TokenSequence from_symbols(std::span<const std::string> symbols) const;
  // Space separated rendering, e.g. "3 + 4 = ?".
  std::string render(std::span<const TokenId> tokens) const;

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<int> number_values_;
  TokenId pad_ = -1;
  TokenId eos_ = -1;
  TokenId answer_start_ = -1;
  TokenId filler_ = -1;
};

}  // namespace reasonlab
