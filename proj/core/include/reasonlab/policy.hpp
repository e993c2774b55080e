#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "reasonlab/parameters.hpp"
#include "reasonlab/vocabulary.hpp"

namespace reasonlab {

inline constexpr std::size_t kMaxParameterCount = 1'000'000;

// Dimensions of the decoder-only transformer: token + learned position
// embeddings, `n_layers` pre-norm blocks (causal multi-head attention, GELU
// MLP), final layer norm and an output projection.
struct PolicyShape {
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int n_layers = 2;
  int max_positions = 64;

  bool operator==(const PolicyShape&) const = default;
};

// One policy (current, old or reference). Matrices are stored input-major:
// a weight named "*.weight" with shape {in, out} maps an `in` vector to `out`.
class PolicyParameters {
 public:
  // All arrays zero. Throws kInvalidArgument if the shape is inconsistent or
  // exceeds kMaxParameterCount.
  PolicyParameters(Vocabulary vocab, PolicyShape shape);

  // Random initialization (layer-norm gains 1, biases 0).
  static PolicyParameters initialized(Vocabulary vocab, PolicyShape shape, std::uint64_t seed);

  const Vocabulary& vocabulary() const { return vocab_; }
  const PolicyShape& shape() const { return shape_; }
  ParameterSet& values() { return values_; }
  const ParameterSet& values() const { return values_; }

  // Training stages this checkpoint has been through, in order.
  std::vector<std::string>& stages() { return stages_; }
  const std::vector<std::string>& stages() const { return stages_; }
  bool has_stage(std::string_view stage) const;

 private:
  Vocabulary vocab_;
  PolicyShape shape_;
  ParameterSet values_;
  std::vector<std::string> stages_;
};

struct SampledSequence {
  std::size_t prompt_length = 0;
  TokenSequence tokens;          // prompt + completion
  std::vector<double> logprobs;  // one per completion token, pre-truncation
  bool terminated = false;       // ended with <eos> rather than the length cap

  std::span<const TokenId> completion() const {
    return std::span<const TokenId>(tokens).subspan(prompt_length);
  }
};

// log softmax(logits / temperature) at each realized completion token.
// Throws kUnknownToken, kNonPositiveTemperature, kInvalidArgument.
std::vector<double> forward_logprobs(const PolicyParameters& params, std::span<const TokenId> tokens,
                                     std::size_t prompt_length, double temperature);

// Full next-token distribution after `prefix`.
std::vector<double> next_token_distribution(const PolicyParameters& params, std::span<const TokenId> prefix,
                                            double temperature);

// Smallest probability-sorted prefix with mass >= top_p (the crossing token
// included), renormalized; other entries zero. Ties keep the lower token id first.
std::vector<double> top_p_filter(std::span<const double> probs, double top_p);

// Ancestral sampling with temperature and nucleus truncation.
// Throws kInvalidTopP, kNonPositiveTemperature, kInvalidArgument.
SampledSequence sample(const PolicyParameters& params, std::span<const TokenId> prompt, double temperature,
                       double top_p, std::size_t max_len, std::uint64_t seed);

// One sample per seed; the prompt prefix is encoded once and shared.
std::vector<SampledSequence> sample_many(const PolicyParameters& params, std::span<const TokenId> prompt,
                                         double temperature, double top_p, std::size_t max_len,
                                         std::span<const std::uint64_t> seeds);

// Differentiable forward pass over a (possibly packed) sequence. Documents
// start at `segment_starts`; attention and positions never cross a start.
// Log-probabilities are produced for `targets`, the indices of tokens
// predicted from their own document's prefix.
class ForwardRecord;

struct ForwardPass {
  std::shared_ptr<const ForwardRecord> record;
  std::vector<double> logprobs;  // parallel to targets
};

ForwardPass forward_pass(const PolicyParameters& params, std::span<const TokenId> tokens,
                         std::span<const std::size_t> segment_starts, std::span<const std::size_t> targets,
                         double temperature);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logprob) per target.
void backward_pass(const PolicyParameters& params, const ForwardRecord& record,
                   std::span<const double> dlogprobs, ParameterSet& grad);

}  // namespace reasonlab
