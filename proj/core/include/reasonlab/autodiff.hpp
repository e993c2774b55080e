#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "reasonlab/parameters.hpp"
#include "reasonlab/policy.hpp"

namespace reasonlab {

// Scalar reverse-mode tape. Losses are scalar compositions of per-token
// log-probabilities (and, rarely, raw parameter entries); the expensive
// tensor work stays inside the policy's own forward/backward kernels.
class Tape {
 public:
  struct Node {
    double value;
    int parent[2];
    double partial[2];
  };

  int push(double value, int a = -1, double da = 0.0, int b = -1, double db = 0.0);
  double value(int index) const { return nodes_[static_cast<std::size_t>(index)].value; }
  std::size_t size() const { return nodes_.size(); }
  // d(output)/d(node) for every node.
  std::vector<double> adjoints(int output) const;

 private:
  std::vector<Node> nodes_;
};

class Scalar {
 public:
  Scalar() = default;
  Scalar(Tape* tape, int index) : tape_(tape), index_(index) {}

  double value() const { return tape_->value(index_); }
  Tape* tape() const { return tape_; }
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int index_ = -1;
};

Scalar operator+(Scalar a, Scalar b);
Scalar operator-(Scalar a, Scalar b);
Scalar operator*(Scalar a, Scalar b);
Scalar operator/(Scalar a, Scalar b);
Scalar operator-(Scalar a);
Scalar operator+(Scalar a, double c);
Scalar operator+(double c, Scalar a);
Scalar operator-(Scalar a, double c);
Scalar operator-(double c, Scalar a);
Scalar operator*(Scalar a, double c);
Scalar operator*(double c, Scalar a);
Scalar operator/(Scalar a, double c);

Scalar exp(Scalar a);
Scalar log(Scalar a);
// log(sigmoid(a)), stable for large |a|.
Scalar log_sigmoid(Scalar a);
// Subgradient follows the smaller argument (the first on ties).
Scalar min(Scalar a, Scalar b);
Scalar clamp(Scalar a, double lo, double hi);
Scalar sum(std::span<const Scalar> xs);
Scalar mean(std::span<const Scalar> xs);

// Handed to a loss builder. Everything differentiable is reached through it.
class GradientContext {
 public:
  explicit GradientContext(const PolicyParameters& params);

  const PolicyParameters& params() const { return params_; }
  Tape& tape() { return tape_; }

  Scalar constant(double value);
  Scalar parameter(std::string_view array, std::size_t index);

  // Differentiable log-probabilities of `targets` (see forward_pass).
  std::vector<Scalar> logprobs(std::span<const TokenId> tokens, std::span<const std::size_t> segment_starts,
                               std::span<const std::size_t> targets, double temperature);
  // One log-probability per completion token of a single document.
  std::vector<Scalar> completion_logprobs(std::span<const TokenId> tokens, std::size_t prompt_length,
                                          double temperature);

 private:
  friend struct GradientAccess;

  struct Recorded {
    std::shared_ptr<const ForwardRecord> record;
    std::vector<int> leaves;
  };

  const PolicyParameters& params_;
  Tape tape_;
  std::vector<Recorded> forwards_;
  std::vector<std::pair<std::size_t, int>> parameter_leaves_;  // flat index, node
};

using LossBuilder = std::function<Scalar(GradientContext&)>;

struct LossAndGradient {
  double loss = 0.0;
  ParameterSet gradient;  // same named-array layout as the parameters
};

// Exact reverse-mode gradient of the built loss. Throws kNonFiniteLoss.
LossAndGradient gradient(const PolicyParameters& params, const LossBuilder& builder);
// Loss value only.
double evaluate_loss(const PolicyParameters& params, const LossBuilder& builder);

}  // namespace reasonlab
