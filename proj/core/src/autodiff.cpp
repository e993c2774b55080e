#include "reasonlab/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "reasonlab/error.hpp"

namespace reasonlab {
namespace {

Tape* common_tape(Scalar a, Scalar b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw Error(ErrorKind::kInvalidArgument, "scalars from different tapes");
  }
  return a.tape();
}

Scalar unary(Scalar a, double value, double partial) {
  return Scalar(a.tape(), a.tape()->push(value, a.index(), partial));
}

}  // namespace

int Tape::push(double value, int a, double da, int b, double db) {
  nodes_.push_back(Node{value, {a, b}, {da, db}});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double> Tape::adjoints(int output) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[static_cast<std::size_t>(output)] = 1.0;
  for (int i = output; i >= 0; --i) {
    const double g = adj[static_cast<std::size_t>(i)];
    if (g == 0.0) continue;
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    for (int k = 0; k < 2; ++k) {
      if (n.parent[k] >= 0) adj[static_cast<std::size_t>(n.parent[k])] += g * n.partial[k];
    }
  }
  return adj;
}

Scalar operator+(Scalar a, Scalar b) {
  Tape* t = common_tape(a, b);
  return Scalar(t, t->push(a.value() + b.value(), a.index(), 1.0, b.index(), 1.0));
}

Scalar operator-(Scalar a, Scalar b) {
  Tape* t = common_tape(a, b);
  return Scalar(t, t->push(a.value() - b.value(), a.index(), 1.0, b.index(), -1.0));
}

Scalar operator*(Scalar a, Scalar b) {
  Tape* t = common_tape(a, b);
  return Scalar(t, t->push(a.value() * b.value(), a.index(), b.value(), b.index(), a.value()));
}

Scalar operator/(Scalar a, Scalar b) {
  Tape* t = common_tape(a, b);
  const double bv = b.value();
  return Scalar(t, t->push(a.value() / bv, a.index(), 1.0 / bv, b.index(), -a.value() / (bv * bv)));
}

Scalar operator-(Scalar a) { return unary(a, -a.value(), -1.0); }
Scalar operator+(Scalar a, double c) { return unary(a, a.value() + c, 1.0); }
Scalar operator+(double c, Scalar a) { return unary(a, c + a.value(), 1.0); }
Scalar operator-(Scalar a, double c) { return unary(a, a.value() - c, 1.0); }
Scalar operator-(double c, Scalar a) { return unary(a, c - a.value(), -1.0); }
Scalar operator*(Scalar a, double c) { return unary(a, a.value() * c, c); }
Scalar operator*(double c, Scalar a) { return unary(a, c * a.value(), c); }
Scalar operator/(Scalar a, double c) { return unary(a, a.value() / c, 1.0 / c); }

Scalar exp(Scalar a) {
  const double v = std::exp(a.value());
  return unary(a, v, v);
}

Scalar log(Scalar a) { return unary(a, std::log(a.value()), 1.0 / a.value()); }

Scalar log_sigmoid(Scalar a) {
  const double x = a.value();
  // log sigma(x) = -softplus(-x); derivative sigma(-x).
  const double value = x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  const double sig_neg = x >= 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
  return unary(a, value, sig_neg);
}

Scalar min(Scalar a, Scalar b) {
  Tape* t = common_tape(a, b);
  const bool first = a.value() <= b.value();
  return Scalar(t, t->push(std::min(a.value(), b.value()), a.index(), first ? 1.0 : 0.0, b.index(),
                           first ? 0.0 : 1.0));
}

Scalar clamp(Scalar a, double lo, double hi) {
  const double x = a.value();
  return unary(a, std::clamp(x, lo, hi), (x < lo || x > hi) ? 0.0 : 1.0);
}

Scalar sum(std::span<const Scalar> xs) {
  if (xs.empty()) throw Error(ErrorKind::kInvalidArgument, "sum of no scalars");
  Scalar acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc;
}

Scalar mean(std::span<const Scalar> xs) { return sum(xs) / static_cast<double>(xs.size()); }

GradientContext::GradientContext(const PolicyParameters& params) : params_(params) {}

Scalar GradientContext::constant(double value) { return Scalar(&tape_, tape_.push(value)); }

Scalar GradientContext::parameter(std::string_view array, std::size_t index) {
  const auto& spec = params_.values().spec(array);
  if (index >= spec.size) throw Error(ErrorKind::kInvalidArgument, "parameter index out of range");
  const std::size_t flat = spec.offset + index;
  const int node = tape_.push(params_.values().flat()[flat]);
  parameter_leaves_.emplace_back(flat, node);
  return Scalar(&tape_, node);
}

std::vector<Scalar> GradientContext::logprobs(std::span<const TokenId> tokens,
                                              std::span<const std::size_t> segment_starts,
                                              std::span<const std::size_t> targets, double temperature) {
  auto pass = forward_pass(params_, tokens, segment_starts, targets, temperature);
  Recorded r;
  r.record = std::move(pass.record);
  std::vector<Scalar> out;
  out.reserve(pass.logprobs.size());
  for (double lp : pass.logprobs) {
    const int node = tape_.push(lp);
    r.leaves.push_back(node);
    out.emplace_back(&tape_, node);
  }
  forwards_.push_back(std::move(r));
  return out;
}

std::vector<Scalar> GradientContext::completion_logprobs(std::span<const TokenId> tokens, std::size_t prompt_length,
                                                         double temperature) {
  if (prompt_length < 1 || prompt_length >= tokens.size()) {
    throw Error(ErrorKind::kInvalidArgument, "sequence has no completion tokens");
  }
  const std::size_t starts[] = {0};
  std::vector<std::size_t> targets;
  for (std::size_t t = prompt_length; t < tokens.size(); ++t) targets.push_back(t);
  return logprobs(tokens, starts, targets, temperature);
}

struct GradientAccess {
  static LossAndGradient run(const PolicyParameters& params, const LossBuilder& builder, bool want_gradient) {
    GradientContext ctx(params);
    const Scalar loss = builder(ctx);
    if (!loss.valid() || loss.tape() != &ctx.tape_) {
      throw Error(ErrorKind::kInvalidArgument, "loss builder returned a scalar from another tape");
    }
    LossAndGradient out;
    out.loss = loss.value();
    if (!std::isfinite(out.loss)) throw Error(ErrorKind::kNonFiniteLoss, "loss evaluated to a non-finite value");
    if (!want_gradient) return out;
    out.gradient = params.values().zeros_like();
    const auto adj = ctx.tape_.adjoints(loss.index());
    for (const auto& [flat, node] : ctx.parameter_leaves_) {
      out.gradient.flat()[flat] += adj[static_cast<std::size_t>(node)];
    }
    std::vector<double> dlogp;
    for (const auto& f : ctx.forwards_) {
      dlogp.resize(f.leaves.size());
      bool any = false;
      for (std::size_t i = 0; i < f.leaves.size(); ++i) {
        dlogp[i] = adj[static_cast<std::size_t>(f.leaves[i])];
        any = any || dlogp[i] != 0.0;
      }
      if (any) backward_pass(params, *f.record, dlogp, out.gradient);
    }
    if (!out.gradient.all_finite()) throw Error(ErrorKind::kNonFiniteLoss, "gradient has non-finite entries");
    return out;
  }
};

LossAndGradient gradient(const PolicyParameters& params, const LossBuilder& builder) {
  return GradientAccess::run(params, builder, true);
}

double evaluate_loss(const PolicyParameters& params, const LossBuilder& builder) {
  return GradientAccess::run(params, builder, false).loss;
}

}  // namespace reasonlab
