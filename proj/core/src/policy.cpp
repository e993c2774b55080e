#include "reasonlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reasonlab/error.hpp"
#include "reasonlab/rng.hpp"

namespace reasonlab {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <class T>
struct LayerPtrs {
  T* ln1_gain;
  T* ln1_bias;
  T* qkv_weight;
  T* qkv_bias;
  T* out_weight;
  T* out_bias;
  T* ln2_gain;
  T* ln2_bias;
  T* mlp_in_weight;
  T* mlp_in_bias;
  T* mlp_out_weight;
  T* mlp_out_bias;
};

template <class T>
struct ModelPtrs {
  T* token_embedding;
  T* position_embedding;
  std::vector<LayerPtrs<T>> layers;
  T* final_gain;
  T* final_bias;
  T* head_weight;
  T* head_bias;
};

std::string layer_name(int l, const char* leaf) { return "layer" + std::to_string(l) + "." + leaf; }

template <class T, class Set>
ModelPtrs<T> bind(Set& set, int n_layers) {
  auto at = [&](const std::string& name) { return set.array(name).data(); };
  ModelPtrs<T> m;
  m.token_embedding = at("token_embedding");
  m.position_embedding = at("position_embedding");
  for (int l = 0; l < n_layers; ++l) {
    LayerPtrs<T> p;
    p.ln1_gain = at(layer_name(l, "ln1.gain"));
    p.ln1_bias = at(layer_name(l, "ln1.bias"));
    p.qkv_weight = at(layer_name(l, "attn.qkv.weight"));
    p.qkv_bias = at(layer_name(l, "attn.qkv.bias"));
    p.out_weight = at(layer_name(l, "attn.out.weight"));
    p.out_bias = at(layer_name(l, "attn.out.bias"));
    p.ln2_gain = at(layer_name(l, "ln2.gain"));
    p.ln2_bias = at(layer_name(l, "ln2.bias"));
    p.mlp_in_weight = at(layer_name(l, "mlp.in.weight"));
    p.mlp_in_bias = at(layer_name(l, "mlp.in.bias"));
    p.mlp_out_weight = at(layer_name(l, "mlp.out.weight"));
    p.mlp_out_bias = at(layer_name(l, "mlp.out.bias"));
    m.layers.push_back(p);
  }
  m.final_gain = at("final_ln.gain");
  m.final_bias = at("final_ln.bias");
  m.head_weight = at("output.weight");
  m.head_bias = at("output.bias");
  return m;
}

// y = b + x W, W stored {in, out}.
void affine(const double* x, int in, const double* w, const double* b, int out, double* y) {
  for (int o = 0; o < out; ++o) y[o] = b[o];
  for (int i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* row = w + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) y[o] += xi * row[o];
  }
}

// dx += W dy, dW += x^T dy, db += dy.
void affine_backward(const double* x, int in, const double* w, int out, const double* dy, double* dx,
                     double* dw, double* db) {
  for (int o = 0; o < out; ++o) db[o] += dy[o];
  for (int i = 0; i < in; ++i) {
    const double* row = w + static_cast<std::size_t>(i) * out;
    double* drow = dw + static_cast<std::size_t>(i) * out;
    const double xi = x[i];
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (int o = 0; o < out; ++o) s += row[o] * dy[o];
    if (dx) dx[i] += s;
    for (int o = 0; o < out; ++o) drow[o] += xi * dy[o];
  }
}

void layer_norm(const double* x, int n, const double* gain, const double* bias, double* xhat, double* rstd,
                double* y) {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= n;
  const double r = 1.0 / std::sqrt(var + kLayerNormEps);
  *rstd = r;
  for (int i = 0; i < n; ++i) {
    xhat[i] = (x[i] - mean) * r;
    y[i] = xhat[i] * gain[i] + bias[i];
  }
}

// dx += LN'(dy); gain/bias gradients accumulated.
void layer_norm_backward(const double* xhat, double rstd, int n, const double* gain, const double* dy, double* dx,
                         double* dgain, double* dbias) {
  double mean_dxhat = 0.0;
  double mean_dxhat_xhat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dxhat = dy[i] * gain[i];
    dgain[i] += dy[i] * xhat[i];
    dbias[i] += dy[i];
    mean_dxhat += dxhat;
    mean_dxhat_xhat += dxhat * xhat[i];
  }
  mean_dxhat /= n;
  mean_dxhat_xhat /= n;
  for (int i = 0; i < n; ++i) {
    const double dxhat = dy[i] * gain[i];
    dx[i] += rstd * (dxhat - mean_dxhat - xhat[i] * mean_dxhat_xhat);
  }
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }

double gelu_grad(double u) {
  const double th = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

// Returns log-sum-exp of logits/temperature; fills probs if given.
double log_normalizer(const double* logits, int n, double temperature, double* probs) {
  double m = -INFINITY;
  for (int i = 0; i < n; ++i) m = std::max(m, logits[i] / temperature);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(logits[i] / temperature - m);
  const double lse = m + std::log(sum);
  if (probs) {
    for (int i = 0; i < n; ++i) probs[i] = std::exp(logits[i] / temperature - lse);
  }
  return lse;
}

double token_logprob(const double* logits, TokenId token, double lse, double temperature) {
  return logits[token] / temperature - lse;
}

struct Dims {
  int V, D, H, Dh, F, L, P;
  explicit Dims(const PolicyParameters& p)
      : V(static_cast<int>(p.vocabulary().size())),
        D(p.shape().d_model),
        H(p.shape().n_heads),
        Dh(p.shape().d_model / p.shape().n_heads),
        F(p.shape().d_ff),
        L(p.shape().n_layers),
        P(p.shape().max_positions) {}
};

// Where one position's activations go. Training points these into the
// ForwardRecord; sampling points them at reusable scratch buffers.
struct LayerSlots {
  double* x_in;
  double* xhat1;
  double* rstd1;
  double* a1;
  double* qkv;    // row of this position inside the layer's qkv cache
  double* probs;  // H x (t - start + 1)
  double* attn;
  double* x_mid;
  double* xhat2;
  double* rstd2;
  double* a2;
  double* u;
  double* g;
};

// One position through all blocks. `qkv_cache[l]` holds rows for every
// earlier position of the sequence (stride 3D). Writes the residual stream
// leaving the last block to `x_out`.
void position_step(const ModelPtrs<const double>& m, const Dims& d, TokenId token, std::size_t t,
                   std::size_t start, std::span<double* const> qkv_cache, std::span<const LayerSlots> slots,
                   double* x_out) {
  const std::size_t pos = t - start;
  const double* te = m.token_embedding + static_cast<std::size_t>(token) * d.D;
  const double* pe = m.position_embedding + pos * d.D;
  std::vector<double> x(d.D);
  for (int i = 0; i < d.D; ++i) x[i] = te[i] + pe[i];
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.Dh));
  const std::size_t span_len = t - start + 1;

  for (int l = 0; l < d.L; ++l) {
    const auto& w = m.layers[l];
    const auto& s = slots[l];
    std::copy(x.begin(), x.end(), s.x_in);
    layer_norm(x.data(), d.D, w.ln1_gain, w.ln1_bias, s.xhat1, s.rstd1, s.a1);
    affine(s.a1, d.D, w.qkv_weight, w.qkv_bias, 3 * d.D, s.qkv);

    const double* cache = qkv_cache[l];
    for (int h = 0; h < d.H; ++h) {
      const double* q = s.qkv + h * d.Dh;
      double* p = s.probs + static_cast<std::size_t>(h) * span_len;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < span_len; ++j) {
        const double* k = cache + (start + j) * 3 * d.D + d.D + h * d.Dh;
        double dot = 0.0;
        for (int e = 0; e < d.Dh; ++e) dot += q[e] * k[e];
        p[j] = dot * scale;
        mx = std::max(mx, p[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < span_len; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      for (std::size_t j = 0; j < span_len; ++j) p[j] /= sum;
      double* o = s.attn + h * d.Dh;
      for (int e = 0; e < d.Dh; ++e) o[e] = 0.0;
      for (std::size_t j = 0; j < span_len; ++j) {
        const double* v = cache + (start + j) * 3 * d.D + 2 * d.D + h * d.Dh;
        for (int e = 0; e < d.Dh; ++e) o[e] += p[j] * v[e];
      }
    }
    std::vector<double> proj(d.D);
    affine(s.attn, d.D, w.out_weight, w.out_bias, d.D, proj.data());
    for (int i = 0; i < d.D; ++i) x[i] += proj[i];
    std::copy(x.begin(), x.end(), s.x_mid);

    layer_norm(x.data(), d.D, w.ln2_gain, w.ln2_bias, s.xhat2, s.rstd2, s.a2);
    affine(s.a2, d.D, w.mlp_in_weight, w.mlp_in_bias, d.F, s.u);
    for (int f = 0; f < d.F; ++f) s.g[f] = gelu(s.u[f]);
    affine(s.g, d.F, w.mlp_out_weight, w.mlp_out_bias, d.D, proj.data());
    for (int i = 0; i < d.D; ++i) x[i] += proj[i];
  }
  std::copy(x.begin(), x.end(), x_out);
}

// Final norm and output projection for one position.
void head_step(const ModelPtrs<const double>& m, const Dims& d, const double* x, double* xhat, double* rstd,
               double* af, double* logits) {
  layer_norm(x, d.D, m.final_gain, m.final_bias, xhat, rstd, af);
  affine(af, d.D, m.head_weight, m.head_bias, d.V, logits);
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::kNonPositiveTemperature, "temperature must be positive, got " + std::to_string(temperature));
  }
}

void check_tokens(const PolicyParameters& params, std::span<const TokenId> tokens) {
  for (TokenId t : tokens) {
    if (!params.vocabulary().valid(t)) throw Error(ErrorKind::kUnknownToken, "token id " + std::to_string(t));
  }
}

// Scratch buffers for one sequence being decoded incrementally.
class DecodeState {
 public:
  DecodeState(const Dims& d, std::size_t capacity) : d_(d), capacity_(capacity) {
    cache_.assign(d.L, std::vector<double>(capacity * 3 * d.D));
    const std::size_t D = d.D;
    scratch_.resize(d.L);
    for (int l = 0; l < d.L; ++l) {
      auto& b = scratch_[l];
      b.assign(9 * D + 2 + 2 * d.F + static_cast<std::size_t>(d.H) * capacity, 0.0);
    }
    x_.resize(D);
    xhat_.resize(D);
    af_.resize(D);
    logits_.resize(d.V);
  }

  std::size_t length() const { return length_; }
  std::span<const double> logits() const { return logits_; }

  void push(const ModelPtrs<const double>& m, TokenId token) {
    if (length_ >= capacity_) throw Error(ErrorKind::kInvalidArgument, "sequence exceeds position capacity");
    std::vector<double*> caches(d_.L);
    std::vector<LayerSlots> slots(d_.L);
    const std::size_t D = d_.D;
    for (int l = 0; l < d_.L; ++l) {
      caches[l] = cache_[l].data();
      double* b = scratch_[l].data();
      auto& s = slots[l];
      s.x_in = b;
      s.xhat1 = b + D;
      s.rstd1 = b + 2 * D;
      s.a1 = b + 2 * D + 1;
      s.attn = b + 3 * D + 1;
      s.x_mid = b + 4 * D + 1;
      s.xhat2 = b + 5 * D + 1;
      s.rstd2 = b + 6 * D + 1;
      s.a2 = b + 6 * D + 2;
      s.u = b + 7 * D + 2;
      s.g = s.u + d_.F;
      s.probs = s.g + d_.F;
      s.qkv = caches[l] + length_ * 3 * D;
    }
    position_step(m, d_, token, length_, 0, caches, slots, x_.data());
    double rstd = 0.0;
    head_step(m, d_, x_.data(), xhat_.data(), &rstd, af_.data(), logits_.data());
    ++length_;
  }

 private:
  Dims d_;
  std::size_t capacity_;
  std::size_t length_ = 0;
  std::vector<std::vector<double>> cache_;
  std::vector<std::vector<double>> scratch_;
  std::vector<double> x_, xhat_, af_, logits_;
};

std::vector<std::size_t> sorted_order(std::span<const double> probs) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return order;
}

TokenId draw(std::span<const double> dist, double u) {
  double cumulative = 0.0;
  TokenId last_nonzero = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cumulative += dist[i];
    last_nonzero = static_cast<TokenId>(i);
    if (u < cumulative) return last_nonzero;
  }
  return last_nonzero;
}

void check_sampling_args(const PolicyParameters& params, std::span<const TokenId> prompt, double temperature,
                         double top_p, std::size_t max_len) {
  check_temperature(temperature);
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorKind::kInvalidTopP, "top_p must lie in (0, 1], got " + std::to_string(top_p));
  }
  if (prompt.empty()) throw Error(ErrorKind::kInvalidArgument, "prompt must be non-empty");
  if (max_len < 1) throw Error(ErrorKind::kInvalidArgument, "max_len must be >= 1");
  if (prompt.size() + max_len > static_cast<std::size_t>(params.shape().max_positions)) {
    throw Error(ErrorKind::kInvalidArgument, "prompt + max_len exceeds the policy's position capacity");
  }
  check_tokens(params, prompt);
}

SampledSequence continue_sampling(const ModelPtrs<const double>& m, const PolicyParameters& params, DecodeState state,
                                  std::span<const TokenId> prompt, double temperature, double top_p,
                                  std::size_t max_len, std::uint64_t seed) {
  const auto& vocab = params.vocabulary();
  const int V = static_cast<int>(vocab.size());
  Rng rng(seed);
  SampledSequence out;
  out.prompt_length = prompt.size();
  out.tokens.assign(prompt.begin(), prompt.end());
  std::vector<double> probs(V);
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto logits = state.logits();
    const double lse = log_normalizer(logits.data(), V, temperature, probs.data());
    const auto dist = top_p < 1.0 ? top_p_filter(probs, top_p) : probs;
    const TokenId next = draw(dist, rng.uniform());
    out.tokens.push_back(next);
    out.logprobs.push_back(token_logprob(logits.data(), next, lse, temperature));
    if (next == vocab.eos()) {
      out.terminated = true;
      break;
    }
    if (step + 1 < max_len) state.push(m, next);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

PolicyParameters::PolicyParameters(Vocabulary vocab, PolicyShape shape) : vocab_(std::move(vocab)), shape_(shape) {
  if (shape.d_model <= 0 || shape.n_heads <= 0 || shape.d_model % shape.n_heads != 0 || shape.d_ff <= 0 ||
      shape.n_layers <= 0 || shape.max_positions <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "inconsistent policy shape");
  }
  const std::size_t V = vocab_.size();
  const std::size_t D = shape.d_model;
  const std::size_t F = shape.d_ff;
  values_.add("token_embedding", {V, D});
  values_.add("position_embedding", {static_cast<std::size_t>(shape.max_positions), D});
  for (int l = 0; l < shape.n_layers; ++l) {
    values_.add(layer_name(l, "ln1.gain"), {D});
    values_.add(layer_name(l, "ln1.bias"), {D});
    values_.add(layer_name(l, "attn.qkv.weight"), {D, 3 * D});
    values_.add(layer_name(l, "attn.qkv.bias"), {3 * D});
    values_.add(layer_name(l, "attn.out.weight"), {D, D});
    values_.add(layer_name(l, "attn.out.bias"), {D});
    values_.add(layer_name(l, "ln2.gain"), {D});
    values_.add(layer_name(l, "ln2.bias"), {D});
    values_.add(layer_name(l, "mlp.in.weight"), {D, F});
    values_.add(layer_name(l, "mlp.in.bias"), {F});
    values_.add(layer_name(l, "mlp.out.weight"), {F, D});
    values_.add(layer_name(l, "mlp.out.bias"), {D});
  }
  values_.add("final_ln.gain", {D});
  values_.add("final_ln.bias", {D});
  values_.add("output.weight", {D, V});
  values_.add("output.bias", {V});
  if (values_.size() > kMaxParameterCount) {
    throw Error(ErrorKind::kInvalidArgument, "policy has " + std::to_string(values_.size()) + " parameters");
  }
}

PolicyParameters PolicyParameters::initialized(Vocabulary vocab, PolicyShape shape, std::uint64_t seed) {
  PolicyParameters p(std::move(vocab), shape);
  Rng rng(seed);
  const double D = shape.d_model;
  const double F = shape.d_ff;
  const double residual_scale = 1.0 / std::sqrt(2.0 * shape.n_layers);
  for (const auto& spec : p.values_.specs()) {
    auto values = p.values_.array(spec.name);
    const auto& n = spec.name;
    double stddev = 0.0;
    if (n.ends_with(".gain")) {
      std::fill(values.begin(), values.end(), 1.0);
      continue;
    }
    if (n == "token_embedding" || n == "position_embedding") {
      stddev = 0.1;
    } else if (n.ends_with("attn.out.weight")) {
      stddev = residual_scale / std::sqrt(D);
    } else if (n.ends_with("mlp.out.weight")) {
      stddev = residual_scale / std::sqrt(F);
    } else if (n.ends_with(".weight")) {
      stddev = 1.0 / std::sqrt(D);
    }
    if (stddev == 0.0) continue;
    for (double& v : values) v = rng.normal(0.0, stddev);
  }
  return p;
}

bool PolicyParameters::has_stage(std::string_view stage) const {
  return std::find(stages_.begin(), stages_.end(), stage) != stages_.end();
}

// ---------------------------------------------------------------------------

class ForwardRecord {
 public:
  Dims d;
  TokenSequence tokens;
  std::vector<std::size_t> start;    // document start of each position
  std::vector<std::size_t> targets;  // predicted token indices
  double temperature = 1.0;

  // Per layer, per position.
  std::vector<double> x_in, xhat1, rstd1, a1, qkv, attn, x_mid, xhat2, rstd2, a2, u, g;
  std::vector<std::vector<double>> probs;  // [l * T + t] -> H x span
  // Per target (head at position target - 1).
  std::vector<double> xhat_f, rstd_f, af, out_probs;

  explicit ForwardRecord(const Dims& dims) : d(dims) {}

  std::size_t T() const { return tokens.size(); }
  std::size_t idx(int l, std::size_t t) const { return static_cast<std::size_t>(l) * T() + t; }
};

ForwardPass forward_pass(const PolicyParameters& params, std::span<const TokenId> tokens,
                         std::span<const std::size_t> segment_starts, std::span<const std::size_t> targets,
                         double temperature) {
  check_temperature(temperature);
  check_tokens(params, tokens);
  const Dims d(params);
  const auto m = bind<const double>(params.values(), d.L);
  auto rec = std::make_shared<ForwardRecord>(d);
  rec->tokens.assign(tokens.begin(), tokens.end());
  rec->targets.assign(targets.begin(), targets.end());
  rec->temperature = temperature;
  const std::size_t T = tokens.size();
  if (T == 0) throw Error(ErrorKind::kInvalidArgument, "empty sequence");
  if (segment_starts.empty() || segment_starts.front() != 0) {
    throw Error(ErrorKind::kInvalidArgument, "segment starts must begin at 0");
  }

  rec->start.resize(T);
  for (std::size_t si = 0; si < segment_starts.size(); ++si) {
    const std::size_t b = segment_starts[si];
    const std::size_t e = si + 1 < segment_starts.size() ? segment_starts[si + 1] : T;
    if (e <= b || e > T) throw Error(ErrorKind::kInvalidArgument, "segment starts must be increasing");
    if (e - b > static_cast<std::size_t>(d.P)) {
      throw Error(ErrorKind::kInvalidArgument, "document longer than the policy's position capacity");
    }
    for (std::size_t t = b; t < e; ++t) rec->start[t] = b;
  }
  for (std::size_t tgt : targets) {
    if (tgt >= T || tgt == rec->start[tgt]) {
      throw Error(ErrorKind::kInvalidArgument, "target " + std::to_string(tgt) + " has no in-document prefix");
    }
  }

  const std::size_t D = d.D;
  const std::size_t LT = static_cast<std::size_t>(d.L) * T;
  rec->x_in.resize(LT * D);
  rec->xhat1.resize(LT * D);
  rec->rstd1.resize(LT);
  rec->a1.resize(LT * D);
  rec->qkv.resize(LT * 3 * D);
  rec->attn.resize(LT * D);
  rec->x_mid.resize(LT * D);
  rec->xhat2.resize(LT * D);
  rec->rstd2.resize(LT);
  rec->a2.resize(LT * D);
  rec->u.resize(LT * d.F);
  rec->g.resize(LT * d.F);
  rec->probs.resize(LT);

  std::vector<double> x_out(T * D);
  std::vector<double*> caches(d.L);
  for (int l = 0; l < d.L; ++l) caches[l] = rec->qkv.data() + rec->idx(l, 0) * 3 * D;
  std::vector<LayerSlots> slots(d.L);
  for (std::size_t t = 0; t < T; ++t) {
    for (int l = 0; l < d.L; ++l) {
      const std::size_t i = rec->idx(l, t);
      rec->probs[i].assign(static_cast<std::size_t>(d.H) * (t - rec->start[t] + 1), 0.0);
      slots[l] = LayerSlots{rec->x_in.data() + i * D,  rec->xhat1.data() + i * D, &rec->rstd1[i],
                            rec->a1.data() + i * D,    caches[l] + t * 3 * D,     rec->probs[i].data(),
                            rec->attn.data() + i * D,  rec->x_mid.data() + i * D, rec->xhat2.data() + i * D,
                            &rec->rstd2[i],            rec->a2.data() + i * D,    rec->u.data() + i * d.F,
                            rec->g.data() + i * d.F};
    }
    position_step(m, d, rec->tokens[t], t, rec->start[t], caches, slots, x_out.data() + t * D);
  }

  const std::size_t K = targets.size();
  rec->xhat_f.resize(K * D);
  rec->rstd_f.resize(K);
  rec->af.resize(K * D);
  rec->out_probs.resize(K * d.V);
  std::vector<double> logits(d.V);
  ForwardPass result;
  result.logprobs.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t q = targets[k] - 1;
    head_step(m, d, x_out.data() + q * D, rec->xhat_f.data() + k * D, &rec->rstd_f[k], rec->af.data() + k * D,
              logits.data());
    const double lse = log_normalizer(logits.data(), d.V, temperature, rec->out_probs.data() + k * d.V);
    result.logprobs[k] = token_logprob(logits.data(), rec->tokens[targets[k]], lse, temperature);
  }
  result.record = std::move(rec);
  return result;
}

void backward_pass(const PolicyParameters& params, const ForwardRecord& rec, std::span<const double> dlogprobs,
                   ParameterSet& grad) {
  if (!grad.same_layout(params.values())) throw Error(ErrorKind::kShapeMismatch, "gradient layout mismatch");
  if (dlogprobs.size() != rec.targets.size()) throw Error(ErrorKind::kLengthMismatch, "dlogprobs size");
  const Dims& d = rec.d;
  const auto m = bind<const double>(params.values(), d.L);
  auto gm = bind<double>(grad, d.L);
  const std::size_t T = rec.T();
  const std::size_t D = d.D;
  const std::size_t F = d.F;

  // Gradient wrt the residual stream leaving the last block.
  std::vector<double> dx(T * D, 0.0);
  std::vector<double> dlogits(d.V);
  std::vector<double> daf(D);
  for (std::size_t k = 0; k < rec.targets.size(); ++k) {
    const double dl = dlogprobs[k];
    if (dl == 0.0) continue;
    const double* p = rec.out_probs.data() + k * d.V;
    const TokenId tok = rec.tokens[rec.targets[k]];
    for (int v = 0; v < d.V; ++v) dlogits[v] = -dl * p[v] / rec.temperature;
    dlogits[tok] += dl / rec.temperature;
    std::fill(daf.begin(), daf.end(), 0.0);
    affine_backward(rec.af.data() + k * D, d.D, m.head_weight, d.V, dlogits.data(), daf.data(), gm.head_weight,
                    gm.head_bias);
    layer_norm_backward(rec.xhat_f.data() + k * D, rec.rstd_f[k], d.D, m.final_gain, daf.data(),
                        dx.data() + (rec.targets[k] - 1) * D, gm.final_gain, gm.final_bias);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(d.Dh));
  std::vector<double> dg(F), du(F), da(D), dattn(T * D), dqkv(T * 3 * D);
  for (int l = d.L - 1; l >= 0; --l) {
    const auto& w = m.layers[l];
    auto& gw = gm.layers[l];
    // MLP block; dx becomes the gradient wrt x_mid.
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t i = rec.idx(l, t);
      double* dxt = dx.data() + t * D;
      std::fill(dg.begin(), dg.end(), 0.0);
      affine_backward(rec.g.data() + i * F, d.F, w.mlp_out_weight, d.D, dxt, dg.data(), gw.mlp_out_weight,
                      gw.mlp_out_bias);
      const double* u = rec.u.data() + i * F;
      for (std::size_t f = 0; f < F; ++f) du[f] = dg[f] * gelu_grad(u[f]);
      std::fill(da.begin(), da.end(), 0.0);
      affine_backward(rec.a2.data() + i * D, d.D, w.mlp_in_weight, d.F, du.data(), da.data(), gw.mlp_in_weight,
                      gw.mlp_in_bias);
      layer_norm_backward(rec.xhat2.data() + i * D, rec.rstd2[i], d.D, w.ln2_gain, da.data(), dxt, gw.ln2_gain,
                          gw.ln2_bias);
    }
    // Attention output projection.
    std::fill(dattn.begin(), dattn.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t i = rec.idx(l, t);
      affine_backward(rec.attn.data() + i * D, d.D, w.out_weight, d.D, dx.data() + t * D, dattn.data() + t * D,
                      gw.out_weight, gw.out_bias);
    }
    // Scaled dot-product attention.
    std::fill(dqkv.begin(), dqkv.end(), 0.0);
    const double* qkv = rec.qkv.data() + rec.idx(l, 0) * 3 * D;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t i = rec.idx(l, t);
      const std::size_t start = rec.start[t];
      const std::size_t span_len = t - start + 1;
      for (int h = 0; h < d.H; ++h) {
        const double* p = rec.probs[i].data() + static_cast<std::size_t>(h) * span_len;
        const double* dout = dattn.data() + t * D + h * d.Dh;
        const double* q = qkv + t * 3 * D + h * d.Dh;
        double* dq = dqkv.data() + t * 3 * D + h * d.Dh;
        std::vector<double> dp(span_len);
        double weighted = 0.0;
        for (std::size_t j = 0; j < span_len; ++j) {
          const std::size_t s = start + j;
          const double* v = qkv + s * 3 * D + 2 * D + h * d.Dh;
          double* dv = dqkv.data() + s * 3 * D + 2 * D + h * d.Dh;
          double acc = 0.0;
          for (int e = 0; e < d.Dh; ++e) {
            acc += dout[e] * v[e];
            dv[e] += p[j] * dout[e];
          }
          dp[j] = acc;
          weighted += p[j] * acc;
        }
        for (std::size_t j = 0; j < span_len; ++j) {
          const double ds = p[j] * (dp[j] - weighted) * scale;
          if (ds == 0.0) continue;
          const std::size_t s = start + j;
          const double* k = qkv + s * 3 * D + D + h * d.Dh;
          double* dk = dqkv.data() + s * 3 * D + D + h * d.Dh;
          for (int e = 0; e < d.Dh; ++e) {
            dq[e] += ds * k[e];
            dk[e] += ds * q[e];
          }
        }
      }
    }
    // QKV projection and first layer norm; dx becomes the gradient wrt x_in.
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t i = rec.idx(l, t);
      std::fill(da.begin(), da.end(), 0.0);
      affine_backward(rec.a1.data() + i * D, d.D, w.qkv_weight, 3 * d.D, dqkv.data() + t * 3 * D, da.data(),
                      gw.qkv_weight, gw.qkv_bias);
      layer_norm_backward(rec.xhat1.data() + i * D, rec.rstd1[i], d.D, w.ln1_gain, da.data(), dx.data() + t * D,
                          gw.ln1_gain, gw.ln1_bias);
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    const double* dxt = dx.data() + t * D;
    double* te = gm.token_embedding + static_cast<std::size_t>(rec.tokens[t]) * D;
    double* pe = gm.position_embedding + (t - rec.start[t]) * D;
    for (std::size_t i = 0; i < D; ++i) {
      te[i] += dxt[i];
      pe[i] += dxt[i];
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<double> forward_logprobs(const PolicyParameters& params, std::span<const TokenId> tokens,
                                     std::size_t prompt_length, double temperature) {
  check_temperature(temperature);
  if (prompt_length < 1 || prompt_length > tokens.size()) {
    throw Error(ErrorKind::kInvalidArgument, "prompt_length must lie in [1, len(tokens)]");
  }
  const std::size_t starts[] = {0};
  std::vector<std::size_t> targets;
  for (std::size_t t = prompt_length; t < tokens.size(); ++t) targets.push_back(t);
  if (targets.empty()) {
    check_tokens(params, tokens);
    return {};
  }
  return forward_pass(params, tokens, starts, targets, temperature).logprobs;
}

std::vector<double> next_token_distribution(const PolicyParameters& params, std::span<const TokenId> prefix,
                                            double temperature) {
  check_temperature(temperature);
  check_tokens(params, prefix);
  if (prefix.empty()) throw Error(ErrorKind::kInvalidArgument, "prefix must be non-empty");
  const Dims d(params);
  const auto m = bind<const double>(params.values(), d.L);
  DecodeState state(d, static_cast<std::size_t>(d.P));
  for (TokenId t : prefix) state.push(m, t);
  std::vector<double> probs(d.V);
  log_normalizer(state.logits().data(), d.V, temperature, probs.data());
  return probs;
}

std::vector<double> top_p_filter(std::span<const double> probs, double top_p) {
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorKind::kInvalidTopP, "top_p must lie in (0, 1], got " + std::to_string(top_p));
  }
  std::vector<double> out(probs.size(), 0.0);
  if (top_p >= 1.0) {
    std::copy(probs.begin(), probs.end(), out.begin());
    return out;
  }
  double mass = 0.0;
  for (std::size_t idx : sorted_order(probs)) {
    out[idx] = probs[idx];
    mass += probs[idx];
    if (mass >= top_p) break;
  }
  for (double& v : out) v /= mass;
  return out;
}

SampledSequence sample(const PolicyParameters& params, std::span<const TokenId> prompt, double temperature,
                       double top_p, std::size_t max_len, std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return std::move(sample_many(params, prompt, temperature, top_p, max_len, seeds).front());
}

std::vector<SampledSequence> sample_many(const PolicyParameters& params, std::span<const TokenId> prompt,
                                         double temperature, double top_p, std::size_t max_len,
                                         std::span<const std::uint64_t> seeds) {
  check_sampling_args(params, prompt, temperature, top_p, max_len);
  const Dims d(params);
  const auto m = bind<const double>(params.values(), d.L);
  DecodeState prefix(d, prompt.size() + max_len);
  for (TokenId t : prompt) prefix.push(m, t);
  std::vector<SampledSequence> out;
  out.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    out.push_back(continue_sampling(m, params, prefix, prompt, temperature, top_p, max_len, seed));
  }
  return out;
}

}  // namespace reasonlab
