#pragma once

// The five-layer relevance model: embedding -> shared sequence encoder ->
// bidirectional attention with a trilinear similarity -> gated relevance unit
// -> normalized two-way classification head. Configuration switches select
// the encoder family, pooling mode, attention direction, and gate residual so
// every ablation rung of the benchmark ladder runs through one code path.

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "offtopic/errors.hpp"
#include "offtopic/graph.hpp"
#include "offtopic/kernels.hpp"
#include "offtopic/tensor.hpp"

namespace offtopic {

enum class Encoder { Cnn, Rnn };
enum class Pooling { Max, Avg };
enum class Attention { Bi, UniPromptToResponse };

inline std::string to_string(Encoder e) { return e == Encoder::Cnn ? "cnn" : "rnn"; }
inline std::string to_string(Pooling p) { return p == Pooling::Max ? "max" : "avg"; }
inline std::string to_string(Attention a) {
  return a == Attention::Bi ? "bi" : "uni_prompt_to_response";
}

inline Encoder parse_encoder(const std::string& s) {
  if (s == "cnn") return Encoder::Cnn;
  if (s == "rnn") return Encoder::Rnn;
  throw ValueError("unknown encoder '" + s + "' (expected cnn|rnn)");
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "max") return Pooling::Max;
  if (s == "avg") return Pooling::Avg;
  throw ValueError("unknown pooling '" + s + "' (expected max|avg)");
}

inline Attention parse_attention(const std::string& s) {
  if (s == "bi") return Attention::Bi;
  if (s == "uni" || s == "uni_prompt_to_response") return Attention::UniPromptToResponse;
  throw ValueError("unknown attention '" + s + "' (expected bi|uni_prompt_to_response)");
}

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 300;
  int conv_layers = 7;
  int kernel_size = 7;
  int filters = 128;
  int prompt_len = 40;
  int response_len = 280;
  Encoder encoder = Encoder::Cnn;
  Pooling pooling = Pooling::Max;
  Attention attention = Attention::Bi;
  bool gate_residual = true;
  double dropout_rate = 0.3;
  int head_hidden = 128;

  void validate() const {
    if (vocab_size < 2) throw ValueError("vocab_size must be at least 2 (padding + unknown)");
    if (embed_dim < 1) throw ValueError("embed_dim must be positive");
    if (conv_layers < 1) throw ValueError("conv_layers must be positive");
    if (kernel_size < 1 || kernel_size % 2 == 0) {
      throw ValueError("kernel_size must be odd and positive, got " + std::to_string(kernel_size));
    }
    if (filters < 1) throw ValueError("filters must be positive");
    if (prompt_len < 1) throw ValueError("prompt_len must be positive");
    if (response_len < 1) throw ValueError("response_len must be positive");
    if (head_hidden < 1) throw ValueError("head_hidden must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
      throw ValueError("dropout_rate must lie in [0, 1)");
    }
    if (encoder == Encoder::Rnn && filters % 2 != 0) {
      throw ValueError("rnn encoder requires an even filter count (two directions)");
    }
  }

  // Dimension of an attended vector c (encoder features + embedding residual).
  int attended_dim() const { return filters + embed_dim; }
  // Dimension of one gate operand c-tilde.
  int gate_half_dim() const {
    return gate_residual ? attended_dim() + filters : attended_dim();
  }
  // Dimension of the gate input/output.
  int gate_dim() const { return 2 * gate_half_dim(); }
  // Dimension of the classification-head input [gated, c_R, c_P].
  int head_input_dim() const { return gate_dim() + 2 * attended_dim(); }
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

// Canonical parameter list; shapes are a pure function of the configuration,
// which is what checkpoint loading validates against.
inline std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> specs;
  specs.push_back({"embedding", {c.vocab_size, c.embed_dim}});
  if (c.encoder == Encoder::Cnn) {
    for (int l = 0; l < c.conv_layers; ++l) {
      const int d_in = l == 0 ? c.embed_dim : c.filters;
      specs.push_back({"conv." + std::to_string(l) + ".w", {c.kernel_size, d_in, c.filters}});
      specs.push_back({"conv." + std::to_string(l) + ".b", {c.filters}});
    }
  } else {
    const int h = c.filters / 2;
    for (const char* dir : {"fwd", "bwd"}) {
      for (const char* gate : {"z", "r", "h"}) {
        const std::string base = std::string("rnn.") + dir + "." + gate;
        specs.push_back({base + ".w", {h, c.embed_dim}});
        specs.push_back({base + ".u", {h, h}});
        specs.push_back({base + ".b", {h}});
      }
    }
  }
  const int a = c.attended_dim();
  for (const char* block : {"w_u", "w_v", "w_uv"}) {
    specs.push_back({std::string("att_p2r.") + block, {a}});
  }
  if (c.attention == Attention::Bi) {
    for (const char* block : {"w_u", "w_v", "w_uv"}) {
      specs.push_back({std::string("att_r2p.") + block, {a}});
    }
  }
  specs.push_back({"gate.w", {c.gate_dim(), c.gate_dim()}});
  specs.push_back({"head.ln.gain", {c.head_input_dim()}});
  specs.push_back({"head.ln.bias", {c.head_input_dim()}});
  specs.push_back({"head.fc1.w", {c.head_hidden, c.head_input_dim()}});
  specs.push_back({"head.fc1.b", {c.head_hidden}});
  specs.push_back({"head.fc2.w", {2, c.head_hidden}});
  specs.push_back({"head.fc2.b", {2}});
  return specs;
}

template <typename T>
struct ModelParams {
  ModelConfig config;
  std::vector<std::string> names;
  std::unordered_map<std::string, TensorPtr<T>> by_name;

  explicit ModelParams(const ModelConfig& cfg) : config(cfg) {
    for (const auto& spec : param_specs(cfg)) {
      names.push_back(spec.name);
      by_name.emplace(spec.name, make_tensor<T>(spec.shape, true));
    }
  }

  const TensorPtr<T>& at(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValueError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& name : names) n += by_name.at(name)->size();
    return n;
  }

  void zero_grad() {
    for (const auto& name : names) by_name.at(name)->zero_grad();
  }

  // Deep copy with fresh tensors (used for best-checkpoint snapshots).
  ModelParams clone() const {
    ModelParams out(config);
    for (const auto& name : names) out.by_name.at(name)->value = by_name.at(name)->value;
    return out;
  }

  void copy_values_from(const ModelParams& other) {
    for (const auto& name : names) {
      auto& dst = by_name.at(name);
      const auto& src = other.by_name.at(name);
      if (dst->shape != src->shape) {
        throw ShapeError("parameter '" + name + "': " + shape_str(dst->shape) + " vs " +
                         shape_str(src->shape));
      }
      dst->value = src->value;
    }
  }
};

namespace detail {

template <typename T>
void fill_uniform(std::vector<T>& v, std::mt19937& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : v) x = static_cast<T>(dist(rng));
}

inline double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

}  // namespace detail

// Glorot-uniform weights, zero biases, unit layer-norm gain, small uniform
// embeddings with row 0 (padding) pinned to zero.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint32_t seed) {
  ModelParams<T> params(cfg);
  std::mt19937 rng(seed);
  for (const auto& name : params.names) {
    auto& t = params.by_name.at(name);
    if (name == "embedding") {
      detail::fill_uniform(t->value, rng, 0.05);
      for (int j = 0; j < cfg.embed_dim; ++j) t->value[j] = T(0);
    } else if (name.substr(0, 5) == "conv." && name.ends_with(".w")) {
      const int k = t->dim(0), d_in = t->dim(1), f = t->dim(2);
      detail::fill_uniform(t->value, rng, detail::glorot_bound(k * d_in, k * f));
    } else if (name.ends_with(".gain")) {
      for (auto& x : t->value) x = T(1);
    } else if (name.ends_with(".b") || name.ends_with(".bias")) {
      // zero-initialized
    } else if (t->rank() == 2) {
      detail::fill_uniform(t->value, rng, detail::glorot_bound(t->dim(1), t->dim(0)));
    } else {
      detail::fill_uniform(t->value, rng, detail::glorot_bound(t->dim(0), 1));
    }
  }
  return params;
}

template <typename T>
struct ForwardTrace {
  std::vector<T> u_prompt, u_response;    // contextual encodings, row-major
  std::vector<T> v_prompt, v_response;    // pooled summary vectors
  std::vector<T> alpha_p2r;               // attention over response positions
  std::vector<T> alpha_r2p;               // attention over prompt positions (empty when uni)
  std::vector<T> c_response, c_prompt;    // attended vectors
  std::vector<T> gate;                    // gate activations g
  std::vector<T> relevance;               // gated relevance vector (g applied)
  T p_on_topic = T(0);
};

template <typename T>
struct ForwardResult {
  TensorPtr<T> p_on_topic;  // scalar node, class 1 probability
  ForwardTrace<T> trace;
};

namespace detail {

template <typename T>
TensorPtr<T> gru_direction(Graph<T>& g, const ModelParams<T>& params, const TensorPtr<T>& x,
                           const Mask& mask, const char* dir) {
  const int t_len = x->dim(0);
  const int h_dim = params.config.filters / 2;
  const std::string base = std::string("rnn.") + dir + ".";
  const auto& wz = params.at(base + "z.w");
  const auto& uz = params.at(base + "z.u");
  const auto& bz = params.at(base + "z.b");
  const auto& wr = params.at(base + "r.w");
  const auto& ur = params.at(base + "r.u");
  const auto& br = params.at(base + "r.b");
  const auto& wh = params.at(base + "h.w");
  const auto& uh = params.at(base + "h.u");
  const auto& bh = params.at(base + "h.b");
  auto ones = g.constant({h_dim}, std::vector<T>(static_cast<std::size_t>(h_dim), T(1)));
  auto h = g.zeros({h_dim});
  std::vector<TensorPtr<T>> outs(static_cast<std::size_t>(t_len));
  const bool forward_dir = std::string(dir) == "fwd";
  for (int step = 0; step < t_len; ++step) {
    const int t = forward_dir ? step : t_len - 1 - step;
    if (mask[static_cast<std::size_t>(t)]) {
      auto xt = g.row(x, t);
      auto z = g.sigmoid(g.add(g.add(g.matvec(wz, xt), g.matvec(uz, h)), bz));
      auto r = g.sigmoid(g.add(g.add(g.matvec(wr, xt), g.matvec(ur, h)), br));
      auto hh = g.tanh_act(g.add(g.add(g.matvec(wh, xt), g.matvec(uh, g.mul(r, h))), bh));
      h = g.add(g.mul(g.sub(ones, z), h), g.mul(z, hh));
    }
    outs[static_cast<std::size_t>(t)] = h;
  }
  return g.stack_rows(outs);
}

}  // namespace detail

// Shared sequence encoder + pooling. Masked rows of U are zeroed so nothing
// downstream can observe padding.
template <typename T>
void encode(Graph<T>& g, const ModelParams<T>& params, const TensorPtr<T>& embedded,
            const Mask& mask, TensorPtr<T>& u_out, TensorPtr<T>& v_out) {
  const ModelConfig& cfg = params.config;
  if (mask_count(mask) == 0) throw ValueError("encode: sequence is entirely padding");
  TensorPtr<T> u;
  if (cfg.encoder == Encoder::Cnn) {
    u = embedded;
    for (int l = 0; l < cfg.conv_layers; ++l) {
      const std::string base = "conv." + std::to_string(l);
      u = g.conv1d_same(u, params.at(base + ".w"), params.at(base + ".b"),
                        kernels::Activation::Relu);
      u = g.mask_rows(u, mask);
    }
  } else {
    auto fwd = detail::gru_direction(g, params, embedded, mask, "fwd");
    auto bwd = detail::gru_direction(g, params, embedded, mask, "bwd");
    u = g.mask_rows(g.concat_cols(fwd, bwd), mask);
  }
  u_out = u;
  v_out = cfg.pooling == Pooling::Max ? g.pool_max(u, mask) : g.pool_avg(u, mask);
}

// One attention direction. Target side supplies positions (u_target rows plus
// their embedding residuals); source side supplies the summary vector
// [v_source, average of source embeddings]. Similarity is the trilinear form
// realized as three block dot products.
template <typename T>
void attend(Graph<T>& g, const ModelParams<T>& params, const std::string& which,
            const TensorPtr<T>& u_target, const TensorPtr<T>& w_target, const Mask& mask_target,
            const TensorPtr<T>& v_source, const TensorPtr<T>& w_source, const Mask& mask_source,
            TensorPtr<T>& c_out, TensorPtr<T>& alpha_out) {
  auto u_tilde = g.concat_cols(u_target, w_target);
  auto v_tilde = g.concat(v_source, g.pool_avg(w_source, mask_source));
  const auto& w_u = params.at(which + ".w_u");
  const auto& w_v = params.at(which + ".w_v");
  const auto& w_uv = params.at(which + ".w_uv");
  auto s_pos = g.add(g.matvec(u_tilde, w_u), g.matvec(g.mul_row_broadcast(u_tilde, v_tilde), w_uv));
  auto s = g.broadcast_add(s_pos, g.dot(v_tilde, w_v));
  alpha_out = g.masked_softmax(s, mask_target);
  c_out = g.vecmat(alpha_out, u_tilde);
}

// Gated relevance unit: g = sigmoid(W_g [c~R, c~P]), output g ⊙ [c~R, c~P],
// where c~ carries the pooled-vector residual when configured.
template <typename T>
void relevance_gate(Graph<T>& g, const ModelParams<T>& params, const TensorPtr<T>& c_r,
                    const TensorPtr<T>& v_r, const TensorPtr<T>& c_p, const TensorPtr<T>& v_p,
                    TensorPtr<T>& gate_out, TensorPtr<T>& gated_out) {
  const ModelConfig& cfg = params.config;
  auto ct_r = cfg.gate_residual ? g.concat(c_r, v_r) : c_r;
  auto ct_p = cfg.gate_residual ? g.concat(c_p, v_p) : c_p;
  auto joint = g.concat(ct_r, ct_p);
  gate_out = g.sigmoid(g.matvec(params.at("gate.w"), joint));
  gated_out = g.mul(gate_out, joint);
}

// Classification head over [gated, c_R, c_P]: layer norm, dropout (train
// only), FC+ReLU, FC to two logits, softmax; returns P(on-topic).
template <typename T>
TensorPtr<T> output_head(Graph<T>& g, const ModelParams<T>& params, const TensorPtr<T>& gated,
                         const TensorPtr<T>& c_r, const TensorPtr<T>& c_p, bool train_mode,
                         std::mt19937& rng) {
  const ModelConfig& cfg = params.config;
  auto z = g.concat(gated, g.concat(c_r, c_p));
  z = g.layer_norm(z, params.at("head.ln.gain"), params.at("head.ln.bias"));
  if (train_mode && cfg.dropout_rate > 0.0) z = g.dropout(z, cfg.dropout_rate, rng);
  auto h = g.relu(g.add(g.matvec(params.at("head.fc1.w"), z), params.at("head.fc1.b")));
  auto logits = g.add(g.matvec(params.at("head.fc2.w"), h), params.at("head.fc2.b"));
  auto probs = g.masked_softmax(logits, full_mask(2));
  return g.select(probs, 1);
}

template <typename T>
Mask padding_mask(std::span<const int> ids) {
  Mask m(ids.size(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != 0 ? 1 : 0;
  return m;
}

template <typename T>
ForwardResult<T> forward(Graph<T>& g, const ModelParams<T>& params,
                         std::span<const int> prompt_ids, std::span<const int> response_ids,
                         bool train_mode, std::mt19937& rng, bool want_trace = false) {
  const ModelConfig& cfg = params.config;
  if (static_cast<int>(prompt_ids.size()) != cfg.prompt_len) {
    throw ShapeError("forward: prompt has " + std::to_string(prompt_ids.size()) +
                     " ids, config expects " + std::to_string(cfg.prompt_len));
  }
  if (static_cast<int>(response_ids.size()) != cfg.response_len) {
    throw ShapeError("forward: response has " + std::to_string(response_ids.size()) +
                     " ids, config expects " + std::to_string(cfg.response_len));
  }
  Mask mask_p = padding_mask<T>(prompt_ids);
  Mask mask_r = padding_mask<T>(response_ids);
  if (mask_count(mask_p) == 0) throw ValueError("forward: prompt is entirely padding");
  if (mask_count(mask_r) == 0) throw ValueError("forward: response is entirely padding");

  const auto& emb = params.at("embedding");
  auto w_p = g.lookup_rows(emb, prompt_ids);
  auto w_r = g.lookup_rows(emb, response_ids);

  TensorPtr<T> u_p, v_p, u_r, v_r;
  encode(g, params, w_p, mask_p, u_p, v_p);
  encode(g, params, w_r, mask_r, u_r, v_r);

  TensorPtr<T> c_r, alpha_p2r;
  attend(g, params, "att_p2r", u_r, w_r, mask_r, v_p, w_p, mask_p, c_r, alpha_p2r);

  TensorPtr<T> c_p, alpha_r2p;
  if (cfg.attention == Attention::Bi) {
    attend(g, params, "att_r2p", u_p, w_p, mask_p, v_r, w_r, mask_r, c_p, alpha_r2p);
  } else {
    // Uni-directional ablation: the prompt side contributes its summary
    // vector in place of an attended one, keeping downstream shapes fixed.
    c_p = g.concat(v_p, g.pool_avg(w_p, mask_p));
  }

  TensorPtr<T> gate, gated;
  relevance_gate(g, params, c_r, v_r, c_p, v_p, gate, gated);
  auto p = output_head(g, params, gated, c_r, c_p, train_mode, rng);

  ForwardResult<T> result;
  result.p_on_topic = p;
  if (want_trace) {
    result.trace.u_prompt = u_p->value;
    result.trace.u_response = u_r->value;
    result.trace.v_prompt = v_p->value;
    result.trace.v_response = v_r->value;
    result.trace.alpha_p2r = alpha_p2r->value;
    if (alpha_r2p) result.trace.alpha_r2p = alpha_r2p->value;
    result.trace.c_response = c_r->value;
    result.trace.c_prompt = c_p->value;
    result.trace.gate = gate->value;
    result.trace.relevance = gated->value;
    result.trace.p_on_topic = p->value[0];
  }
  return result;
}

}  // namespace offtopic
