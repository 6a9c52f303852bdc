// Model-level behavior: the trilinear attention against a straight-line
// reimplementation, padding invariance, gate contraction, parameter-spec
// contracts, gradient completeness across the configuration variants, and
// trace geometry.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "offtopic/model.hpp"

using namespace offtopic;

namespace {

ModelConfig tiny(Encoder enc = Encoder::Cnn, Attention att = Attention::Bi,
                 bool gate_res = true, Pooling pool = Pooling::Max) {
  ModelConfig c;
  c.vocab_size = 12;
  c.embed_dim = 4;
  c.conv_layers = 2;
  c.kernel_size = 3;
  c.filters = 4;
  c.prompt_len = 5;
  c.response_len = 7;
  c.encoder = enc;
  c.pooling = pool;
  c.attention = att;
  c.gate_residual = gate_res;
  c.dropout_rate = 0.0;
  c.head_hidden = 6;
  return c;
}

const std::vector<int> kPrompt{3, 5, 2, 0, 0};
const std::vector<int> kResponse{4, 6, 7, 2, 9, 0, 0};

template <typename T>
ForwardResult<T> run_forward(const ModelParams<T>& params, const std::vector<int>& prompt,
                             const std::vector<int>& response, bool want_trace = true) {
  Graph<T> g(/*no_grad=*/true);
  std::mt19937 rng(0);
  return forward(g, params, prompt, response, /*train_mode=*/false, rng, want_trace);
}

}  // namespace

TEST_CASE("attention matches a straight-line trilinear reimplementation") {
  ModelConfig cfg = tiny();
  cfg.embed_dim = 2;
  cfg.filters = 2;  // attended_dim = 4
  ModelParams<double> params(cfg);
  params.at("att_p2r.w_u")->value = {0.3, -0.2, 0.5, 0.1};
  params.at("att_p2r.w_v")->value = {0.1, 0.4, -0.3, 0.2};
  params.at("att_p2r.w_uv")->value = {-0.1, 0.2, 0.3, -0.4};

  Graph<double> g(/*no_grad=*/true);
  auto u_target = g.constant({3, 2}, {1.0, 0.5, -0.5, 0.25, 2.0, -1.0});
  auto w_target = g.constant({3, 2}, {0.2, -0.1, 0.4, 0.3, 0.0, 0.1});
  const Mask mask_target{1, 1, 0};
  auto v_source = g.constant({2}, {0.6, -0.2});
  auto w_source = g.constant({2, 2}, {0.5, 0.1, -0.3, 0.7});
  const Mask mask_source{1, 1};

  TensorPtr<double> c, alpha;
  attend(g, params, "att_p2r", u_target, w_target, mask_target, v_source, w_source,
         mask_source, c, alpha);

  // Independent recomputation with plain loops.
  const std::vector<std::vector<double>> u_tilde{
      {1.0, 0.5, 0.2, -0.1}, {-0.5, 0.25, 0.4, 0.3}, {2.0, -1.0, 0.0, 0.1}};
  const std::vector<double> v_tilde{0.6, -0.2, 0.1, 0.4};  // [v_source, avg w_source]
  const auto& w_u = params.at("att_p2r.w_u")->value;
  const auto& w_v = params.at("att_p2r.w_v")->value;
  const auto& w_uv = params.at("att_p2r.w_uv")->value;
  std::vector<double> s(3);
  for (int j = 0; j < 3; ++j) {
    double a = 0, b = 0, d = 0;
    for (int i = 0; i < 4; ++i) {
      a += u_tilde[j][i] * w_u[i];
      b += v_tilde[i] * w_v[i];
      d += u_tilde[j][i] * v_tilde[i] * w_uv[i];
    }
    s[j] = a + b + d;
  }
  const double mx = std::max(s[0], s[1]);  // only unmasked scores
  const double e0 = std::exp(s[0] - mx), e1 = std::exp(s[1] - mx);
  const std::vector<double> want_alpha{e0 / (e0 + e1), e1 / (e0 + e1), 0.0};
  std::vector<double> want_c(4, 0.0);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i) want_c[i] += want_alpha[j] * u_tilde[j][i];

  for (int j = 0; j < 3; ++j)
    CHECK(alpha->value[j] == doctest::Approx(want_alpha[j]).epsilon(1e-12));
  CHECK(alpha->value[2] == 0.0);
  for (int i = 0; i < 4; ++i)
    CHECK(c->value[i] == doctest::Approx(want_c[i]).epsilon(1e-12));
}

TEST_CASE("parameter specs are deterministic with unique names and expected shapes") {
  const ModelConfig cfg = tiny();
  auto specs = param_specs(cfg);
  auto again = param_specs(cfg);
  REQUIRE(specs.size() == again.size());
  std::set<std::string> names;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(specs[i].name == again[i].name);
    CHECK(specs[i].shape == again[i].shape);
    CHECK(names.insert(specs[i].name).second);  // no duplicates
  }

  auto shape_of = [&](const std::string& name) -> Shape {
    for (const auto& s : specs)
      if (s.name == name) return s.shape;
    FAIL("missing parameter ", name);
    return {};
  };
  CHECK(shape_of("embedding") == Shape{12, 4});
  CHECK(shape_of("conv.0.w") == Shape{3, 4, 4});   // first layer reads embeddings
  CHECK(shape_of("conv.1.w") == Shape{3, 4, 4});   // later layers read filters
  CHECK(shape_of("att_p2r.w_u") == Shape{8});      // filters + embed_dim
  CHECK(shape_of("gate.w") == Shape{24, 24});      // 2 * (attended + filters)
  CHECK(shape_of("head.fc2.w") == Shape{2, 6});

  // The rnn family swaps the encoder parameters and keeps everything else.
  auto rnn_specs = param_specs(tiny(Encoder::Rnn));
  bool has_rnn = false, has_conv = false;
  for (const auto& s : rnn_specs) {
    has_rnn |= s.name.starts_with("rnn.");
    has_conv |= s.name.starts_with("conv.");
  }
  CHECK(has_rnn);
  CHECK_FALSE(has_conv);

  // Uni-directional attention drops the reverse attention block.
  for (const auto& s : param_specs(tiny(Encoder::Cnn, Attention::UniPromptToResponse)))
    CHECK_FALSE(s.name.starts_with("att_r2p."));
}

TEST_CASE("initialization pins padding row zero and is seed-deterministic") {
  const ModelConfig cfg = tiny();
  auto a = init_params<float>(cfg, 42);
  auto b = init_params<float>(cfg, 42);
  auto c = init_params<float>(cfg, 43);
  for (const auto& name : a.names) {
    CHECK(a.at(name)->value == b.at(name)->value);
  }
  bool any_differs = false;
  for (const auto& name : a.names) any_differs |= a.at(name)->value != c.at(name)->value;
  CHECK(any_differs);

  for (int j = 0; j < cfg.embed_dim; ++j) CHECK(a.at("embedding")->value[j] == 0.0f);
  for (float v : a.at("conv.0.b")->value) CHECK(v == 0.0f);
  for (float v : a.at("head.ln.gain")->value) CHECK(v == 1.0f);
  for (float v : a.at("head.ln.bias")->value) CHECK(v == 0.0f);
  bool emb_nonzero = false;
  for (std::size_t i = cfg.embed_dim; i < a.at("embedding")->value.size(); ++i)
    emb_nonzero |= a.at("embedding")->value[i] != 0.0f;
  CHECK(emb_nonzero);
}

TEST_CASE("trace geometry and attention mass") {
  for (auto enc : {Encoder::Cnn, Encoder::Rnn}) {
    CAPTURE(to_string(enc));
    const ModelConfig cfg = tiny(enc);
    auto params = init_params<float>(cfg, 7);
    auto result = run_forward(params, kPrompt, kResponse);
    const auto& tr = result.trace;

    CHECK(tr.u_prompt.size() == static_cast<std::size_t>(cfg.prompt_len * cfg.filters));
    CHECK(tr.u_response.size() == static_cast<std::size_t>(cfg.response_len * cfg.filters));
    CHECK(tr.v_prompt.size() == static_cast<std::size_t>(cfg.filters));
    CHECK(tr.v_response.size() == static_cast<std::size_t>(cfg.filters));
    CHECK(tr.alpha_p2r.size() == static_cast<std::size_t>(cfg.response_len));
    CHECK(tr.alpha_r2p.size() == static_cast<std::size_t>(cfg.prompt_len));
    CHECK(tr.c_response.size() == static_cast<std::size_t>(cfg.attended_dim()));
    CHECK(tr.c_prompt.size() == static_cast<std::size_t>(cfg.attended_dim()));
    CHECK(tr.gate.size() == static_cast<std::size_t>(cfg.gate_dim()));
    CHECK(tr.relevance.size() == static_cast<std::size_t>(cfg.gate_dim()));
    CHECK(tr.p_on_topic > 0.0f);
    CHECK(tr.p_on_topic < 1.0f);
    CHECK(tr.p_on_topic == result.p_on_topic->value[0]);

    double sum_p2r = 0, sum_r2p = 0;
    for (float v : tr.alpha_p2r) sum_p2r += v;
    for (float v : tr.alpha_r2p) sum_r2p += v;
    CHECK(sum_p2r == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sum_r2p == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(tr.alpha_p2r[5] == 0.0f);  // padding gets exactly zero mass
    CHECK(tr.alpha_p2r[6] == 0.0f);
    CHECK(tr.alpha_r2p[3] == 0.0f);
    CHECK(tr.alpha_r2p[4] == 0.0f);

    // Padding rows of the encodings are zeroed.
    for (int f = 0; f < cfg.filters; ++f) {
      CHECK(tr.u_prompt[static_cast<std::size_t>(4 * cfg.filters + f)] == 0.0f);
      CHECK(tr.u_response[static_cast<std::size_t>(6 * cfg.filters + f)] == 0.0f);
    }
  }
}

TEST_CASE("uni-directional attention keeps shapes and skips reverse attention") {
  const ModelConfig cfg = tiny(Encoder::Cnn, Attention::UniPromptToResponse);
  auto params = init_params<float>(cfg, 7);
  auto result = run_forward(params, kPrompt, kResponse);
  const auto& tr = result.trace;
  CHECK(tr.alpha_r2p.empty());
  CHECK(tr.c_prompt.size() == static_cast<std::size_t>(cfg.attended_dim()));

  // The prompt side falls back to [v_prompt, average prompt embedding].
  const auto& emb = params.at("embedding")->value;
  std::vector<double> avg(cfg.embed_dim, 0.0);
  int valid = 0;
  for (int id : kPrompt) {
    if (id == 0) continue;
    ++valid;
    for (int j = 0; j < cfg.embed_dim; ++j)
      avg[static_cast<std::size_t>(j)] += emb[static_cast<std::size_t>(id * cfg.embed_dim + j)];
  }
  for (int f = 0; f < cfg.filters; ++f)
    CHECK(tr.c_prompt[static_cast<std::size_t>(f)] ==
          doctest::Approx(tr.v_prompt[static_cast<std::size_t>(f)]));
  for (int j = 0; j < cfg.embed_dim; ++j)
    CHECK(tr.c_prompt[static_cast<std::size_t>(cfg.filters + j)] ==
          doctest::Approx(avg[static_cast<std::size_t>(j)] / valid).epsilon(1e-6));
}

TEST_CASE("the gate contracts every coordinate") {
  for (bool residual : {true, false}) {
    CAPTURE(residual);
    const ModelConfig cfg = tiny(Encoder::Cnn, Attention::Bi, residual);
    auto params = init_params<float>(cfg, 11);
    auto tr = run_forward(params, kPrompt, kResponse).trace;

    std::vector<float> joint;
    auto append = [&](const std::vector<float>& v) { joint.insert(joint.end(), v.begin(), v.end()); };
    append(tr.c_response);
    if (residual) append(tr.v_response);
    append(tr.c_prompt);
    if (residual) append(tr.v_prompt);
    REQUIRE(joint.size() == tr.relevance.size());

    for (std::size_t i = 0; i < joint.size(); ++i) {
      CHECK(tr.gate[i] > 0.0f);
      CHECK(tr.gate[i] < 1.0f);
      CHECK(std::abs(tr.relevance[i]) <= std::abs(joint[i]));
      CHECK(tr.relevance[i] == doctest::Approx(tr.gate[i] * joint[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("extending the padding tail leaves the probability unchanged") {
  for (auto enc : {Encoder::Cnn, Encoder::Rnn}) {
    CAPTURE(to_string(enc));
    const ModelConfig cfg = tiny(enc);
    auto params = init_params<float>(cfg, 5);
    const float p_short = run_forward(params, kPrompt, kResponse, false).p_on_topic->value[0];

    ModelConfig longer = cfg;
    longer.prompt_len = 9;
    longer.response_len = 12;
    ModelParams<float> wide(longer);
    wide.copy_values_from(params);  // same weights; lengths do not touch shapes
    std::vector<int> prompt_long = kPrompt;
    prompt_long.resize(9, 0);
    std::vector<int> response_long = kResponse;
    response_long.resize(12, 0);
    const float p_long = run_forward(wide, prompt_long, response_long, false).p_on_topic->value[0];
    CHECK(std::abs(p_long - p_short) < 1e-6f);
  }
}

TEST_CASE("every parameter receives gradient in all configuration variants") {
  const std::vector<int> prompt2{2, 7, 0, 0, 0};
  const std::vector<int> response2{8, 3, 10, 0, 0, 0, 0};
  for (auto enc : {Encoder::Cnn, Encoder::Rnn}) {
    for (auto att : {Attention::Bi, Attention::UniPromptToResponse}) {
      CAPTURE(to_string(enc));
      CAPTURE(to_string(att));
      const ModelConfig cfg = tiny(enc, att);
      auto params = init_params<float>(cfg, 13);
      params.zero_grad();

      Graph<float> g;
      std::mt19937 rng(0);
      auto p1 = forward(g, params, kPrompt, kResponse, true, rng).p_on_topic;
      auto p2 = forward(g, params, prompt2, response2, true, rng).p_on_topic;
      auto loss = g.scaled_sum({g.weighted_bce(p1, 1, 1.0), g.weighted_bce(p2, 0, 0.5)}, 1.0);
      g.backward(loss);

      for (const auto& name : params.names) {
        const auto& grad = params.at(name)->grad;
        float max_abs = 0.0f;
        for (float v : grad) max_abs = std::max(max_abs, std::abs(v));
        CAPTURE(name);
        if (name.ends_with(".w_v")) {
          // The w_v similarity term shifts every attention score by the same
          // amount, and softmax is shift-invariant, so its true gradient is
          // zero; only float cancellation noise can remain.
          CHECK(max_abs < 1e-5f);
        } else {
          CHECK(max_abs > 0.0f);
        }
      }
    }
  }
}

TEST_CASE("degenerate inputs are rejected") {
  const ModelConfig cfg = tiny();
  auto params = init_params<float>(cfg, 3);
  Graph<float> g(true);
  std::mt19937 rng(0);

  const std::vector<int> all_pad_prompt(5, 0);
  CHECK_THROWS_AS(static_cast<void>(forward(g, params, all_pad_prompt, kResponse, false, rng)),
                  ValueError);
  const std::vector<int> all_pad_response(7, 0);
  CHECK_THROWS_AS(static_cast<void>(forward(g, params, kPrompt, all_pad_response, false, rng)),
                  ValueError);

  const std::vector<int> wrong_len{1, 2, 3};
  CHECK_THROWS_AS(static_cast<void>(forward(g, params, wrong_len, kResponse, false, rng)),
                  ShapeError);
  CHECK_THROWS_AS(static_cast<void>(forward(g, params, kPrompt, wrong_len, false, rng)),
                  ShapeError);
}

TEST_CASE("configuration validation rejects bad settings") {
  ModelConfig cfg = tiny();
  cfg.kernel_size = 4;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg = tiny(Encoder::Rnn);
  cfg.filters = 5;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg = tiny();
  cfg.vocab_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg = tiny();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValueError);

  CHECK_THROWS_AS(parse_encoder("transformer"), ValueError);
  CHECK_THROWS_AS(parse_pooling("sum"), ValueError);
  CHECK_THROWS_AS(parse_attention("tri"), ValueError);
  CHECK(parse_attention("uni") == Attention::UniPromptToResponse);
}
