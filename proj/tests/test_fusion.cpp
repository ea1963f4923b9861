#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "fedfusion/fusion.hpp"
#include "fedfusion/gradcheck.hpp"
#include "fedfusion/numerics.hpp"
#include "fedfusion/rng.hpp"
#include "helpers.hpp"

using namespace fedfusion;
using namespace fedfusion::fusion;

namespace {

void set_identity(Tensor2& w) {
  for (int r = 0; r < w.rows; ++r) {
    for (int c = 0; c < w.cols; ++c) w.at(r, c) = r == c ? 1.0 : 0.0;
  }
}

std::size_t layout_offset(const FusionConfig& cfg, const std::string& name) {
  for (const LayoutEntry& e : parameter_layout(cfg)) {
    if (e.name == name) return e.offset;
  }
  throw std::logic_error("missing layout entry " + name);
}

// independent brute-force multi-head attention with explicit loops
Tensor2 reference_attention(const Tensor2& a, const Tensor2& t,
                            const std::vector<std::uint8_t>& mask_t, const FusionParams& p,
                            const FusionConfig& cfg) {
  int d = cfg.hidden_dim, dh = cfg.head_dim();
  auto project = [&](const Tensor2& x, const Tensor2& w) {
    Tensor2 out(x.rows, d);
    for (int i = 0; i < x.rows; ++i) {
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += x.at(i, c) * w.at(j, c);
        out.at(i, j) = s;
      }
    }
    return out;
  };
  Tensor2 q = project(a, p.w_q), k = project(t, p.w_k), v = project(t, p.w_v);
  Tensor2 concat(a.rows, d);
  for (int head = 0; head < cfg.heads; ++head) {
    int base = head * dh;
    for (int i = 0; i < a.rows; ++i) {
      std::vector<double> e(static_cast<std::size_t>(t.rows), 0.0);
      double denom = 0.0, best = -1e300;
      for (int j = 0; j < t.rows; ++j) {
        if (!mask_t[static_cast<std::size_t>(j)]) continue;
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q.at(i, base + c) * k.at(j, base + c);
        s /= std::sqrt(static_cast<double>(dh));
        e[static_cast<std::size_t>(j)] = s;
        best = std::max(best, s);
      }
      for (int j = 0; j < t.rows; ++j) {
        if (!mask_t[static_cast<std::size_t>(j)]) continue;
        e[static_cast<std::size_t>(j)] = std::exp(e[static_cast<std::size_t>(j)] - best);
        denom += e[static_cast<std::size_t>(j)];
      }
      for (int c = 0; c < dh; ++c) {
        double s = 0.0;
        for (int j = 0; j < t.rows; ++j) {
          if (!mask_t[static_cast<std::size_t>(j)]) continue;
          s += e[static_cast<std::size_t>(j)] / denom * v.at(j, base + c);
        }
        concat.at(i, base + c) = s;
      }
    }
  }
  return project(concat, p.w_o);
}

}  // namespace

TEST_CASE("parameter count matches the closed-form shape enumeration") {
  FusionConfig cfg = testutil::small_model(8, 2, 4, 4);
  // 5 * 8*8 projections/gate + 8 gate bias + 8 + 1 pooling + 4*8 + 4 + 2*4 + 2 mlp
  CHECK(param_count(cfg) == 383);

  FusionConfig audio = cfg;
  audio.modality = Modality::audio;
  CHECK(param_count(audio) == 55);

  FusionConfig ffn = cfg;
  ffn.include_ffn = true;  // ffn_hidden defaults to 4 * hidden
  CHECK(param_count(ffn) == 383 + 32 * 8 + 32 + 8 * 32 + 8);

  auto layout = parameter_layout(cfg);
  std::vector<std::string> names;
  std::size_t expected_offset = 0;
  for (const LayoutEntry& e : layout) {
    names.push_back(e.name);
    CHECK(e.offset == expected_offset);
    expected_offset += static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols);
  }
  CHECK(expected_offset == param_count(cfg));
  CHECK(names == std::vector<std::string>{"w_q", "w_k", "w_v", "w_o", "w_g", "b_g", "w_a", "b_a",
                                          "w_m1", "b_m1", "w_m2", "b_m2"});
}

TEST_CASE("init is seeded with zero biases and flatten/load round trips") {
  FusionConfig cfg = testutil::small_model();
  ParamVector w1 = flatten(init_params(cfg, 5), cfg);
  ParamVector w2 = flatten(init_params(cfg, 5), cfg);
  ParamVector w3 = flatten(init_params(cfg, 6), cfg);
  CHECK(w1 == w2);
  CHECK_FALSE(w1 == w3);

  std::size_t b_g = layout_offset(cfg, "b_g");
  for (int i = 0; i < cfg.hidden_dim; ++i) CHECK(w1[b_g + static_cast<std::size_t>(i)] == 0.0);
  double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  for (std::size_t i = 0; i < b_g; ++i) CHECK(std::abs(w1[i]) < bound);

  ParamVector round = flatten(load(w1, cfg), cfg);
  CHECK(round == w1);

  align::AlignedSample probe = testutil::random_sample(cfg, 2, 4);
  CHECK(forward(probe, load(w1, cfg), cfg).first == forward(probe, load(round, cfg), cfg).first);

  CHECK_THROWS(load(ParamVector(3), cfg));
}

TEST_CASE("zero parameters produce zero logits") {
  FusionConfig cfg = testutil::small_model();
  align::AlignedSample s = testutil::random_sample(cfg, 3, 5);
  CHECK(forward(s, zero_params(cfg), cfg).first == std::vector<double>{0.0, 0.0});
}

TEST_CASE("single-key attention copies the text row") {
  FusionConfig cfg = testutil::small_model(8, 2, 6, 4);
  FusionParams p = zero_params(cfg);
  set_identity(p.w_q);
  set_identity(p.w_k);
  set_identity(p.w_v);
  set_identity(p.w_o);

  Rng rng(31);
  Tensor2 a(3, 8), t1(1, 8);
  for (double& x : a.data) x = rng.normal();
  for (double& x : t1.data) x = rng.normal();

  Tensor2 h1 = cross_attention(a, t1, std::vector<std::uint8_t>{1}, p, cfg);
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 8; ++c) CHECK(h1.at(i, c) == doctest::Approx(t1.at(0, c)).epsilon(1e-14));
  }

  // duplicated identical keys behave like the single key
  Tensor2 t2(2, 8);
  for (int c = 0; c < 8; ++c) t2.at(0, c) = t2.at(1, c) = t1.at(0, c);
  Tensor2 h2 = cross_attention(a, t2, std::vector<std::uint8_t>{1, 1}, p, cfg);
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(std::abs(h1.data[i] - h2.data[i]) < 1e-12);
}

TEST_CASE("attention matches the brute-force oracle with and without masking") {
  FusionConfig cfg = testutil::small_model(8, 2, 6, 4);
  FusionParams p = init_params(cfg, 77);
  Rng rng(78);
  Tensor2 a(3, 8), t(4, 8);
  for (double& x : a.data) x = rng.normal();
  for (double& x : t.data) x = rng.normal();

  for (std::vector<std::uint8_t> mask :
       {std::vector<std::uint8_t>{1, 1, 1, 1}, std::vector<std::uint8_t>{1, 0, 1, 0}}) {
    Tensor2 got = cross_attention(a, t, mask, p, cfg);
    Tensor2 want = reference_attention(a, t, mask, p, cfg);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.data[i] - want.data[i]) < 1e-12);
  }

  CHECK_THROWS_WITH_AS(cross_attention(a, t, std::vector<std::uint8_t>{0, 0, 0, 0}, p, cfg),
                       doctest::Contains("all text tokens masked"), std::runtime_error);
}

TEST_CASE("attention is a set operation over text tokens") {
  FusionConfig cfg = testutil::small_model(8, 2, 6, 4);
  FusionParams p = init_params(cfg, 91);
  Rng rng(92);
  Tensor2 a(2, 8), t(4, 8);
  for (double& x : a.data) x = rng.normal();
  for (double& x : t.data) x = rng.normal();
  std::vector<std::uint8_t> mask = {1, 0, 1, 1};

  Tensor2 base = cross_attention(a, t, mask, p, cfg);

  std::vector<int> perm = {2, 0, 3, 1};
  Tensor2 tp(4, 8);
  std::vector<std::uint8_t> mp(4);
  for (int j = 0; j < 4; ++j) {
    mp[static_cast<std::size_t>(j)] = mask[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
    for (int c = 0; c < 8; ++c) tp.at(j, c) = t.at(perm[static_cast<std::size_t>(j)], c);
  }
  Tensor2 permuted = cross_attention(a, tp, mp, p, cfg);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::abs(base.data[i] - permuted.data[i]) < 1e-10);
  }
}

TEST_CASE("gate blend closed forms and bounds") {
  FusionConfig cfg = testutil::small_model(8, 2, 6, 4);
  Rng rng(55);
  Tensor2 a(3, 8), h_att(3, 8);
  for (double& x : a.data) x = rng.normal();
  for (double& x : h_att.data) x = rng.normal();

  // blend of equal operands is the operand for any gate parameters
  FusionParams p = init_params(cfg, 56);
  Tensor2 same = gate_blend(a, a, p);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same.data[i] == doctest::Approx(a.data[i]).epsilon(1e-14));

  // zero gate parameters give the arithmetic mean
  FusionParams zero = zero_params(cfg);
  Tensor2 mean = gate_blend(a, h_att, zero);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(mean.data[i] == doctest::Approx(0.5 * (a.data[i] + h_att.data[i])).epsilon(1e-14));
    CHECK(mean.data[i] >= std::min(a.data[i], h_att.data[i]) - 1e-12);
    CHECK(mean.data[i] <= std::max(a.data[i], h_att.data[i]) + 1e-12);
  }

  // injected G = 0.25 via the gate bias: H = 0.25 * 4 + 0.75 * 0 = 1
  FusionConfig tiny = testutil::small_model(1, 1, 2, 2);
  FusionParams pg = zero_params(tiny);
  pg.b_g[0] = -std::log(3.0);  // sigmoid -> 0.25
  Tensor2 a1(1, 1), h1(1, 1);
  a1.data = {0.0};
  h1.data = {4.0};
  CHECK(gate_blend(a1, h1, pg).at(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("attention pooling closed forms") {
  FusionConfig cfg = testutil::small_model(8, 2, 6, 4);
  Rng rng(60);
  Tensor2 h(3, 8);
  for (double& x : h.data) x = rng.normal();
  std::vector<std::uint8_t> mask = {1, 1, 1};

  // zero scoring weights: uniform pooling = mean of unmasked rows
  FusionParams zero = zero_params(cfg);
  auto mean = attention_pool(h, mask, zero);
  for (int c = 0; c < 8; ++c) {
    double want = (h.at(0, c) + h.at(1, c) + h.at(2, c)) / 3.0;
    CHECK(mean[static_cast<std::size_t>(c)] == doctest::Approx(want).epsilon(1e-14));
  }

  // single unmasked row comes back unchanged
  std::vector<std::uint8_t> one = {0, 1, 0};
  auto single = attention_pool(h, one, zero);
  for (int c = 0; c < 8; ++c) CHECK(single[static_cast<std::size_t>(c)] == h.at(1, c));

  // alpha = [0, ln 3] -> weights (0.25, 0.75)
  Tensor2 h2(2, 8);
  for (double& x : h2.data) x = rng.normal();
  h2.at(0, 0) = 0.0;
  h2.at(1, 0) = std::log(3.0);
  FusionParams score = zero_params(cfg);
  score.w_a.at(0, 0) = 1.0;
  auto blended = attention_pool(h2, std::vector<std::uint8_t>{1, 1}, score);
  for (int c = 0; c < 8; ++c) {
    CHECK(blended[static_cast<std::size_t>(c)] ==
          doctest::Approx(0.25 * h2.at(0, c) + 0.75 * h2.at(1, c)).epsilon(1e-14));
  }

  CHECK_THROWS_WITH_AS(attention_pool(h, std::vector<std::uint8_t>{0, 0, 0}, zero),
                       doctest::Contains("all rows masked"), std::runtime_error);
}

TEST_CASE("forward trace invariants hold on random inputs") {
  FusionConfig cfg = testutil::small_model(8, 2, 6, 4);
  FusionParams p = init_params(cfg, 7);
  align::AlignedSample s = testutil::random_sample(cfg, 5, 2, 2);
  auto [logits, trace] = forward(s, p, cfg);

  REQUIRE(trace.attn.size() == 2);
  for (const Tensor2& head : trace.attn) {
    for (int i = 0; i < head.rows; ++i) {
      double row = 0.0;
      for (int j = 0; j < head.cols; ++j) {
        row += head.at(i, j);
        if (!trace.mask_t[static_cast<std::size_t>(j)]) CHECK(head.at(i, j) == 0.0);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
  for (double g : trace.gate.data) {
    CHECK(g > 0.0);
    CHECK(g < 1.0);
  }
  double wsum = 0.0;
  for (std::size_t i = 0; i < trace.pool_w.size(); ++i) {
    wsum += trace.pool_w[i];
    if (!trace.pool_mask[i]) CHECK(trace.pool_w[i] == 0.0);
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-10));

  CHECK(forward(s, p, cfg).first == logits);
}

TEST_CASE("padding rows beyond the active prefix never change the output") {
  FusionConfig narrow = testutil::small_model(8, 2, 6, 4);
  FusionConfig wide = narrow;
  wide.max_len = 11;
  FusionParams p = init_params(narrow, 12);

  align::AlignedSample s = testutil::random_sample(narrow, 4, 5, 1);
  align::AlignedSample padded;
  padded.a = Tensor2::zeros(wide.max_len, 8);
  padded.t = Tensor2::zeros(wide.max_len, 8);
  padded.mask_a.assign(static_cast<std::size_t>(wide.max_len), 0);
  padded.mask_t.assign(static_cast<std::size_t>(wide.max_len), 0);
  padded.label = s.label;
  padded.speaker_id = s.speaker_id;
  for (int i = 0; i < narrow.max_len; ++i) {
    padded.mask_a[static_cast<std::size_t>(i)] = s.mask_a[static_cast<std::size_t>(i)];
    padded.mask_t[static_cast<std::size_t>(i)] = s.mask_t[static_cast<std::size_t>(i)];
    for (int c = 0; c < 8; ++c) {
      padded.a.at(i, c) = s.a.at(i, c);
      padded.t.at(i, c) = s.t.at(i, c);
    }
  }

  CHECK(forward(s, p, narrow).first == forward(padded, p, wide).first);
}

TEST_CASE("duplicating audio words preserves uniform pooling") {
  FusionConfig cfg = testutil::small_model(8, 2, 8, 4);
  cfg.modality = Modality::audio;
  FusionParams p = init_params(cfg, 40);
  // zero scoring weights make pooling a plain mean
  p.w_a = Tensor2::zeros(1, 8);
  p.b_a = 0.0;

  align::AlignedSample s;
  s.a = Tensor2::zeros(cfg.max_len, 8);
  s.t = Tensor2::zeros(cfg.max_len, 8);
  s.mask_a.assign(static_cast<std::size_t>(cfg.max_len), 0);
  s.mask_t.assign(static_cast<std::size_t>(cfg.max_len), 0);
  Rng rng(41);
  for (int i = 0; i < 2; ++i) {
    s.mask_a[static_cast<std::size_t>(i)] = 1;
    for (int c = 0; c < 8; ++c) s.a.at(i, c) = rng.normal();
  }
  align::AlignedSample doubled = s;
  for (int i = 0; i < 2; ++i) {
    doubled.mask_a[static_cast<std::size_t>(2 + i)] = 1;
    for (int c = 0; c < 8; ++c) doubled.a.at(2 + i, c) = s.a.at(i, c);
  }

  std::vector<double> base = forward(s, p, cfg).first;
  std::vector<double> dup = forward(doubled, p, cfg).first;
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(base[i] - dup[i]) < 1e-12);
}

TEST_CASE("saturated correct predictions have a vanishing gradient") {
  FusionConfig cfg = testutil::small_model();
  align::AlignedSample s = testutil::random_sample(cfg, 4, 4);
  ParamVector w = flatten(init_params(cfg, 3), cfg);

  auto probe = forward(s, load(w, cfg), cfg);
  int label = probe.first[1] > probe.first[0] ? 1 : 0;
  w[layout_offset(cfg, "b_m2") + static_cast<std::size_t>(label)] += 40.0;

  align::AlignedSample labeled = s;
  labeled.label = static_cast<Label>(label);
  auto [loss, g] = fusion::loss_and_grad(labeled, w, cfg);
  CHECK(loss < 1e-9);
  double norm = 0.0;
  for (double x : g.v) norm += x * x;
  CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("pooling bias gradient vanishes for identical rows") {
  FusionConfig cfg = testutil::small_model();
  cfg.modality = Modality::audio;
  align::AlignedSample s;
  s.a = Tensor2::zeros(cfg.max_len, 8);
  s.t = Tensor2::zeros(cfg.max_len, 8);
  s.mask_a.assign(static_cast<std::size_t>(cfg.max_len), 0);
  s.mask_t.assign(static_cast<std::size_t>(cfg.max_len), 0);
  Rng rng(14);
  std::vector<double> row(8);
  for (double& x : row) x = rng.normal();
  for (int i = 0; i < 3; ++i) {
    s.mask_a[static_cast<std::size_t>(i)] = 1;
    for (int c = 0; c < 8; ++c) s.a.at(i, c) = row[static_cast<std::size_t>(c)];
  }
  s.label = Label::ad;

  ParamVector w = flatten(init_params(cfg, 15), cfg);
  auto [loss, g] = fusion::loss_and_grad(s, w, cfg);
  CHECK(g[layout_offset(cfg, "b_a")] == 0.0);
}

TEST_CASE("backward rejects a stale trace") {
  FusionConfig cfg = testutil::small_model();
  align::AlignedSample s = testutil::random_sample(cfg, 4, 4);
  FusionParams p = init_params(cfg, 8);
  auto [logits, trace] = forward(s, p, cfg);

  FusionConfig other = testutil::small_model(4, 2, 6, 4);
  FusionParams q = init_params(other, 9);
  CHECK_THROWS_WITH_AS(backward(trace, 0, q, other), doctest::Contains("stale trace"),
                       std::invalid_argument);
}

TEST_CASE("backward agrees with finite differences on varied instances") {
  auto check_instance = [](FusionConfig cfg, std::uint64_t seed, int tokens, int pauses) {
    align::AlignedSample s = testutil::random_sample(cfg, seed, tokens, pauses);
    ParamVector w = flatten(init_params(cfg, seed + 1), cfg);
    auto f = [&](const ParamVector& point) { return fusion::loss_and_grad(s, point, cfg); };
    GradCheckReport report = grad_check(f, w, 1e-5);
    INFO("seed ", seed, " worst index ", report.worst_index, " rel ", report.max_rel_error);
    CHECK(report.pass);
  };

  FusionConfig both = testutil::small_model();
  check_instance(both, 100, 4, 1);
  check_instance(both, 101, 6, 2);

  FusionConfig ffn = both;
  ffn.include_ffn = true;
  ffn.ffn_hidden = 6;
  check_instance(ffn, 102, 4, 1);

  FusionConfig audio = both;
  audio.modality = Modality::audio;
  check_instance(audio, 103, 5, 0);

  FusionConfig text = both;
  text.modality = Modality::text;
  check_instance(text, 104, 5, 2);
}
