#include "fedfusion/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "fedfusion/numerics.hpp"
#include "fedfusion/rng.hpp"

namespace fedfusion::fusion {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::text: return "text";
    default: return "both";
  }
}

Modality modality_from_string(const std::string& s) {
  if (s == "audio") return Modality::audio;
  if (s == "text") return Modality::text;
  if (s == "both") return Modality::both;
  throw std::invalid_argument("unknown modality: " + s);
}

void FusionConfig::validate() const {
  if (hidden_dim < 1) throw std::invalid_argument("FusionConfig: hidden_dim must be positive");
  if (heads < 1) throw std::invalid_argument("FusionConfig: heads must be positive");
  if (hidden_dim % heads != 0) {
    throw std::invalid_argument("FusionConfig: hidden_dim not divisible by heads");
  }
  if (max_len < 1) throw std::invalid_argument("FusionConfig: max_len must be >= 1");
  if (mlp_hidden < 1) throw std::invalid_argument("FusionConfig: mlp_hidden must be positive");
  if (classes < 2) throw std::invalid_argument("FusionConfig: classes must be >= 2");
  if (ffn_hidden < 0) throw std::invalid_argument("FusionConfig: ffn_hidden must be >= 0");
}

std::vector<LayoutEntry> parameter_layout(const FusionConfig& cfg) {
  cfg.validate();
  int d = cfg.hidden_dim;
  std::vector<LayoutEntry> layout;
  auto add = [&layout](const std::string& name, int rows, int cols) {
    std::size_t offset =
        layout.empty() ? 0
                       : layout.back().offset + static_cast<std::size_t>(layout.back().rows) *
                                                    static_cast<std::size_t>(layout.back().cols);
    layout.push_back({name, rows, cols, offset});
  };
  if (cfg.modality == Modality::both) {
    add("w_q", d, d);
    add("w_k", d, d);
    add("w_v", d, d);
    add("w_o", d, d);
    add("w_g", d, d);
    add("b_g", 1, d);
    if (cfg.include_ffn) {
      add("w_f1", cfg.ffn_dim(), d);
      add("b_f1", 1, cfg.ffn_dim());
      add("w_f2", d, cfg.ffn_dim());
      add("b_f2", 1, d);
    }
  }
  add("w_a", 1, d);
  add("b_a", 1, 1);
  add("w_m1", cfg.mlp_hidden, d);
  add("b_m1", 1, cfg.mlp_hidden);
  add("w_m2", cfg.classes, cfg.mlp_hidden);
  add("b_m2", 1, cfg.classes);
  return layout;
}

std::size_t param_count(const FusionConfig& cfg) {
  std::size_t n = 0;
  for (const LayoutEntry& e : parameter_layout(cfg)) {
    n += static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols);
  }
  return n;
}

FusionParams zero_params(const FusionConfig& cfg) {
  return load(ParamVector(param_count(cfg)), cfg);
}

FusionParams init_params(const FusionConfig& cfg, std::uint64_t seed) {
  ParamVector flat(param_count(cfg));
  Rng rng(seed);
  for (const LayoutEntry& e : parameter_layout(cfg)) {
    if (e.name[0] != 'w') continue;  // biases stay zero
    double bound = 1.0 / std::sqrt(static_cast<double>(e.cols));
    std::size_t n = static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols);
    for (std::size_t i = 0; i < n; ++i) flat[e.offset + i] = rng.uniform(-bound, bound);
  }
  return load(flat, cfg);
}

ParamVector flatten(const FusionParams& p, const FusionConfig& cfg) {
  ParamVector flat(param_count(cfg));
  auto put_matrix = [&flat](const LayoutEntry& e, const Tensor2& m) {
    if (m.rows != e.rows || m.cols != e.cols) {
      throw std::invalid_argument("flatten: " + e.name + " shape mismatch");
    }
    std::copy(m.data.begin(), m.data.end(), flat.v.begin() + static_cast<long>(e.offset));
  };
  auto put_vector = [&flat](const LayoutEntry& e, const std::vector<double>& b) {
    if (static_cast<int>(b.size()) != e.cols) {
      throw std::invalid_argument("flatten: " + e.name + " size mismatch");
    }
    std::copy(b.begin(), b.end(), flat.v.begin() + static_cast<long>(e.offset));
  };
  for (const LayoutEntry& e : parameter_layout(cfg)) {
    if (e.name == "w_q") put_matrix(e, p.w_q);
    else if (e.name == "w_k") put_matrix(e, p.w_k);
    else if (e.name == "w_v") put_matrix(e, p.w_v);
    else if (e.name == "w_o") put_matrix(e, p.w_o);
    else if (e.name == "w_g") put_matrix(e, p.w_g);
    else if (e.name == "b_g") put_vector(e, p.b_g);
    else if (e.name == "w_f1") put_matrix(e, p.w_f1);
    else if (e.name == "b_f1") put_vector(e, p.b_f1);
    else if (e.name == "w_f2") put_matrix(e, p.w_f2);
    else if (e.name == "b_f2") put_vector(e, p.b_f2);
    else if (e.name == "w_a") put_matrix(e, p.w_a);
    else if (e.name == "b_a") flat[e.offset] = p.b_a;
    else if (e.name == "w_m1") put_matrix(e, p.w_m1);
    else if (e.name == "b_m1") put_vector(e, p.b_m1);
    else if (e.name == "w_m2") put_matrix(e, p.w_m2);
    else if (e.name == "b_m2") put_vector(e, p.b_m2);
  }
  return flat;
}

FusionParams load(const ParamVector& v, const FusionConfig& cfg) {
  if (v.size() != param_count(cfg)) {
    throw std::invalid_argument("load: parameter vector length mismatch");
  }
  FusionParams p;
  auto get_matrix = [&v](const LayoutEntry& e) {
    Tensor2 m(e.rows, e.cols);
    std::copy(v.v.begin() + static_cast<long>(e.offset),
              v.v.begin() + static_cast<long>(e.offset) + static_cast<long>(m.size()),
              m.data.begin());
    return m;
  };
  auto get_vector = [&v](const LayoutEntry& e) {
    return std::vector<double>(v.v.begin() + static_cast<long>(e.offset),
                               v.v.begin() + static_cast<long>(e.offset) + e.cols);
  };
  for (const LayoutEntry& e : parameter_layout(cfg)) {
    if (e.name == "w_q") p.w_q = get_matrix(e);
    else if (e.name == "w_k") p.w_k = get_matrix(e);
    else if (e.name == "w_v") p.w_v = get_matrix(e);
    else if (e.name == "w_o") p.w_o = get_matrix(e);
    else if (e.name == "w_g") p.w_g = get_matrix(e);
    else if (e.name == "b_g") p.b_g = get_vector(e);
    else if (e.name == "w_f1") p.w_f1 = get_matrix(e);
    else if (e.name == "b_f1") p.b_f1 = get_vector(e);
    else if (e.name == "w_f2") p.w_f2 = get_matrix(e);
    else if (e.name == "b_f2") p.b_f2 = get_vector(e);
    else if (e.name == "w_a") p.w_a = get_matrix(e);
    else if (e.name == "b_a") p.b_a = v[e.offset];
    else if (e.name == "w_m1") p.w_m1 = get_matrix(e);
    else if (e.name == "b_m1") p.b_m1 = get_vector(e);
    else if (e.name == "w_m2") p.w_m2 = get_matrix(e);
    else if (e.name == "b_m2") p.b_m2 = get_vector(e);
  }
  return p;
}

namespace {

Tensor2 slice_rows(const Tensor2& m, int n) {
  Tensor2 out(n, m.cols);
  std::copy(m.data.begin(), m.data.begin() + static_cast<long>(out.size()), out.data.begin());
  return out;
}

// Multi-head scaled dot-product attention with keys/values from t, storing
// the per-head weights for backward. Returns H_att.
Tensor2 attention_core(const Tensor2& a, const Tensor2& t, std::span<const std::uint8_t> mask_t,
                       const FusionParams& p, const FusionConfig& cfg, ForwardTrace* trace) {
  if (a.cols != cfg.hidden_dim || t.cols != cfg.hidden_dim) {
    throw std::invalid_argument("cross_attention: dimension mismatch");
  }
  if (mask_t.size() != static_cast<std::size_t>(t.rows)) {
    throw std::invalid_argument("cross_attention: mask size mismatch");
  }
  bool any_key = false;
  for (std::uint8_t m : mask_t) any_key = any_key || m != 0;
  if (!any_key) throw std::runtime_error("cross_attention: all text tokens masked");

  int hd = cfg.head_dim();
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor2 q = linear(a, p.w_q, {});
  Tensor2 k = linear(t, p.w_k, {});
  Tensor2 v = linear(t, p.w_v, {});

  Tensor2 concat(a.rows, cfg.hidden_dim);
  std::vector<Tensor2> attn;
  attn.reserve(static_cast<std::size_t>(cfg.heads));
  std::vector<double> scores(static_cast<std::size_t>(t.rows));
  for (int h = 0; h < cfg.heads; ++h) {
    int off = h * hd;
    Tensor2 weights(a.rows, t.rows);
    for (int i = 0; i < a.rows; ++i) {
      for (int j = 0; j < t.rows; ++j) {
        double s = 0.0;
        for (int c = 0; c < hd; ++c) s += q.at(i, off + c) * k.at(j, off + c);
        scores[static_cast<std::size_t>(j)] = s * scale;
      }
      std::vector<double> row = softmax(scores, mask_t);
      for (int j = 0; j < t.rows; ++j) weights.at(i, j) = row[static_cast<std::size_t>(j)];
      for (int c = 0; c < hd; ++c) {
        double s = 0.0;
        for (int j = 0; j < t.rows; ++j) s += weights.at(i, j) * v.at(j, off + c);
        concat.at(i, off + c) = s;
      }
    }
    attn.push_back(std::move(weights));
  }
  Tensor2 h_att = linear(concat, p.w_o, {});
  if (trace != nullptr) {
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->attn = std::move(attn);
    trace->concat = std::move(concat);
    trace->h_att = h_att;
  }
  return h_att;
}

Tensor2 gate_core(const Tensor2& a, const Tensor2& h_att, const FusionParams& p,
                  ForwardTrace* trace) {
  check_same_shape(a, h_att, "gate_blend");
  Tensor2 gate = linear(h_att, p.w_g, p.b_g);
  for (double& z : gate.data) z = sigmoid(z);
  Tensor2 h(a.rows, a.cols);
  for (std::size_t i = 0; i < h.data.size(); ++i) {
    h.data[i] = gate.data[i] * h_att.data[i] + (1.0 - gate.data[i]) * a.data[i];
  }
  if (trace != nullptr) trace->gate = std::move(gate);
  return h;
}

struct PoolTrace {
  std::vector<double> alpha;
  std::vector<double> weights;
  std::vector<double> pooled;
};

PoolTrace pool_core(const Tensor2& h, std::span<const std::uint8_t> mask, const FusionParams& p) {
  if (mask.size() != static_cast<std::size_t>(h.rows)) {
    throw std::invalid_argument("attention_pool: mask size mismatch");
  }
  if (h.cols != p.w_a.cols) throw std::invalid_argument("attention_pool: dimension mismatch");
  bool any = false;
  for (std::uint8_t m : mask) any = any || m != 0;
  if (!any) throw std::runtime_error("attention_pool: all rows masked");
  PoolTrace out;
  out.alpha.resize(static_cast<std::size_t>(h.rows));
  for (int i = 0; i < h.rows; ++i) {
    double s = p.b_a;
    for (int c = 0; c < h.cols; ++c) s += p.w_a.at(0, c) * h.at(i, c);
    out.alpha[static_cast<std::size_t>(i)] = s;
  }
  out.weights = softmax(out.alpha, mask);
  out.pooled.assign(static_cast<std::size_t>(h.cols), 0.0);
  for (int i = 0; i < h.rows; ++i) {
    double w = out.weights[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    for (int c = 0; c < h.cols; ++c) out.pooled[static_cast<std::size_t>(c)] += w * h.at(i, c);
  }
  return out;
}

int effective_length(const align::AlignedSample& sample, Modality modality) {
  int n = 0;
  for (std::size_t i = 0; i < sample.mask_a.size(); ++i) {
    bool active = false;
    switch (modality) {
      case Modality::audio: active = sample.mask_a[i] != 0; break;
      case Modality::text: active = sample.mask_t[i] != 0; break;
      case Modality::both: active = sample.mask_a[i] != 0 || sample.mask_t[i] != 0; break;
    }
    if (active) n = static_cast<int>(i) + 1;
  }
  if (n == 0) throw std::runtime_error("forward: all rows masked");
  return n;
}

}  // namespace

Tensor2 cross_attention(const Tensor2& a, const Tensor2& t, std::span<const std::uint8_t> mask_t,
                        const FusionParams& p, const FusionConfig& cfg) {
  return attention_core(a, t, mask_t, p, cfg, nullptr);
}

Tensor2 gate_blend(const Tensor2& a, const Tensor2& h_att, const FusionParams& p) {
  return gate_core(a, h_att, p, nullptr);
}

std::vector<double> attention_pool(const Tensor2& h, std::span<const std::uint8_t> mask,
                                   const FusionParams& p) {
  return pool_core(h, mask, p).pooled;
}

std::pair<std::vector<double>, ForwardTrace> forward(const align::AlignedSample& sample,
                                                     const FusionParams& p,
                                                     const FusionConfig& cfg) {
  cfg.validate();
  ForwardTrace trace;
  trace.modality = cfg.modality;
  int n = effective_length(sample, cfg.modality);
  trace.n = n;

  if (cfg.modality == Modality::both) {
    trace.a = slice_rows(sample.a, n);
    trace.t = slice_rows(sample.t, n);
    trace.mask_a.assign(sample.mask_a.begin(), sample.mask_a.begin() + n);
    trace.mask_t.assign(sample.mask_t.begin(), sample.mask_t.begin() + n);
    attention_core(trace.a, trace.t, trace.mask_t, p, cfg, &trace);
    trace.h = gate_core(trace.a, trace.h_att, p, &trace);
    if (cfg.include_ffn) {
      trace.ffn_act = linear(trace.h, p.w_f1, p.b_f1);
      for (double& x : trace.ffn_act.data) x = x > 0.0 ? x : 0.0;
      Tensor2 back = linear(trace.ffn_act, p.w_f2, p.b_f2);
      check_same_shape(back, trace.h, "forward");
      trace.h_post = trace.h;
      for (std::size_t i = 0; i < back.data.size(); ++i) trace.h_post.data[i] += back.data[i];
    } else {
      trace.h_post = trace.h;
    }
    trace.pool_mask = trace.mask_a;
  } else if (cfg.modality == Modality::audio) {
    trace.a = slice_rows(sample.a, n);
    trace.mask_a.assign(sample.mask_a.begin(), sample.mask_a.begin() + n);
    trace.h_post = trace.a;
    trace.pool_mask = trace.mask_a;
  } else {
    trace.t = slice_rows(sample.t, n);
    trace.mask_t.assign(sample.mask_t.begin(), sample.mask_t.begin() + n);
    trace.h_post = trace.t;
    trace.pool_mask = trace.mask_t;
  }

  PoolTrace pool = pool_core(trace.h_post, trace.pool_mask, p);
  trace.alpha = std::move(pool.alpha);
  trace.pool_w = std::move(pool.weights);
  trace.pooled = std::move(pool.pooled);

  trace.mlp_z.resize(static_cast<std::size_t>(cfg.mlp_hidden));
  for (int i = 0; i < cfg.mlp_hidden; ++i) {
    double s = p.b_m1[static_cast<std::size_t>(i)];
    for (int c = 0; c < cfg.hidden_dim; ++c) {
      s += p.w_m1.at(i, c) * trace.pooled[static_cast<std::size_t>(c)];
    }
    trace.mlp_z[static_cast<std::size_t>(i)] = s > 0.0 ? s : 0.0;
  }
  trace.logits.resize(static_cast<std::size_t>(cfg.classes));
  for (int i = 0; i < cfg.classes; ++i) {
    double s = p.b_m2[static_cast<std::size_t>(i)];
    for (int c = 0; c < cfg.mlp_hidden; ++c) {
      s += p.w_m2.at(i, c) * trace.mlp_z[static_cast<std::size_t>(c)];
    }
    trace.logits[static_cast<std::size_t>(i)] = s;
  }
  return {trace.logits, trace};
}

ParamVector backward(const ForwardTrace& trace, int label, const FusionParams& p,
                     const FusionConfig& cfg) {
  if (trace.modality != cfg.modality ||
      static_cast<int>(trace.pooled.size()) != cfg.hidden_dim ||
      static_cast<int>(trace.logits.size()) != cfg.classes) {
    throw std::invalid_argument("backward: stale trace");
  }
  int n = trace.n;
  int d = cfg.hidden_dim;
  FusionParams g = zero_params(cfg);

  // classifier head
  std::vector<double> dlogits = cross_entropy_grad(trace.logits, label);
  std::vector<double> dz(static_cast<std::size_t>(cfg.mlp_hidden), 0.0);
  for (int i = 0; i < cfg.classes; ++i) {
    double dl = dlogits[static_cast<std::size_t>(i)];
    g.b_m2[static_cast<std::size_t>(i)] = dl;
    for (int c = 0; c < cfg.mlp_hidden; ++c) {
      g.w_m2.at(i, c) = dl * trace.mlp_z[static_cast<std::size_t>(c)];
      dz[static_cast<std::size_t>(c)] += dl * p.w_m2.at(i, c);
    }
  }
  for (int i = 0; i < cfg.mlp_hidden; ++i) {
    if (trace.mlp_z[static_cast<std::size_t>(i)] <= 0.0) dz[static_cast<std::size_t>(i)] = 0.0;
  }
  std::vector<double> dpooled(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < cfg.mlp_hidden; ++i) {
    double dzi = dz[static_cast<std::size_t>(i)];
    g.b_m1[static_cast<std::size_t>(i)] = dzi;
    if (dzi == 0.0) continue;
    for (int c = 0; c < d; ++c) {
      g.w_m1.at(i, c) = dzi * trace.pooled[static_cast<std::size_t>(c)];
      dpooled[static_cast<std::size_t>(c)] += dzi * p.w_m1.at(i, c);
    }
  }

  // attention pooling
  const Tensor2& h_post = trace.h_post;
  std::vector<double> dw(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    if (trace.pool_mask[static_cast<std::size_t>(i)] == 0) continue;
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += dpooled[static_cast<std::size_t>(c)] * h_post.at(i, c);
    dw[static_cast<std::size_t>(i)] = s;
  }
  double inner = 0.0;
  for (int i = 0; i < n; ++i) {
    inner += trace.pool_w[static_cast<std::size_t>(i)] * dw[static_cast<std::size_t>(i)];
  }
  std::vector<double> dalpha(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    dalpha[static_cast<std::size_t>(i)] =
        trace.pool_w[static_cast<std::size_t>(i)] * (dw[static_cast<std::size_t>(i)] - inner);
  }
  Tensor2 dh_post(n, d);
  for (int i = 0; i < n; ++i) {
    double wi = trace.pool_w[static_cast<std::size_t>(i)];
    double dai = dalpha[static_cast<std::size_t>(i)];
    g.b_a += dai;
    for (int c = 0; c < d; ++c) {
      g.w_a.at(0, c) += dai * h_post.at(i, c);
      dh_post.at(i, c) = wi * dpooled[static_cast<std::size_t>(c)] + dai * p.w_a.at(0, c);
    }
  }

  if (cfg.modality != Modality::both) {
    return flatten(g, cfg);  // the pool input is the raw modality stream
  }

  // optional feed-forward sublayer (residual)
  Tensor2 dh = dh_post;
  if (cfg.include_ffn) {
    Tensor2 dffn = matmul_nn(dh_post, p.w_f2);  // n x ffn
    for (std::size_t i = 0; i < dffn.data.size(); ++i) {
      if (trace.ffn_act.data[i] <= 0.0) dffn.data[i] = 0.0;
    }
    g.w_f2 = matmul_tn(dh_post, trace.ffn_act);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) g.b_f2[static_cast<std::size_t>(c)] += dh_post.at(i, c);
    }
    g.w_f1 = matmul_tn(dffn, trace.h);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < cfg.ffn_dim(); ++c) {
        g.b_f1[static_cast<std::size_t>(c)] += dffn.at(i, c);
      }
    }
    Tensor2 extra = matmul_nn(dffn, p.w_f1);
    for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += extra.data[i];
  }

  // gate blend: H = G * H_att + (1 - G) * A
  Tensor2 dh_att(n, d);
  Tensor2 dzg(n, d);
  for (std::size_t i = 0; i < dh.data.size(); ++i) {
    double gate = trace.gate.data[i];
    double dg = dh.data[i] * (trace.h_att.data[i] - trace.a.data[i]);
    dh_att.data[i] = dh.data[i] * gate;
    dzg.data[i] = dg * gate * (1.0 - gate);
  }
  g.w_g = matmul_tn(dzg, trace.h_att);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) g.b_g[static_cast<std::size_t>(c)] += dzg.at(i, c);
  }
  {
    Tensor2 extra = matmul_nn(dzg, p.w_g);
    for (std::size_t i = 0; i < dh_att.data.size(); ++i) dh_att.data[i] += extra.data[i];
  }

  // output projection: H_att = concat * W_o^T
  Tensor2 dconcat = matmul_nn(dh_att, p.w_o);
  g.w_o = matmul_tn(dh_att, trace.concat);

  // per-head attention backward
  int hd = cfg.head_dim();
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor2 dq(n, d);
  Tensor2 dk(n, d);
  Tensor2 dv(n, d);
  for (int h = 0; h < cfg.heads; ++h) {
    int off = h * hd;
    const Tensor2& attn = trace.attn[static_cast<std::size_t>(h)];
    for (int i = 0; i < n; ++i) {
      // dattn_ij = sum_c dconcat_i[c] * v_j[c]; softmax row backward to scores
      double row_inner = 0.0;
      std::vector<double> dattn(static_cast<std::size_t>(n), 0.0);
      for (int j = 0; j < n; ++j) {
        if (attn.at(i, j) == 0.0) continue;
        double s = 0.0;
        for (int c = 0; c < hd; ++c) s += dconcat.at(i, off + c) * trace.v.at(j, off + c);
        dattn[static_cast<std::size_t>(j)] = s;
        row_inner += attn.at(i, j) * s;
      }
      for (int j = 0; j < n; ++j) {
        double aij = attn.at(i, j);
        if (aij == 0.0) continue;
        double ds = aij * (dattn[static_cast<std::size_t>(j)] - row_inner) * scale;
        for (int c = 0; c < hd; ++c) {
          dq.at(i, off + c) += ds * trace.k.at(j, off + c);
          dk.at(j, off + c) += ds * trace.q.at(i, off + c);
          dv.at(j, off + c) += aij * dconcat.at(i, off + c);
        }
      }
    }
  }
  g.w_q = matmul_tn(dq, trace.a);
  g.w_k = matmul_tn(dk, trace.t);
  g.w_v = matmul_tn(dv, trace.t);
  return flatten(g, cfg);
}

std::pair<double, ParamVector> loss_and_grad(const align::AlignedSample& sample,
                                             const ParamVector& flat, const FusionConfig& cfg) {
  FusionParams p = load(flat, cfg);
  auto [logits, trace] = forward(sample, p, cfg);
  double loss = cross_entropy(logits, static_cast<int>(sample.label));
  return {loss, backward(trace, static_cast<int>(sample.label), p, cfg)};
}

}  // namespace fedfusion::fusion
