#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dsta/tensor.hpp"

namespace dsta {

enum class Axis { spatial, temporal };
enum class Strategy { a, b, c };
enum class ScoreNorm { tanh, softmax };

inline const char* axis_name(Axis a) { return a == Axis::spatial ? "spatial" : "temporal"; }

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::a: return "a";
    case Strategy::b: return "b";
    default: return "c";
  }
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "a") return Strategy::a;
  if (s == "b") return Strategy::b;
  if (s == "c") return Strategy::c;
  throw std::invalid_argument("unknown attention strategy: " + std::string(s));
}

// Per-module attention configuration. The score path is: embed with two
// linear maps to width c_e, score with the chosen strategy, normalize
// (tanh by default), optionally add the learned global map, then apply the
// map to the un-embedded input view.
struct AttentionConfig {
  Axis axis = Axis::spatial;
  Strategy strategy = Strategy::c;
  std::size_t heads = 3;
  std::size_t c_in = 0;
  std::size_t c_e = 0;
  std::size_t c_out = 0;
  bool use_sgr = false;
  double alpha = 1.0;
  ScoreNorm score_norm = ScoreNorm::tanh;
  // Divide raw scores by sqrt(c_e) before normalization.
  bool scale_logits = true;
  // Average (rather than sum) the per-frame score contributions; with a
  // tanh normalizer the magnitude of the sum matters, so this is on by
  // default. Turn off for the literal summed form.
  bool score_mean = true;
  double lrelu_slope = 0.01;
  bool post_join_lrelu = true;  // experiment knob

  void validate() const {
    if (heads < 1) throw std::invalid_argument("attention heads must be >= 1");
    if (c_in < 1 || c_e < 1 || c_out < 1) {
      throw std::invalid_argument("attention channel widths must be positive");
    }
    if (use_sgr && axis == Axis::temporal) {
      throw std::invalid_argument(
          "global regularization is spatial-only: temporal joints carry no fixed semantics");
    }
  }
};

// One normalized E x E attention map captured during a forward pass.
// For strategy a (one map per frame) this holds the per-frame average.
struct AttentionMap {
  std::size_t layer = 0;
  std::size_t head = 0;
  Axis axis = Axis::spatial;
  std::size_t extent = 0;
  std::vector<double> values;  // extent * extent, row-major
};

inline void write_attention_csv(std::ostream& os, const std::vector<AttentionMap>& maps) {
  os << "layer,head,axis,row,col,value\n";
  for (const AttentionMap& m : maps) {
    for (std::size_t r = 0; r < m.extent; ++r)
      for (std::size_t c = 0; c < m.extent; ++c) {
        os << m.layer << ',' << m.head << ',' << axis_name(m.axis) << ',' << r << ',' << c
           << ',' << detail::format_double(m.values[r * m.extent + c]) << '\n';
      }
  }
}

// ---------------------------------------------------------------------------
// Decoupled position encoding
// ---------------------------------------------------------------------------

// Sinusoidal code: sin(p / 10000^(2*floor(i/2)/width)) for even i, cos of
// the same argument for odd i.
inline double sinusoidal_pe(std::size_t p, std::size_t i, std::size_t width) {
  if (i >= width) {
    throw std::invalid_argument("position encoding dimension " + std::to_string(i) +
                                " out of range [0," + std::to_string(width) + ")");
  }
  const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
  const double arg = static_cast<double>(p) / std::pow(10000.0, exponent);
  return (i % 2 == 0) ? std::sin(arg) : std::cos(arg);
}

// Codes for positions 0..count-1, one row per position.
inline Tensor positional_codes(std::size_t count, std::size_t width) {
  Tensor codes({count, width});
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t i = 0; i < width; ++i) codes.at(p, i) = sinusoidal_pe(p, i, width);
  return codes;
}

// Spatial axis: joint n gets the code for position n in every frame.
// Temporal axis: frame t gets the code for position t at every joint.
inline Tensor decoupled_pe_tensor(std::size_t n, std::size_t t, std::size_t c, Axis axis) {
  Tensor codes = positional_codes(axis == Axis::spatial ? n : t, c);
  if (const char* env = std::getenv("DSTA_PE_SCALE")) {  // TEMP diagnostic hook
    const double k = std::atof(env);
    for (double& v : codes.values()) v *= k;
  }
  Tensor pe({n, t, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t k = 0; k < c; ++k)
        pe.at(i, j, k) = axis == Axis::spatial ? codes.at(i, k) : codes.at(j, k);
  return pe;
}

inline Tensor add_decoupled_pe(const Tensor& x, Axis axis) {
  if (x.ndim() != 3) {
    throw ShapeError("add_decoupled_pe expects [joints x frames x channels], got " +
                     shape_str(x.shape()));
  }
  return add(x, decoupled_pe_tensor(x.dim(0), x.dim(1), x.dim(2), axis));
}

// ---------------------------------------------------------------------------
// Attention-specific tensor ops
// ---------------------------------------------------------------------------

// out[f,e,e'] = sum_c q[e,f,c] * k[e',f,c]  (one score map per frame).
inline Tensor frame_scores(const Tensor& q, const Tensor& k) {
  if (q.ndim() != 3 || k.ndim() != 3 || q.shape() != k.shape()) {
    throw ShapeError("frame_scores embedding mismatch: " + shape_str(q.shape()) + " vs " +
                     shape_str(k.shape()));
  }
  const std::size_t e = q.dim(0), f = q.dim(1), c = q.dim(2);
  const bool tracked = detail::track({&q, &k});
  Tensor out = detail::make_output({f, e, e}, tracked);
  for (std::size_t ff = 0; ff < f; ++ff)
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < e; ++j) {
        double acc = 0.0;
        for (std::size_t cc = 0; cc < c; ++cc) acc += q.at(i, ff, cc) * k.at(j, ff, cc);
        out.at(ff, i, j) = acc;
      }
  detail::ensure_finite(out, "frame_scores");
  if (tracked) {
    Tensor qc = q, kc = k, oc = out;
    Tape::active()->record([qc, kc, oc, e, f, c]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      auto* qg = detail::grad_sink(qc);
      auto* kg = detail::grad_sink(kc);
      for (std::size_t ff = 0; ff < f; ++ff)
        for (std::size_t i = 0; i < e; ++i)
          for (std::size_t j = 0; j < e; ++j) {
            const double g = og[(ff * e + i) * e + j];
            if (qg)
              for (std::size_t cc = 0; cc < c; ++cc)
                (*qg)[(i * f + ff) * c + cc] += g * kc.at(j, ff, cc);
            if (kg)
              for (std::size_t cc = 0; cc < c; ++cc)
                (*kg)[(j * f + ff) * c + cc] += g * qc.at(i, ff, cc);
          }
    });
  }
  return out;
}

// out[e,c] = sum_f x[e,f,c]  (sum over the middle dim).
inline Tensor sum_mid(const Tensor& x) {
  if (x.ndim() != 3) {
    throw ShapeError("sum_mid expects a 3-d tensor, got " + shape_str(x.shape()));
  }
  const std::size_t e = x.dim(0), f = x.dim(1), c = x.dim(2);
  const bool tracked = detail::track({&x});
  Tensor out = detail::make_output({e, c}, tracked);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t ff = 0; ff < f; ++ff)
      for (std::size_t cc = 0; cc < c; ++cc) out.at(i, cc) += x.at(i, ff, cc);
  detail::ensure_finite(out, "sum_mid");
  if (tracked) {
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, e, f, c]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* xg = detail::grad_sink(xc)) {
        for (std::size_t i = 0; i < e; ++i)
          for (std::size_t ff = 0; ff < f; ++ff)
            for (std::size_t cc = 0; cc < c; ++cc)
              (*xg)[(i * f + ff) * c + cc] += og[i * c + cc];
      }
    });
  }
  return out;
}

// out[e,f,c] = sum_e' maps[f,e,e'] * vals[e',f,c]  (per-frame map apply).
inline Tensor apply_frame_maps(const Tensor& maps, const Tensor& vals) {
  if (maps.ndim() != 3 || vals.ndim() != 3 || maps.dim(1) != maps.dim(2) ||
      maps.dim(0) != vals.dim(1) || maps.dim(1) != vals.dim(0)) {
    throw ShapeError("apply_frame_maps shape mismatch: maps " + shape_str(maps.shape()) +
                     ", values " + shape_str(vals.shape()));
  }
  const std::size_t f = maps.dim(0), e = maps.dim(1), c = vals.dim(2);
  const bool tracked = detail::track({&maps, &vals});
  Tensor out = detail::make_output({e, f, c}, tracked);
  for (std::size_t ff = 0; ff < f; ++ff)
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < e; ++j) {
        const double m = maps.at(ff, i, j);
        for (std::size_t cc = 0; cc < c; ++cc) out.at(i, ff, cc) += m * vals.at(j, ff, cc);
      }
  detail::ensure_finite(out, "apply_frame_maps");
  if (tracked) {
    Tensor mc = maps, vc = vals, oc = out;
    Tape::active()->record([mc, vc, oc, e, f, c]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      auto* mg = detail::grad_sink(mc);
      auto* vg = detail::grad_sink(vc);
      for (std::size_t ff = 0; ff < f; ++ff)
        for (std::size_t i = 0; i < e; ++i)
          for (std::size_t j = 0; j < e; ++j) {
            if (mg) {
              double acc = 0.0;
              for (std::size_t cc = 0; cc < c; ++cc)
                acc += og[(i * f + ff) * c + cc] * vc.at(j, ff, cc);
              (*mg)[(ff * e + i) * e + j] += acc;
            }
            if (vg) {
              const double m = mc.at(ff, i, j);
              for (std::size_t cc = 0; cc < c; ++cc)
                (*vg)[(j * f + ff) * c + cc] += m * og[(i * f + ff) * c + cc];
            }
          }
    });
  }
  return out;
}

// out = base + alpha * g, with g broadcast over the leading dim when base
// is a per-frame map stack.
inline Tensor add_scaled_broadcast(const Tensor& base, const Tensor& g, double alpha) {
  if (g.ndim() != 2 || g.dim(0) != g.dim(1)) {
    throw ShapeError("global map must be square, got " + shape_str(g.shape()));
  }
  const std::size_t n2 = g.size();
  const std::size_t blocks = base.size() / n2;
  const bool block_ok =
      (base.ndim() == 2 && base.shape() == g.shape()) ||
      (base.ndim() == 3 && base.dim(1) == g.dim(0) && base.dim(2) == g.dim(1));
  if (!block_ok) {
    throw ShapeError("add_scaled_broadcast shape mismatch: base " + shape_str(base.shape()) +
                     ", map " + shape_str(g.shape()));
  }
  const bool tracked = detail::track({&base, &g});
  Tensor out = detail::make_output(base.shape(), tracked);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < n2; ++i)
      out.at(b * n2 + i) = base.at(b * n2 + i) + alpha * g.at(i);
  detail::ensure_finite(out, "add_scaled_broadcast");
  if (tracked) {
    Tensor bc = base, gc = g, oc = out;
    Tape::active()->record([bc, gc, oc, blocks, n2, alpha]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* bg = detail::grad_sink(bc)) {
        for (std::size_t i = 0; i < blocks * n2; ++i) (*bg)[i] += og[i];
      }
      if (auto* gg = detail::grad_sink(gc)) {
        for (std::size_t b = 0; b < blocks; ++b)
          for (std::size_t i = 0; i < n2; ++i) (*gg)[i] += alpha * og[b * n2 + i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score strategies
// ---------------------------------------------------------------------------

// Raw score maps from the embedded inputs xq, xk (both [E x F x C_e]):
//   a: one map per frame, [F x E x E]
//   b: one shared map summed over all ordered frame pairs, [E x E]
//   c: one shared map summed over frames, [E x E]; computed as a single
//      E x (F*C_e) product
// scale_by_width divides by the square root of the contracted width of the
// literal computation (C_e per frame for a, F*C_e for c, F^2*C_e for b);
// mean_over_frames divides the summed forms by the number of summed maps
// (F for c, F^2 for b). At F = 1 every strategy and flag combination
// coincides.
inline Tensor attention_logits(const Tensor& xq, const Tensor& xk, Strategy strategy,
                               bool scale_by_width = false, bool mean_over_frames = false) {
  if (xq.ndim() != 3 || xk.ndim() != 3 || xq.shape() != xk.shape()) {
    throw ShapeError("attention_logits embedding width mismatch: " + shape_str(xq.shape()) +
                     " vs " + shape_str(xk.shape()));
  }
  const std::size_t e = xq.dim(0), f = xq.dim(1), c = xq.dim(2);
  double factor = 1.0;
  Tensor raw;
  switch (strategy) {
    case Strategy::a:
      raw = frame_scores(xq, xk);
      if (scale_by_width) factor /= std::sqrt(static_cast<double>(c));
      break;
    case Strategy::b: {
      // sum_t sum_tau sigma(X_t) phi(X_tau)' == (sum_t sigma(X_t)) (sum_tau phi(X_tau))'
      raw = matmul_nt(sum_mid(xq), sum_mid(xk));
      if (scale_by_width) factor /= std::sqrt(static_cast<double>(f * f * c));
      if (mean_over_frames) factor /= static_cast<double>(f * f);
      break;
    }
    case Strategy::c: {
      Tensor q2 = xq.reshape({e, f * c});
      Tensor k2 = xk.reshape({e, f * c});
      raw = matmul_nt(q2, k2);
      if (scale_by_width) factor /= std::sqrt(static_cast<double>(f * c));
      if (mean_over_frames) factor /= static_cast<double>(f);
      break;
    }
  }
  return factor == 1.0 ? raw : scale(raw, factor);
}

// Adds the learned global map to normalized spatial scores: out = scores + alpha * G.
inline Tensor apply_sgr(const Tensor& scores_normed, const Parameter& g, double alpha,
                        Axis axis) {
  if (axis != Axis::spatial) {
    throw std::invalid_argument("apply_sgr: global regularization is only added for "
                                "spatial attention");
  }
  return add_scaled_broadcast(scores_normed, g.tensor, alpha);
}

// ---------------------------------------------------------------------------
// Attention head and module
// ---------------------------------------------------------------------------

struct AttentionHeadWeights {
  ParameterPtr sigma_w, sigma_b, phi_w, phi_b;
};

// Single head on an axis-major view [E x F x C_in]: embed, score, normalize,
// regularize, then multiply the map with the un-embedded view. The captured
// map is the normalized map before the global term (for strategy a, the
// per-frame average).
inline Tensor attention_head_forward(const Tensor& x_view, const AttentionConfig& cfg,
                                     const AttentionHeadWeights& w, const ParameterPtr& g,
                                     AttentionMap* map_out = nullptr) {
  const std::size_t e = x_view.dim(0), f = x_view.dim(1), c = x_view.dim(2);
  Tensor flat = x_view.reshape({e * f, c});
  Tensor xq = linear(flat, w.sigma_w->tensor, w.sigma_b->tensor).reshape({e, f, cfg.c_e});
  Tensor xk = linear(flat, w.phi_w->tensor, w.phi_b->tensor).reshape({e, f, cfg.c_e});
  Tensor raw = attention_logits(xq, xk, cfg.strategy, cfg.scale_logits, cfg.score_mean);

  Tensor normed;
  if (cfg.score_norm == ScoreNorm::tanh) {
    normed = activation(raw, Activation::tanh);
  } else if (raw.ndim() == 2) {
    normed = softmax_rows(raw);
  } else {
    normed = softmax_rows(raw.reshape({f * e, e})).reshape({f, e, e});
  }

  if (map_out) {
    map_out->axis = cfg.axis;
    map_out->extent = e;
    map_out->values.assign(e * e, 0.0);
    if (normed.ndim() == 2) {
      map_out->values = normed.values();
    } else {
      for (std::size_t ff = 0; ff < f; ++ff)
        for (std::size_t i = 0; i < e * e; ++i)
          map_out->values[i] += normed.at(ff * e * e + i);
      for (double& v : map_out->values) v /= static_cast<double>(f);
    }
  }

  Tensor final_map = normed;
  if (cfg.use_sgr && g) {
    final_map = add_scaled_broadcast(normed, g->tensor, cfg.alpha);
  }

  if (final_map.ndim() == 3) {
    return apply_frame_maps(final_map, x_view);
  }
  return matmul(final_map, x_view.reshape({e, f * c})).reshape({e, f, c});
}

namespace detail {

inline ParameterPtr init_linear_weight(ParamRegistry& reg, const std::string& name,
                                       std::size_t fan_in, Shape shape, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return reg.add(name, Tensor::uniform(std::move(shape), rng, -bound, bound));
}

}  // namespace detail

// One complete attention module (the repeated block of the network): PE,
// S heads, concat, output projection, residual, point-wise feed-forward,
// second residual, leaky-ReLU after each residual join.
class AttentionModule {
 public:
  AttentionModule(AttentionConfig cfg, std::size_t num_joints, std::size_t num_frames,
                  const std::string& prefix, Rng& rng, ParamRegistry& reg)
      : cfg_(cfg), num_joints_(num_joints), num_frames_(num_frames) {
    cfg_.validate();
    pe_ = decoupled_pe_tensor(num_joints_, num_frames_, cfg_.c_in, cfg_.axis);
    for (std::size_t s = 0; s < cfg_.heads; ++s) {
      const std::string hp = prefix + ".head" + std::to_string(s);
      AttentionHeadWeights w;
      w.sigma_w = detail::init_linear_weight(reg, hp + ".sigma_w", cfg_.c_in,
                                             {cfg_.c_in, cfg_.c_e}, rng);
      w.sigma_b = detail::init_linear_weight(reg, hp + ".sigma_b", cfg_.c_in, {cfg_.c_e}, rng);
      w.phi_w = detail::init_linear_weight(reg, hp + ".phi_w", cfg_.c_in,
                                           {cfg_.c_in, cfg_.c_e}, rng);
      w.phi_b = detail::init_linear_weight(reg, hp + ".phi_b", cfg_.c_in, {cfg_.c_e}, rng);
      heads_.push_back(std::move(w));
    }
    const std::size_t cat_w = cfg_.c_in * cfg_.heads;
    out_w_ = detail::init_linear_weight(reg, prefix + ".out_w", cat_w, {cat_w, cfg_.c_out}, rng);
    out_b_ = detail::init_linear_weight(reg, prefix + ".out_b", cat_w, {cfg_.c_out}, rng);
    ff1_w_ = detail::init_linear_weight(reg, prefix + ".ff1_w", cfg_.c_out,
                                        {cfg_.c_out, cfg_.c_out}, rng);
    ff1_b_ = detail::init_linear_weight(reg, prefix + ".ff1_b", cfg_.c_out, {cfg_.c_out}, rng);
    ff2_w_ = detail::init_linear_weight(reg, prefix + ".ff2_w", cfg_.c_out,
                                        {cfg_.c_out, cfg_.c_out}, rng);
    ff2_b_ = detail::init_linear_weight(reg, prefix + ".ff2_b", cfg_.c_out, {cfg_.c_out}, rng);
    if (cfg_.c_in != cfg_.c_out) {
      res_w_ = detail::init_linear_weight(reg, prefix + ".res_w", cfg_.c_in,
                                          {cfg_.c_in, cfg_.c_out}, rng);
      res_b_ = detail::init_linear_weight(reg, prefix + ".res_b", cfg_.c_in, {cfg_.c_out}, rng);
    }
    if (cfg_.axis == Axis::spatial && cfg_.use_sgr) {
      // Zero init: the regularizer starts as a no-op and consumes no
      // rng draws, so seeded init matches the unregularized module.
      gmap_ = reg.add(prefix + ".gmap", Tensor({num_joints_, num_joints_}));
    }
  }

  // x: [N x T x c_in] -> [N x T x c_out]
  Tensor forward(const Tensor& x, std::vector<AttentionMap>* capture = nullptr,
                 std::size_t layer_index = 0) const {
    if (x.ndim() != 3 || x.dim(0) != num_joints_ || x.dim(1) != num_frames_ ||
        x.dim(2) != cfg_.c_in) {
      throw ShapeError("attention module expects [" + std::to_string(num_joints_) + "x" +
                       std::to_string(num_frames_) + "x" + std::to_string(cfg_.c_in) +
                       "], got " + shape_str(x.shape()));
    }
    Tensor x_pe = add(x, pe_);
    Tensor view = cfg_.axis == Axis::spatial ? x_pe : transpose01(x_pe);
    const std::size_t e = view.dim(0), f = view.dim(1);

    std::vector<Tensor> feats;
    feats.reserve(cfg_.heads);
    for (std::size_t s = 0; s < cfg_.heads; ++s) {
      if (capture) {
        AttentionMap m;
        m.layer = layer_index;
        m.head = s;
        feats.push_back(attention_head_forward(view, cfg_, heads_[s], gmap_, &m));
        capture->push_back(std::move(m));
      } else {
        feats.push_back(attention_head_forward(view, cfg_, heads_[s], gmap_));
      }
    }
    Tensor cat = concat_last(feats);
    Tensor proj = linear(cat.reshape({e * f, cfg_.c_in * cfg_.heads}), out_w_->tensor,
                         out_b_->tensor)
                      .reshape({e, f, cfg_.c_out});
    if (cfg_.axis == Axis::temporal) proj = transpose01(proj);

    Tensor res = x;
    if (cfg_.c_in != cfg_.c_out) {
      res = linear(x.reshape({num_joints_ * num_frames_, cfg_.c_in}), res_w_->tensor,
                   res_b_->tensor)
                .reshape({num_joints_, num_frames_, cfg_.c_out});
    }
    Tensor joined = add(proj, res);
    Tensor y1 = cfg_.post_join_lrelu
                    ? activation(joined, Activation::leaky_relu, cfg_.lrelu_slope)
                    : joined;

    Tensor h = activation(linear(y1.reshape({num_joints_ * num_frames_, cfg_.c_out}),
                                 ff1_w_->tensor, ff1_b_->tensor),
                          Activation::leaky_relu, cfg_.lrelu_slope);
    Tensor ff = linear(h, ff2_w_->tensor, ff2_b_->tensor)
                    .reshape({num_joints_, num_frames_, cfg_.c_out});
    Tensor out = add(y1, ff);
    return cfg_.post_join_lrelu
               ? activation(out, Activation::leaky_relu, cfg_.lrelu_slope)
               : out;
  }

  const AttentionConfig& config() const { return cfg_; }
  const ParameterPtr& global_map() const { return gmap_; }

 private:
  AttentionConfig cfg_;
  std::size_t num_joints_, num_frames_;
  Tensor pe_;
  std::vector<AttentionHeadWeights> heads_;
  ParameterPtr out_w_, out_b_, ff1_w_, ff1_b_, ff2_w_, ff2_b_;
  ParameterPtr res_w_, res_b_;
  ParameterPtr gmap_;
};

// ---------------------------------------------------------------------------
// Score-computation cost model
// ---------------------------------------------------------------------------

// Exact multiply-add counts for computing the attention scores of one
// spatial+temporal pair of modules (or the flattened single-sequence
// baseline) with the naive algorithm:
//   a, c:  T*N^2*C + N*T^2*C
//   b:     T^2*N^2*C + N^2*T^2*C
//   flat:  (N*T)^2 * C
inline std::uint64_t flop_estimate(Strategy s, std::uint64_t n, std::uint64_t t,
                                   std::uint64_t c) {
  if (n == 0 || t == 0 || c == 0) {
    throw std::invalid_argument("flop_estimate requires positive dimensions");
  }
  switch (s) {
    case Strategy::a:
    case Strategy::c:
      return t * n * n * c + n * t * t * c;
    case Strategy::b:
      return t * t * n * n * c + n * n * t * t * c;
  }
  return 0;
}

inline std::uint64_t flop_estimate_flat(std::uint64_t n, std::uint64_t t, std::uint64_t c) {
  if (n == 0 || t == 0 || c == 0) {
    throw std::invalid_argument("flop_estimate requires positive dimensions");
  }
  return (n * t) * (n * t) * c;
}

inline std::uint64_t flop_estimate(std::string_view kind, std::uint64_t n, std::uint64_t t,
                                   std::uint64_t c) {
  if (kind == "flat") return flop_estimate_flat(n, t, c);
  return flop_estimate(parse_strategy(kind), n, t, c);
}

}  // namespace dsta
