#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dsta/attention.hpp"
#include "dsta/bench.hpp"
#include "support/gradcheck.hpp"

using namespace dsta;

namespace {

// Literal per-frame score oracle: map[f][i][j] = sum_c q[i,f,c] * k[j,f,c].
std::vector<double> oracle_per_frame(const Tensor& q, const Tensor& k) {
  const std::size_t e = q.dim(0), f = q.dim(1), c = q.dim(2);
  std::vector<double> maps(f * e * e, 0.0);
  for (std::size_t ff = 0; ff < f; ++ff)
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < e; ++j) {
        double acc = 0.0;
        for (std::size_t cc = 0; cc < c; ++cc) acc += q.at(i, ff, cc) * k.at(j, ff, cc);
        maps[(ff * e + i) * e + j] = acc;
      }
  return maps;
}

// Literal all-pairs oracle: map[i][j] = sum_t sum_tau sum_c q[i,t,c]*k[j,tau,c].
std::vector<double> oracle_all_pairs(const Tensor& q, const Tensor& k) {
  const std::size_t e = q.dim(0), f = q.dim(1), c = q.dim(2);
  std::vector<double> map(e * e, 0.0);
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t tau = 0; tau < f; ++tau)
      for (std::size_t i = 0; i < e; ++i)
        for (std::size_t j = 0; j < e; ++j) {
          double acc = 0.0;
          for (std::size_t cc = 0; cc < c; ++cc) acc += q.at(i, t, cc) * k.at(j, tau, cc);
          map[i * e + j] += acc;
        }
  return map;
}

// Literal summed-frames oracle: map[i][j] = sum_t sum_c q[i,t,c]*k[j,t,c].
std::vector<double> oracle_summed_frames(const Tensor& q, const Tensor& k) {
  const std::size_t e = q.dim(0), f = q.dim(1), c = q.dim(2);
  std::vector<double> map(e * e, 0.0);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < e; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < f; ++t)
        for (std::size_t cc = 0; cc < c; ++cc) acc += q.at(i, t, cc) * k.at(j, t, cc);
      map[i * e + j] = acc;
    }
  return map;
}

AttentionConfig tiny_cfg(Axis axis, std::size_t c_in, std::size_t c_e, std::size_t c_out,
                         std::size_t heads = 1) {
  AttentionConfig cfg;
  cfg.axis = axis;
  cfg.c_in = c_in;
  cfg.c_e = c_e;
  cfg.c_out = c_out;
  cfg.heads = heads;
  cfg.use_sgr = false;
  return cfg;
}

}  // namespace

TEST_CASE("sinusoidal position encoding values") {
  CHECK(sinusoidal_pe(0, 0, 8) == 0.0);
  CHECK(sinusoidal_pe(0, 2, 8) == 0.0);
  CHECK(sinusoidal_pe(0, 1, 8) == 1.0);
  CHECK(sinusoidal_pe(0, 7, 8) == 1.0);
  CHECK(sinusoidal_pe(1, 0, 4) == Catch::Approx(std::sin(1.0)).margin(1e-15));
  CHECK(sinusoidal_pe(1, 0, 4) == Catch::Approx(0.8414709848078965).margin(1e-12));
  // Odd index uses the same argument as its even partner.
  CHECK(sinusoidal_pe(3, 5, 8) == Catch::Approx(std::cos(3.0 / std::pow(10000.0, 4.0 / 8.0))).margin(1e-15));
  CHECK_THROWS_AS(sinusoidal_pe(0, 4, 4), std::invalid_argument);
}

TEST_CASE("decoupled position encoding exposes codes on zero input") {
  Tensor zero({2, 3, 4});
  Tensor sp = add_decoupled_pe(zero, Axis::spatial);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(sp.at(0, t, c) == sinusoidal_pe(0, c, 4));
      CHECK(sp.at(1, t, c) == sinusoidal_pe(1, c, 4));
    }

  Tensor te = add_decoupled_pe(zero, Axis::temporal);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(te.at(n, 0, c) == sinusoidal_pe(0, c, 4));
      CHECK(te.at(n, 2, c) == sinusoidal_pe(2, c, 4));
    }
}

TEST_CASE("spatial codes are frame-invariant, temporal codes joint-invariant") {
  Tensor sp = decoupled_pe_tensor(5, 7, 6, Axis::spatial);
  for (std::size_t n = 0; n < 5; ++n)
    for (std::size_t t = 1; t < 7; ++t)
      for (std::size_t c = 0; c < 6; ++c) CHECK(sp.at(n, t, c) == sp.at(n, 0, c));

  Tensor te = decoupled_pe_tensor(5, 7, 6, Axis::temporal);
  for (std::size_t n = 1; n < 5; ++n)
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t c = 0; c < 6; ++c) CHECK(te.at(n, t, c) == te.at(0, t, c));
}

TEST_CASE("combined codes are pairwise distinct at small scale") {
  const std::size_t n = 6, t = 9, c = 8;
  Tensor sp = positional_codes(n, c);
  Tensor te = positional_codes(t, c);
  double min_gap = 1e300;
  for (std::size_t a = 0; a < n * t; ++a)
    for (std::size_t b = a + 1; b < n * t; ++b) {
      const std::size_t an = a / t, at = a % t, bn = b / t, bt = b % t;
      double linf = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        linf = std::max(linf, std::abs(sp.at(an, i) - sp.at(bn, i)));
        linf = std::max(linf, std::abs(te.at(at, i) - te.at(bt, i)));
      }
      min_gap = std::min(min_gap, linf);
    }
  CHECK(min_gap > 0.0);
}

TEST_CASE("attention_logits matches the literal loop oracles") {
  Rng rng(31);
  for (std::size_t e : {2, 3, 5}) {
    for (std::size_t f : {1, 2, 4}) {
      for (std::size_t c : {1, 4}) {
        Tensor q = Tensor::uniform({e, f, c}, rng, -1.0, 1.0);
        Tensor k = Tensor::uniform({e, f, c}, rng, -1.0, 1.0);

        Tensor la = attention_logits(q, k, Strategy::a, false, false);
        const auto oa = oracle_per_frame(q, k);
        REQUIRE(la.shape() == Shape{f, e, e});
        for (std::size_t i = 0; i < oa.size(); ++i)
          CHECK(std::abs(la.at(i) - oa[i]) <= 1e-12);

        Tensor lb = attention_logits(q, k, Strategy::b, false, false);
        const auto ob = oracle_all_pairs(q, k);
        REQUIRE(lb.shape() == Shape{e, e});
        for (std::size_t i = 0; i < ob.size(); ++i)
          CHECK(std::abs(lb.at(i) - ob[i]) <= 1e-12);

        Tensor lc = attention_logits(q, k, Strategy::c, false, false);
        const auto oc = oracle_summed_frames(q, k);
        REQUIRE(lc.shape() == Shape{e, e});
        for (std::size_t i = 0; i < oc.size(); ++i)
          CHECK(std::abs(lc.at(i) - oc[i]) <= 1e-12);

        if (f == 1) {
          // All three strategies collapse to the same single product.
          for (std::size_t i = 0; i < e * e; ++i) {
            CHECK(la.at(i) == lb.at(i));
            CHECK(la.at(i) == lc.at(i));
          }
        }
      }
    }
  }
}

TEST_CASE("attention_logits trivial and error cases") {
  Tensor zq({3, 2, 2});
  Tensor zk({3, 2, 2});
  for (Strategy s : {Strategy::a, Strategy::b, Strategy::c}) {
    Tensor l = attention_logits(zq, zk, s);
    for (std::size_t i = 0; i < l.size(); ++i) CHECK(l.at(i) == 0.0);
  }
  Tensor wide({3, 2, 4});
  CHECK_THROWS_AS(attention_logits(zq, wide, Strategy::c), ShapeError);
}

TEST_CASE("strategy c on random input equals the per-frame loop-and-sum oracle") {
  Rng rng(77);
  Tensor q = Tensor::uniform({4, 3, 2}, rng, -1.0, 1.0);
  Tensor k = Tensor::uniform({4, 3, 2}, rng, -1.0, 1.0);
  Tensor lc = attention_logits(q, k, Strategy::c, false, false);
  const auto want = oracle_summed_frames(q, k);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(lc.at(i) - want[i]) <= 1e-12);
}

TEST_CASE("strategy c is invariant to frame permutation") {
  Rng rng(41);
  const std::size_t e = 4, f = 5, c = 3;
  Tensor q = Tensor::uniform({e, f, c}, rng, -1.0, 1.0);
  Tensor k = Tensor::uniform({e, f, c}, rng, -1.0, 1.0);
  std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  Tensor qp({e, f, c});
  Tensor kp({e, f, c});
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t ff = 0; ff < f; ++ff)
      for (std::size_t cc = 0; cc < c; ++cc) {
        qp.at(i, ff, cc) = q.at(i, perm[ff], cc);
        kp.at(i, ff, cc) = k.at(i, perm[ff], cc);
      }
  Tensor l1 = attention_logits(q, k, Strategy::c, true, true);
  Tensor l2 = attention_logits(qp, kp, Strategy::c, true, true);
  for (std::size_t i = 0; i < l1.size(); ++i) CHECK(std::abs(l1.at(i) - l2.at(i)) <= 1e-12);
}

TEST_CASE("strategy a maps depend only on their own frame") {
  Rng rng(43);
  const std::size_t e = 3, f = 4, c = 2;
  Tensor q = Tensor::uniform({e, f, c}, rng, -1.0, 1.0);
  Tensor k = Tensor::uniform({e, f, c}, rng, -1.0, 1.0);
  Tensor base = attention_logits(q, k, Strategy::a);
  Tensor q2 = q.clone();
  const std::size_t touched = 2;
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t cc = 0; cc < c; ++cc) q2.at(i, touched, cc) += 0.5;
  Tensor changed = attention_logits(q2, k, Strategy::a);
  for (std::size_t ff = 0; ff < f; ++ff)
    for (std::size_t i = 0; i < e * e; ++i) {
      if (ff == touched) continue;
      CHECK(changed.at(ff * e * e + i) == base.at(ff * e * e + i));
    }
  bool any_diff = false;
  for (std::size_t i = 0; i < e * e; ++i)
    any_diff = any_diff || changed.at(touched * e * e + i) != base.at(touched * e * e + i);
  CHECK(any_diff);
}

TEST_CASE("apply_sgr contract") {
  Rng rng(53);
  Tensor normed = Tensor::uniform({4, 4}, rng, -0.9, 0.9);
  Parameter g("gmap", Tensor::uniform({4, 4}, rng, -0.5, 0.5));

  SECTION("alpha zero is exact identity") {
    Tensor out = apply_sgr(normed, g, 0.0, Axis::spatial);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == normed.at(i));
  }
  SECTION("zero map is exact identity") {
    Parameter gz("gz", Tensor({4, 4}));
    Tensor out = apply_sgr(normed, gz, 1.0, Axis::spatial);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == normed.at(i));
  }
  SECTION("pure offset") {
    Tensor zeros({4, 4});
    Parameter ones("ones", Tensor({4, 4}, 1.0));
    Tensor out = apply_sgr(zeros, ones, 0.5, Axis::spatial);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.5);
  }
  SECTION("additivity is exact") {
    Tensor out = apply_sgr(normed, g, 0.7, Axis::spatial);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out.at(i) == normed.at(i) + 0.7 * g.tensor.at(i));
  }
  SECTION("temporal axis is rejected") {
    CHECK_THROWS_AS(apply_sgr(normed, g, 1.0, Axis::temporal), std::invalid_argument);
  }
  SECTION("the global map receives gradients") {
    Tensor input = Tensor::uniform({4, 4}, rng, -1.0, 1.0);
    {
      Tape tape;
      Tensor out = apply_sgr(input, g, 0.25, Axis::spatial);
      Tensor loss = sum_all(out);
      backward(loss);
    }
    for (double gv : g.tensor.grad()) CHECK(gv == Catch::Approx(0.25).margin(1e-15));
  }
}

TEST_CASE("attention config rejects temporal SGR") {
  AttentionConfig cfg = tiny_cfg(Axis::temporal, 4, 2, 4);
  cfg.use_sgr = true;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("attention head forward") {
  Rng rng(61);
  ParamRegistry reg;
  AttentionConfig cfg = tiny_cfg(Axis::spatial, 2, 2, 2);

  AttentionHeadWeights w;
  w.sigma_w = reg.add("h.sigma_w", Tensor::uniform({2, 2}, rng, -0.7, 0.7));
  w.sigma_b = reg.add("h.sigma_b", Tensor({2}));
  w.phi_w = reg.add("h.phi_w", Tensor::uniform({2, 2}, rng, -0.7, 0.7));
  w.phi_b = reg.add("h.phi_b", Tensor({2}));

  SECTION("zero input with zero biases gives zero features") {
    Tensor zero({3, 2, 2});
    AttentionMap m;
    Tensor feats = attention_head_forward(zero, cfg, w, nullptr, &m);
    for (std::size_t i = 0; i < feats.size(); ++i) CHECK(feats.at(i) == 0.0);
    for (double v : m.values) CHECK(v == 0.0);
  }

  SECTION("tanh map entries lie strictly inside (-1,1)") {
    Tensor x = Tensor::uniform({3, 2, 2}, rng, -3.0, 3.0);
    AttentionMap m;
    attention_head_forward(x, cfg, w, nullptr, &m);
    for (double v : m.values) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }

  SECTION("features equal the explicit map-times-input oracle") {
    Tensor x = Tensor::uniform({3, 2, 2}, rng, -1.0, 1.0);
    AttentionMap m;
    Tensor feats = attention_head_forward(x, cfg, w, nullptr, &m);
    const std::size_t e = 3, f = 2, c = 2;
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t ff = 0; ff < f; ++ff)
        for (std::size_t cc = 0; cc < c; ++cc) {
          double want = 0.0;
          for (std::size_t j = 0; j < e; ++j) want += m.values[i * e + j] * x.at(j, ff, cc);
          CHECK(std::abs(feats.at(i, ff, cc) - want) <= 1e-12);
        }
  }
}

TEST_CASE("attention module forward") {
  SECTION("output shape is N x T x c_out") {
    Rng rng(71);
    ParamRegistry reg;
    AttentionConfig cfg = tiny_cfg(Axis::spatial, 3, 2, 5, 2);
    AttentionModule mod(cfg, 4, 6, "m", rng, reg);
    Tensor x = Tensor::uniform({4, 6, 3}, rng, -1.0, 1.0);
    Tensor y = mod.forward(x);
    CHECK(y.shape() == Shape{4, 6, 5});

    AttentionConfig tcfg = tiny_cfg(Axis::temporal, 3, 2, 5, 2);
    ParamRegistry treg;
    AttentionModule tmod(tcfg, 4, 6, "t", rng, treg);
    CHECK(tmod.forward(x).shape() == Shape{4, 6, 5});
  }

  SECTION("zero weights reduce the module to the residual stream") {
    Rng rng(73);
    ParamRegistry reg;
    AttentionConfig cfg = tiny_cfg(Axis::spatial, 4, 2, 4, 2);
    AttentionModule mod(cfg, 3, 5, "m", rng, reg);
    for (auto& p : reg.params()) std::fill(p->tensor.values().begin(), p->tensor.values().end(), 0.0);
    Tensor x = Tensor::uniform({3, 5, 4}, rng, -1.0, 1.0);
    Tensor y = mod.forward(x);
    // The two residual joins each apply a leaky ReLU.
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double l1 = x.at(i) >= 0.0 ? x.at(i) : 0.01 * x.at(i);
      const double want = l1 >= 0.0 ? l1 : 0.01 * l1;
      CHECK(y.at(i) == want);
    }
  }

  SECTION("full-module gradient check against finite differences") {
    Rng rng(79);
    ParamRegistry reg;
    AttentionConfig cfg = tiny_cfg(Axis::spatial, 8, 2, 8, 2);
    cfg.use_sgr = true;
    AttentionModule mod(cfg, 4, 5, "m", rng, reg);
    Tensor x = Tensor::uniform({4, 5, 8}, rng, -1.0, 1.0);
    std::vector<double> weights;
    Rng wr(997);
    for (std::size_t i = 0; i < 4 * 5 * 8; ++i) weights.push_back(wr.uniform(-1.0, 1.0));

    auto loss_value = [&] {
      Tensor y = mod.forward(x);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y.at(i) * weights[i];
      return acc;
    };
    {
      Tape tape;
      Tensor y = mod.forward(x);
      Tensor w({y.size()}, weights);
      Tensor loss = sum_all(mul(y.reshape({y.size()}), w));
      backward(loss);
    }
    Rng coord_rng(13);
    double worst = 0.0;
    for (auto& p : reg.params()) {
      worst = std::max(worst, gradcheck::max_fd_error(p->tensor, loss_value, coord_rng, 10));
      p->tensor.zero_grad();
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("sgr module-level contract") {
  auto build = [](bool use_sgr, double alpha) {
    Rng rng(83);
    auto reg = std::make_shared<ParamRegistry>();
    AttentionConfig cfg = tiny_cfg(Axis::spatial, 3, 2, 3, 2);
    cfg.use_sgr = use_sgr;
    cfg.alpha = alpha;
    auto mod = std::make_shared<AttentionModule>(cfg, 4, 4, "m", rng, *reg);
    return std::pair(reg, mod);
  };
  Rng xr(29);
  Tensor x = Tensor::uniform({4, 4, 3}, xr, -1.0, 1.0);

  auto [reg_off, mod_off] = build(false, 1.0);
  auto [reg_zero_alpha, mod_zero_alpha] = build(true, 0.0);
  auto [reg_zero_g, mod_zero_g] = build(true, 1.0);  // G initializes to zero

  Tensor y_off = mod_off->forward(x);
  Tensor y_alpha0 = mod_zero_alpha->forward(x);
  Tensor y_g0 = mod_zero_g->forward(x);
  for (std::size_t i = 0; i < y_off.size(); ++i) {
    CHECK(y_alpha0.at(i) == y_off.at(i));
    CHECK(y_g0.at(i) == y_off.at(i));
  }

  // A spatial module with SGR owns exactly one square global map.
  std::size_t gmaps = 0;
  for (const auto& p : reg_zero_g->params())
    if (p->name.find("gmap") != std::string::npos) ++gmaps;
  CHECK(gmaps == 1);
}

TEST_CASE("flop estimates and instrumented counts") {
  CHECK(flop_estimate(Strategy::a, 2, 3, 1) == 30);
  CHECK(flop_estimate("flat", 2, 3, 1) == 36);
  CHECK(flop_estimate(Strategy::c, 2, 3, 1) == 30);
  CHECK(flop_estimate(Strategy::b, 2, 3, 1) == 72);
  CHECK_THROWS_AS(flop_estimate(Strategy::a, 0, 3, 1), std::invalid_argument);

  const double ratio = static_cast<double>(flop_estimate_flat(25, 128, 64)) /
                       static_cast<double>(flop_estimate(Strategy::c, 25, 128, 64));
  CHECK(flop_estimate_flat(25, 128, 64) == 655360000ull);
  CHECK(flop_estimate(Strategy::c, 25, 128, 64) == 31334400ull);
  CHECK(ratio == Catch::Approx(20.9).margin(0.1));

  for (std::size_t n : {2, 3, 5})
    for (std::size_t t : {2, 4, 8})
      for (std::size_t c : {1, 4}) {
        auto in = bench::ScoreInputs::make(n, t, c, 5);
        for (const char* kind : {"a", "b", "c", "flat"}) {
          CHECK(bench::instrumented_scores(kind, in).madds == flop_estimate(kind, n, t, c));
        }
      }
}

TEST_CASE("timed score paths agree with the instrumented checksums for c and flat") {
  auto in = bench::ScoreInputs::make(4, 6, 3, 9);
  for (const char* kind : {"c", "flat"}) {
    const double instrumented = bench::instrumented_scores(kind, in).checksum;
    const double timed = bench::timed_scores_checksum(kind, in);
    CHECK(timed == Catch::Approx(instrumented).margin(1e-9));
  }
}
