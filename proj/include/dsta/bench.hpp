#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dsta/attention.hpp"
#include "dsta/common.hpp"

// Score-computation harness behind the complexity checks and the bench
// subcommand. The instrumented runners execute the naive per-strategy loop
// nests (the ones the cost model counts) and report exact multiply-add
// counts; the timed runners use the efficient shared-map forms for the
// decoupled strategies and the plain flattened product for the baseline.

namespace dsta::bench {

// Seeded stand-ins for the sigma/phi embeddings of one (N,T,C) problem.
// Spatial buffers are frame-major [T][N][C]; temporal buffers are
// joint-major [N][T][C]; the flat buffer is [N*T][C].
struct ScoreInputs {
  std::size_t n = 0, t = 0, c = 0;
  std::vector<double> q_spatial, k_spatial;
  std::vector<double> q_temporal, k_temporal;
  std::vector<double> q_flat, k_flat;

  static ScoreInputs make(std::size_t n, std::size_t t, std::size_t c, std::uint64_t seed) {
    ScoreInputs in;
    in.n = n;
    in.t = t;
    in.c = c;
    Rng rng(seed);
    auto fill = [&rng](std::vector<double>& v, std::size_t count) {
      v.resize(count);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
    };
    fill(in.q_spatial, n * t * c);
    fill(in.k_spatial, n * t * c);
    fill(in.q_temporal, n * t * c);
    fill(in.k_temporal, n * t * c);
    fill(in.q_flat, n * t * c);
    fill(in.k_flat, n * t * c);
    return in;
  }
};

struct ScoreRun {
  std::uint64_t madds = 0;
  double checksum = 0.0;
};

namespace detail {

inline double sum(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

}  // namespace detail

// Naive loop nests, one counter increment per fused multiply-add.
inline ScoreRun instrumented_scores(std::string_view kind, const ScoreInputs& in) {
  const std::size_t n = in.n, t = in.t, c = in.c;
  ScoreRun run;

  if (kind == "flat") {
    const std::size_t e = n * t;
    std::vector<double> map(e * e, 0.0);
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < e; ++j) {
        double acc = 0.0;
        for (std::size_t cc = 0; cc < c; ++cc) {
          acc += in.q_flat[i * c + cc] * in.k_flat[j * c + cc];
          ++run.madds;
        }
        map[i * e + j] = acc;
      }
    run.checksum = detail::sum(map);
    return run;
  }

  const Strategy s = parse_strategy(kind);
  double checksum = 0.0;

  // Spatial side: N x N maps.
  if (s == Strategy::b) {
    std::vector<double> map(n * n, 0.0);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t tau = 0; tau < t; ++tau)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t cc = 0; cc < c; ++cc) {
              acc += in.q_spatial[(f * n + i) * c + cc] * in.k_spatial[(tau * n + j) * c + cc];
              ++run.madds;
            }
            map[i * n + j] += acc;
          }
    checksum += detail::sum(map);
  } else {
    // a keeps one map per frame, c accumulates them; same count either way.
    std::vector<double> map(n * n, 0.0);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t cc = 0; cc < c; ++cc) {
            acc += in.q_spatial[(f * n + i) * c + cc] * in.k_spatial[(f * n + j) * c + cc];
            ++run.madds;
          }
          if (s == Strategy::c)
            map[i * n + j] += acc;
          else
            checksum += acc;
        }
    if (s == Strategy::c) checksum += detail::sum(map);
  }

  // Temporal side: T x T maps.
  if (s == Strategy::b) {
    std::vector<double> map(t * t, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t1 = 0; t1 < t; ++t1)
          for (std::size_t t2 = 0; t2 < t; ++t2) {
            double acc = 0.0;
            for (std::size_t cc = 0; cc < c; ++cc) {
              acc += in.q_temporal[(i * t + t1) * c + cc] * in.k_temporal[(j * t + t2) * c + cc];
              ++run.madds;
            }
            map[t1 * t + t2] += acc;
          }
    checksum += detail::sum(map);
  } else {
    std::vector<double> map(t * t, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t1 = 0; t1 < t; ++t1)
        for (std::size_t t2 = 0; t2 < t; ++t2) {
          double acc = 0.0;
          for (std::size_t cc = 0; cc < c; ++cc) {
            acc += in.q_temporal[(j * t + t1) * c + cc] * in.k_temporal[(j * t + t2) * c + cc];
            ++run.madds;
          }
          if (s == Strategy::c)
            map[t1 * t + t2] += acc;
          else
            checksum += acc;
        }
    if (s == Strategy::c) checksum += detail::sum(map);
  }

  run.checksum = checksum;
  return run;
}

// Production-form score computation, no counting: decoupled strategies use
// the shared-map contraction (for c, one E x (F*C) product per axis), the
// flat baseline contracts the full N*T sequence.
inline double timed_scores_checksum(std::string_view kind, const ScoreInputs& in) {
  const std::size_t n = in.n, t = in.t, c = in.c;

  auto shared_map = [](const std::vector<double>& q, const std::vector<double>& k,
                       std::size_t e, std::size_t width) {
    // q, k viewed as [e x width]; returns sum of the e x e score map.
    double checksum = 0.0;
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < e; ++j) {
        double acc = 0.0;
        const double* qr = q.data() + i * width;
        const double* kr = k.data() + j * width;
        for (std::size_t w = 0; w < width; ++w) acc += qr[w] * kr[w];
        checksum += acc;
      }
    return checksum;
  };

  if (kind == "flat") {
    return shared_map(in.q_flat, in.k_flat, n * t, c);
  }
  const Strategy s = parse_strategy(kind);
  if (s == Strategy::b) {
    // Factored form: (sum_t sigma)(sum_tau phi)'.
    std::vector<double> qs(n * c, 0.0), ks(n * c, 0.0);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t cc = 0; cc < c; ++cc) {
          qs[i * c + cc] += in.q_spatial[(f * n + i) * c + cc];
          ks[i * c + cc] += in.k_spatial[(f * n + i) * c + cc];
        }
    double checksum = shared_map(qs, ks, n, c);
    std::vector<double> qt(t * c, 0.0), kt(t * c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < t; ++f)
        for (std::size_t cc = 0; cc < c; ++cc) {
          qt[f * c + cc] += in.q_temporal[(i * t + f) * c + cc];
          kt[f * c + cc] += in.k_temporal[(i * t + f) * c + cc];
        }
    return checksum + shared_map(qt, kt, t, c);
  }
  if (s == Strategy::c) {
    // The single big product wants joint-major rows on the spatial side and
    // time-major rows on the temporal side.
    std::vector<double> qs(n * t * c), ks(n * t * c);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t cc = 0; cc < c; ++cc) {
          qs[(i * t + f) * c + cc] = in.q_spatial[(f * n + i) * c + cc];
          ks[(i * t + f) * c + cc] = in.k_spatial[(f * n + i) * c + cc];
        }
    double checksum = shared_map(qs, ks, n, t * c);
    std::vector<double> qt(n * t * c), kt(n * t * c);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < t; ++f)
        for (std::size_t cc = 0; cc < c; ++cc) {
          qt[(f * n + i) * c + cc] = in.q_temporal[(i * t + f) * c + cc];
          kt[(f * n + i) * c + cc] = in.k_temporal[(i * t + f) * c + cc];
        }
    return checksum + shared_map(qt, kt, t, n * c);
  }
  // Strategy a: per-frame maps on both axes.
  double checksum = 0.0;
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t cc = 0; cc < c; ++cc)
          acc += in.q_spatial[(f * n + i) * c + cc] * in.k_spatial[(f * n + j) * c + cc];
        checksum += acc;
      }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t t1 = 0; t1 < t; ++t1)
      for (std::size_t t2 = 0; t2 < t; ++t2) {
        double acc = 0.0;
        for (std::size_t cc = 0; cc < c; ++cc)
          acc += in.q_temporal[(j * t + t1) * c + cc] * in.k_temporal[(j * t + t2) * c + cc];
        checksum += acc;
      }
  return checksum;
}

inline double timed_scores_seconds(std::string_view kind, const ScoreInputs& in,
                                   double* checksum_out = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const double checksum = timed_scores_checksum(kind, in);
  const auto stop = std::chrono::steady_clock::now();
  if (checksum_out) *checksum_out = checksum;
  volatile double sink = checksum;
  (void)sink;
  return std::chrono::duration<double>(stop - start).count();
}

inline double median_seconds(std::string_view kind, const ScoreInputs& in,
                             std::size_t repeats) {
  std::vector<double> times;
  times.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r)
    times.push_back(timed_scores_seconds(kind, in));
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace dsta::bench
