#pragma once

// Central finite-difference gradient oracle used by the unit and acceptance
// suites. Independent of the tape: it only re-evaluates a loss closure.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "dsta/common.hpp"
#include "dsta/tensor.hpp"

namespace gradcheck {

inline double rel_err(double a, double b) {
  const double denom = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) / denom;
}

// Sample up to `max_coords` coordinate indices of a buffer of length n.
inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t max_coords,
                                              dsta::Rng& rng) {
  std::vector<std::size_t> idx;
  if (n <= max_coords) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  rng.shuffle(all);
  all.resize(max_coords);
  return all;
}

// Compares analytic gradients (already populated in `tensor.grad()`) against
// central differences of `loss_fn` (which must re-run the forward pass with
// no tape). Returns the max relative error over the sampled coordinates.
inline double max_fd_error(dsta::Tensor& tensor,
                           const std::function<double()>& loss_fn,
                           dsta::Rng& rng, std::size_t coords = 10,
                           double h = 1e-5,
                           const std::function<bool(std::size_t)>& skip = nullptr) {
  double worst = 0.0;
  for (std::size_t i : sample_coords(tensor.size(), coords, rng)) {
    if (skip && skip(i)) continue;
    const double orig = tensor.at(i);
    tensor.at(i) = orig + h;
    const double up = loss_fn();
    tensor.at(i) = orig - h;
    const double down = loss_fn();
    tensor.at(i) = orig;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(fd, tensor.grad()[i]));
  }
  return worst;
}

}  // namespace gradcheck
