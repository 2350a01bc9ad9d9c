#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dsta/common.hpp"

namespace dsta {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Dense row-major tensor of 64-bit floats. Copies are shallow: they share
// the data and gradient buffers, which is what lets reshape() be a free
// view and lets backward lambdas hold cheap handles. Gradient buffers are
// allocated lazily, the first time backward accumulates into them.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(shape_numel(shape_), fill)),
        requires_grad_(requires_grad) {
    if (requires_grad_) ensure_grad_slot();
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))),
        requires_grad_(requires_grad) {
    if (data_->size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                       " does not match shape " + shape_str(shape_));
    }
    if (requires_grad_) ensure_grad_slot();
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    for (double& v : *t.data_) v = rng.uniform(lo, hi);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& values() { return *data_; }
  const std::vector<double>& values() const { return *data_; }

  double& at(std::size_t i) { return (*data_)[i]; }
  double at(std::size_t i) const { return (*data_)[i]; }
  double& at(std::size_t i, std::size_t j) { return (*data_)[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return (*data_)[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool requires_grad() const { return requires_grad_; }
  bool has_grad() const { return grad_ && *grad_; }

  // Allocates the (shared) gradient buffer if absent.
  void ensure_grad() const {
    if (!grad_) grad_ = std::make_shared<GradSlot>();
    if (!*grad_) *grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
  }

  std::vector<double>& grad() {
    if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
    return **grad_;
  }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
    return **grad_;
  }

  void zero_grad() {
    if (has_grad()) std::fill((*grad_)->begin(), (*grad_)->end(), 0.0);
  }

  // Free view: same buffers, new shape. Element count must be preserved.
  Tensor reshape(Shape new_shape) const {
    if (shape_numel(new_shape) != size()) {
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                       " changes element count");
    }
    if (requires_grad_) ensure_grad_slot();
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    t.grad_ = grad_;
    t.requires_grad_ = requires_grad_;
    return t;
  }

  // Deep copy of the values, detached from any gradient tracking.
  Tensor clone() const { return Tensor(shape_, *data_, false); }

  bool shares_data(const Tensor& other) const { return data_ == other.data_; }

 private:
  // One level of indirection so that views created before the gradient
  // buffer exists still observe it once allocated.
  using GradSlot = std::shared_ptr<std::vector<double>>;

  void ensure_grad_slot() const {
    if (!grad_) grad_ = std::make_shared<GradSlot>();
  }

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  mutable std::shared_ptr<GradSlot> grad_;
  bool requires_grad_ = false;
};

// Learnable tensor: unique name plus the momentum buffer the optimizer uses.
struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<double> velocity;

  Parameter(std::string n, Tensor t)
      : name(std::move(n)),
        tensor(t.shape(), t.values(), /*requires_grad=*/true),
        velocity(t.size(), 0.0) {}
};

using ParameterPtr = std::shared_ptr<Parameter>;

// Ordered parameter store with unique names.
class ParamRegistry {
 public:
  ParameterPtr add(std::string name, Tensor init) {
    if (!names_.insert(name).second) {
      throw std::logic_error("duplicate parameter name: " + name);
    }
    auto p = std::make_shared<Parameter>(std::move(name), std::move(init));
    params_.push_back(p);
    return p;
  }

  const std::vector<ParameterPtr>& params() const { return params_; }
  std::vector<ParameterPtr>& params() { return params_; }

  ParameterPtr find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p;
    return nullptr;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->tensor.size();
    return n;
  }

 private:
  std::vector<ParameterPtr> params_;
  std::unordered_set<std::string> names_;
};

// Reverse-mode tape. Constructing a Tape makes it the active recorder for
// the current thread; backward() replays the recorded ops once, in reverse
// order, then the tape is consumed.
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() {
    if (active_ == this) active_ = prev_;
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Tensor& loss) {
    if (consumed_) throw std::logic_error("backward called on a consumed tape");
    if (loss.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
      throw std::logic_error("loss was not produced on an active tape");
    }
    loss.ensure_grad();
    loss.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    consumed_ = true;
    nodes_.clear();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* prev_ = nullptr;
  bool consumed_ = false;
  static inline thread_local Tape* active_ = nullptr;
};

// Backward through the active tape (the one `loss` was recorded on).
inline void backward(Tensor& loss) {
  Tape* t = Tape::active();
  if (!t) throw std::logic_error("backward requires an active tape");
  t->backward(loss);
}

namespace detail {

inline void ensure_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

inline bool track(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline Tensor make_output(Shape shape, bool tracked) {
  return Tensor(std::move(shape), 0.0, tracked);
}

// Accumulation target for an input of a recorded op.
inline std::vector<double>* grad_sink(Tensor& t) {
  if (!t.requires_grad()) return nullptr;
  t.ensure_grad();
  return &t.grad();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core operations. Every reduction runs in fixed left-to-right order so that
// identical inputs give bit-identical outputs on every run.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  const bool tracked = detail::track({&a, &b});
  Tensor out = detail::make_output({m, p}, tracked);
  const double* ad = a.data();
  const double* bd = b.data();
  double* od = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ad[i * k + kk];
      const double* brow = bd + kk * p;
      double* orow = od + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  }
  detail::ensure_finite(out, "matmul");
  if (tracked) {
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc, m, k, p]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* ag = detail::grad_sink(ac)) {
        const double* bd2 = bc.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += og[i * p + j] * bd2[kk * p + j];
            (*ag)[i * k + kk] += acc;
          }
      }
      if (auto* bg = detail::grad_sink(bc)) {
        const double* ad2 = ac.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ad2[i * k + kk];
            for (std::size_t j = 0; j < p; ++j) (*bg)[kk * p + j] += av * og[i * p + j];
          }
      }
    });
  }
  return out;
}

// out[i,j] = sum_k a[i,k] * b[j,k]  (contraction over the shared last dim).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt shape mismatch: " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(0);
  const bool tracked = detail::track({&a, &b});
  Tensor out = detail::make_output({m, p}, tracked);
  const double* ad = a.data();
  const double* bd = b.data();
  double* od = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      const double* arow = ad + i * k;
      const double* brow = bd + j * k;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      od[i * p + j] = acc;
    }
  detail::ensure_finite(out, "matmul_nt");
  if (tracked) {
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc, m, k, p]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* ag = detail::grad_sink(ac)) {
        const double* bd2 = bc.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) {
            const double g = og[i * p + j];
            for (std::size_t kk = 0; kk < k; ++kk) (*ag)[i * k + kk] += g * bd2[j * k + kk];
          }
      }
      if (auto* bg = detail::grad_sink(bc)) {
        const double* ad2 = ac.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) {
            const double g = og[i * p + j];
            for (std::size_t kk = 0; kk < k; ++kk) (*bg)[j * k + kk] += g * ad2[i * k + kk];
          }
      }
    });
  }
  return out;
}

// x[M,K] * w[K,P] + b[P] broadcast over rows.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1 || x.dim(1) != w.dim(0) ||
      w.dim(1) != b.dim(0)) {
    throw ShapeError("linear shape mismatch: x " + shape_str(x.shape()) + ", w " +
                     shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), p = w.dim(1);
  const bool tracked = detail::track({&x, &w, &b});
  Tensor out = detail::make_output({m, p}, tracked);
  const double* xd = x.data();
  const double* wd = w.data();
  const double* bd = b.data();
  double* od = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = od + i * p;
    for (std::size_t j = 0; j < p; ++j) orow[j] = bd[j];
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double xv = xd[i * k + kk];
      const double* wrow = wd + kk * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += xv * wrow[j];
    }
  }
  detail::ensure_finite(out, "linear");
  if (tracked) {
    Tensor xc = x, wc = w, bc = b, oc = out;
    Tape::active()->record([xc, wc, bc, oc, m, k, p]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* xg = detail::grad_sink(xc)) {
        const double* wd2 = wc.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += og[i * p + j] * wd2[kk * p + j];
            (*xg)[i * k + kk] += acc;
          }
      }
      if (auto* wg = detail::grad_sink(wc)) {
        const double* xd2 = xc.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double xv = xd2[i * k + kk];
            for (std::size_t j = 0; j < p; ++j) (*wg)[kk * p + j] += xv * og[i * p + j];
          }
      }
      if (auto* bg = detail::grad_sink(bc)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) (*bg)[j] += og[i * p + j];
      }
    });
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const bool tracked = detail::track({&a, &b});
  Tensor out = detail::make_output(a.shape(), tracked);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  detail::ensure_finite(out, "add");
  if (tracked) {
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc, n]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* ag = detail::grad_sink(ac))
        for (std::size_t i = 0; i < n; ++i) (*ag)[i] += og[i];
      if (auto* bg = detail::grad_sink(bc))
        for (std::size_t i = 0; i < n; ++i) (*bg)[i] += og[i];
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const bool tracked = detail::track({&a, &b});
  Tensor out = detail::make_output(a.shape(), tracked);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  detail::ensure_finite(out, "mul");
  if (tracked) {
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record([ac, bc, oc, n]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* ag = detail::grad_sink(ac))
        for (std::size_t i = 0; i < n; ++i) (*ag)[i] += og[i] * bc.at(i);
      if (auto* bg = detail::grad_sink(bc))
        for (std::size_t i = 0; i < n; ++i) (*bg)[i] += og[i] * ac.at(i);
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  const bool tracked = detail::track({&a});
  Tensor out = detail::make_output(a.shape(), tracked);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * s;
  detail::ensure_finite(out, "scale");
  if (tracked) {
    Tensor ac = a, oc = out;
    Tape::active()->record([ac, oc, s, n]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* ag = detail::grad_sink(ac))
        for (std::size_t i = 0; i < n; ++i) (*ag)[i] += og[i] * s;
    });
  }
  return out;
}

enum class Activation { tanh, leaky_relu };

inline Tensor activation(const Tensor& x, Activation kind, double slope = 0.01) {
  const bool tracked = detail::track({&x});
  Tensor out = detail::make_output(x.shape(), tracked);
  const std::size_t n = x.size();
  if (kind == Activation::tanh) {
    for (std::size_t i = 0; i < n; ++i) out.at(i) = std::tanh(x.at(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x.at(i);
      out.at(i) = v >= 0.0 ? v : slope * v;
    }
  }
  detail::ensure_finite(out, "activation");
  if (tracked) {
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, kind, slope, n]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      auto* xg = detail::grad_sink(xc);
      if (!xg) return;
      if (kind == Activation::tanh) {
        for (std::size_t i = 0; i < n; ++i) {
          const double y = oc.at(i);
          (*xg)[i] += og[i] * (1.0 - y * y);
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          (*xg)[i] += og[i] * (xc.at(i) >= 0.0 ? 1.0 : slope);
        }
      }
    });
  }
  return out;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
  if (x.ndim() != 2) {
    throw ShapeError("softmax_rows expects a 2-d tensor, got " + shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), p = x.dim(1);
  const bool tracked = detail::track({&x});
  Tensor out = detail::make_output({m, p}, tracked);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < p; ++j) mx = std::max(mx, x.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < p; ++j) out.at(i, j) /= denom;
  }
  detail::ensure_finite(out, "softmax_rows");
  if (tracked) {
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, m, p]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      auto* xg = detail::grad_sink(xc);
      if (!xg) return;
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < p; ++j) dot += og[i * p + j] * oc.at(i, j);
        for (std::size_t j = 0; j < p; ++j) {
          (*xg)[i * p + j] += oc.at(i, j) * (og[i * p + j] - dot);
        }
      }
    });
  }
  return out;
}

// Concatenate along the last dimension; all leading dims must agree.
inline Tensor concat_last(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_last needs at least one tensor");
  const Shape& lead = xs[0].shape();
  std::size_t total_last = 0;
  for (const Tensor& t : xs) {
    if (t.ndim() != lead.size()) {
      throw ShapeError("concat_last rank mismatch: " + shape_str(lead) + " vs " +
                       shape_str(t.shape()));
    }
    for (std::size_t d = 0; d + 1 < lead.size(); ++d) {
      if (t.dim(d) != lead[d]) {
        throw ShapeError("concat_last leading-dimension mismatch: " + shape_str(lead) +
                         " vs " + shape_str(t.shape()));
      }
    }
    total_last += t.dim(t.ndim() - 1);
  }
  Shape out_shape = lead;
  out_shape.back() = total_last;
  bool tracked = false;
  if (Tape::active()) {
    for (const Tensor& t : xs) tracked = tracked || t.requires_grad();
  }
  Tensor out = detail::make_output(out_shape, tracked);
  std::size_t rows = 1;
  for (std::size_t d = 0; d + 1 < lead.size(); ++d) rows *= lead[d];
  std::size_t offset = 0;
  for (const Tensor& t : xs) {
    const std::size_t w = t.dim(t.ndim() - 1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c)
        out.at(r * total_last + offset + c) = t.at(r * w + c);
    offset += w;
  }
  if (tracked) {
    std::vector<Tensor> ins = xs;
    Tensor oc = out;
    Tape::active()->record([ins, oc, rows, total_last]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      std::size_t off = 0;
      for (Tensor& t : ins) {
        const std::size_t w = t.dim(t.ndim() - 1);
        if (auto* tg = detail::grad_sink(t)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c)
              (*tg)[r * w + c] += og[r * total_last + off + c];
        }
        off += w;
      }
    });
  }
  return out;
}

// Slice [offset, offset+len) of the last dimension (copying).
inline Tensor slice_last(const Tensor& x, std::size_t offset, std::size_t len) {
  const std::size_t w = x.dim(x.ndim() - 1);
  if (offset + len > w) {
    throw ShapeError("slice_last out of range on " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = len;
  const bool tracked = detail::track({&x});
  Tensor out = detail::make_output(out_shape, tracked);
  const std::size_t rows = x.size() / w;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < len; ++c) out.at(r * len + c) = x.at(r * w + offset + c);
  if (tracked) {
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, rows, w, offset, len]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* xg = detail::grad_sink(xc)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < len; ++c) (*xg)[r * w + offset + c] += og[r * len + c];
      }
    });
  }
  return out;
}

// Concatenate along the first dimension; trailing dims must agree.
inline Tensor concat_first(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_first needs at least one tensor");
  const Shape& tail = xs[0].shape();
  std::size_t total_first = 0;
  for (const Tensor& t : xs) {
    if (t.ndim() != tail.size()) {
      throw ShapeError("concat_first rank mismatch");
    }
    for (std::size_t d = 1; d < tail.size(); ++d) {
      if (t.dim(d) != tail[d]) {
        throw ShapeError("concat_first trailing-dimension mismatch: " + shape_str(tail) +
                         " vs " + shape_str(t.shape()));
      }
    }
    total_first += t.dim(0);
  }
  Shape out_shape = tail;
  out_shape[0] = total_first;
  bool tracked = false;
  if (Tape::active()) {
    for (const Tensor& t : xs) tracked = tracked || t.requires_grad();
  }
  Tensor out = detail::make_output(out_shape, tracked);
  std::size_t pos = 0;
  for (const Tensor& t : xs) {
    for (std::size_t i = 0; i < t.size(); ++i) out.at(pos + i) = t.at(i);
    pos += t.size();
  }
  if (tracked) {
    std::vector<Tensor> ins = xs;
    Tensor oc = out;
    Tape::active()->record([ins, oc]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      std::size_t p = 0;
      for (Tensor& t : ins) {
        if (auto* tg = detail::grad_sink(t)) {
          for (std::size_t i = 0; i < t.size(); ++i) (*tg)[i] += og[p + i];
        }
        p += t.size();
      }
    });
  }
  return out;
}

// x[N,T,C] -> x[T,N,C].
inline Tensor transpose01(const Tensor& x) {
  if (x.ndim() != 3) {
    throw ShapeError("transpose01 expects a 3-d tensor, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  const bool tracked = detail::track({&x});
  Tensor out = detail::make_output({t, n, c}, tracked);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t k = 0; k < c; ++k) out.at(j, i, k) = x.at(i, j, k);
  if (tracked) {
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, n, t, c]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* xg = detail::grad_sink(xc)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < t; ++j)
            for (std::size_t k = 0; k < c; ++k)
              (*xg)[(i * t + j) * c + k] += og[(j * n + i) * c + k];
      }
    });
  }
  return out;
}

// Mean over the first two dims of a 3-d tensor (joints and frames jointly).
inline Tensor mean_pool(const Tensor& x) {
  if (x.ndim() != 3) {
    throw ShapeError("mean_pool expects a 3-d tensor, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  if (n == 0 || t == 0) throw ShapeError("mean_pool over an empty dimension");
  const bool tracked = detail::track({&x});
  Tensor out = detail::make_output({c}, tracked);
  for (std::size_t k = 0; k < c; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < t; ++j) acc += x.at(i, j, k);
    out.at(k) = acc / static_cast<double>(n * t);
  }
  detail::ensure_finite(out, "mean_pool");
  if (tracked) {
    Tensor xc = x, oc = out;
    const double inv = 1.0 / static_cast<double>(n * t);
    Tape::active()->record([xc, oc, n, t, c, inv]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      if (auto* xg = detail::grad_sink(xc)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < t; ++j)
            for (std::size_t k = 0; k < c; ++k) (*xg)[(i * t + j) * c + k] += og[k] * inv;
      }
    });
  }
  return out;
}

inline Tensor sum_all(const Tensor& x) {
  const bool tracked = detail::track({&x});
  Tensor out = detail::make_output({1}, tracked);
  double acc = 0.0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) acc += x.at(i);
  out.at(0) = acc;
  detail::ensure_finite(out, "sum_all");
  if (tracked) {
    Tensor xc = x, oc = out;
    Tape::active()->record([xc, oc, n]() mutable {
      if (!oc.has_grad()) return;
      const double g = oc.grad()[0];
      if (auto* xg = detail::grad_sink(xc))
        for (std::size_t i = 0; i < n; ++i) (*xg)[i] += g;
    });
  }
  return out;
}

// Mean over the batch of -log softmax(logits)[label].
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.ndim() != 2) {
    throw ShapeError("cross_entropy expects 2-d logits, got " + shape_str(logits.shape()));
  }
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) {
    throw ShapeError("cross_entropy label count " + std::to_string(labels.size()) +
                     " does not match batch " + std::to_string(b));
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= k) {
      throw std::out_of_range("cross_entropy label " + std::to_string(labels[i]) +
                              " out of range [0," + std::to_string(k) + ")");
    }
  }
  const bool tracked = detail::track({&logits});
  // Probabilities are kept for the backward rule.
  std::vector<double> probs(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(logits.at(i, j) - mx);
      probs[i * k + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= denom;
    loss += -(logits.at(i, labels[i]) - mx - std::log(denom));
  }
  Tensor out = detail::make_output({1}, tracked);
  out.at(0) = loss / static_cast<double>(b);
  detail::ensure_finite(out, "cross_entropy");
  if (tracked) {
    Tensor lc = logits, oc = out;
    std::vector<std::size_t> lab = labels;
    Tape::active()->record([lc, oc, probs, lab, b, k]() mutable {
      if (!oc.has_grad()) return;
      const double g = oc.grad()[0] / static_cast<double>(b);
      if (auto* lg = detail::grad_sink(lc)) {
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double onehot = (j == lab[i]) ? 1.0 : 0.0;
            (*lg)[i * k + j] += g * (probs[i * k + j] - onehot);
          }
      }
    });
  }
  return out;
}

// Nesterov momentum step:
//   g <- grad + weight_decay * w
//   v <- momentum * v + g
//   w <- w - lr * (g + momentum * v)
// Gradients are cleared afterwards.
inline void sgd_nesterov_step(std::vector<ParameterPtr>& params, double lr,
                              double momentum, double weight_decay) {
  for (auto& p : params) {
    if (!p->tensor.has_grad()) {
      throw std::logic_error("parameter '" + p->name + "' has no gradient");
    }
  }
  for (auto& p : params) {
    auto& w = p->tensor.values();
    auto& g = p->tensor.grad();
    auto& v = p->velocity;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay * w[i];
      v[i] = momentum * v[i] + gi;
      w[i] -= lr * (gi + momentum * v[i]);
    }
    p->tensor.zero_grad();
  }
}

}  // namespace dsta
