#include "paxl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace paxl {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::size_t shape_product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

void check_finite(const std::vector<double>& v, const char* where) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(where) + ": non-finite input");
  }
}

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

TensorPtr Tensor::make(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad) {
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero dimension in shape " + shape_str(shape));
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  t->requires_grad = requires_grad;
  t->set_needs_grad(requires_grad);
  if (requires_grad) t->grad.assign(t->values.size(), 0.0);
  return t;
}

TensorPtr Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  std::vector<double> v(shape_product(shape), 0.0);
  return make(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
  return make({1}, {v}, requires_grad);
}

TensorPtr Tensor::randn(std::vector<std::size_t> shape, SplitRng& rng, double stddev,
                        bool requires_grad) {
  std::vector<double> v(shape_product(shape));
  for (auto& x : v) x = rng.next_gaussian(stddev);
  return make(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
  if (!is_scalar()) throw ShapeError("item: tensor " + shape_str(shape) + " is not scalar");
  return values[0];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows: tensor " + shape_str(shape) + " is not rank-2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols: tensor " + shape_str(shape) + " is not rank-2");
  return shape[1];
}

void Tensor::zero_grad() {
  if (requires_grad) grad.assign(values.size(), 0.0);
}

void Tensor::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
  if (g.size() != values.size()) throw ShapeError("accumulate_grad: size mismatch");
  ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

namespace {

// Builds the output node, wiring parents and the closure only when some
// input actually needs gradients and recording is enabled.
TensorPtr make_op(const char* op, std::vector<std::size_t> shape, std::vector<double> values,
                  std::vector<TensorPtr> parents, std::function<void(Tensor&)> bwd) {
  auto out = Tensor::make(std::move(shape), std::move(values), false);
  out->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->needs_grad()) needs = true;
  }
  if (needs) {
    out->set_needs_grad(true);
    out->parents = std::move(parents);
    Tensor* self = out.get();
    out->backward_fn = [self, bwd = std::move(bwd)]() { bwd(*self); };
  }
  return out;
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2 || a->shape[1] != b->shape[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " and " +
                     shape_str(b->shape));
  }
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a->values[i * k + t];
      const double* brow = &b->values[t * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_op(
      "matmul", {m, n}, std::move(c), {a, b}, [a, b, m, k, n](Tensor& out) {
        if (a->needs_grad()) {
          a->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double g = out.grad[i * n + j];
              for (std::size_t t = 0; t < k; ++t)
                a->grad[i * k + t] += g * b->values[t * n + j];
            }
        }
        if (b->needs_grad()) {
          b->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t < k; ++t) {
              const double av = a->values[i * k + t];
              for (std::size_t j = 0; j < n; ++j)
                b->grad[t * n + j] += av * out.grad[i * n + j];
            }
        }
      });
}

TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2 || a->shape[1] != b->shape[1]) {
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a->shape) + " and " +
                     shape_str(b->shape));
  }
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[0];
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      const double* ar = &a->values[i * k];
      const double* br = &b->values[j * k];
      for (std::size_t t = 0; t < k; ++t) s += ar[t] * br[t];
      c[i * n + j] = s;
    }
  return make_op(
      "matmul_nt", {m, n}, std::move(c), {a, b}, [a, b, m, k, n](Tensor& out) {
        if (a->needs_grad()) {
          a->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double g = out.grad[i * n + j];
              for (std::size_t t = 0; t < k; ++t)
                a->grad[i * k + t] += g * b->values[j * k + t];
            }
        }
        if (b->needs_grad()) {
          b->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double g = out.grad[i * n + j];
              for (std::size_t t = 0; t < k; ++t)
                b->grad[j * k + t] += g * a->values[i * k + t];
            }
        }
      });
}

namespace {

TensorPtr elementwise2(const char* op, const TensorPtr& a, const TensorPtr& b,
                       double (*fwd)(double, double),
                       void (*bwd)(double, double, double, double&, double&)) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  }
  std::vector<double> c(a->size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = fwd(a->values[i], b->values[i]);
  return make_op(op, a->shape, std::move(c), {a, b}, [a, b, bwd](Tensor& out) {
    const bool na = a->needs_grad(), nb = b->needs_grad();
    if (na) a->ensure_grad();
    if (nb) b->ensure_grad();
    double dummy = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      bwd(a->values[i], b->values[i], out.grad[i], na ? a->grad[i] : dummy,
          nb ? b->grad[i] : dummy);
    }
  });
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  return elementwise2(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) {
        ga += g;
        gb += g;
      });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  return elementwise2(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) {
        ga += g;
        gb -= g;
      });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  return elementwise2(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga += g * y;
        gb += g * x;
      });
}

TensorPtr scale(const TensorPtr& a, double c) {
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * c;
  return make_op("scale", a->shape, std::move(v), {a}, [a, c](Tensor& out) {
    if (!a->needs_grad()) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < out.size(); ++i) a->grad[i] += c * out.grad[i];
  });
}

TensorPtr add_const(const TensorPtr& a, double c) {
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + c;
  return make_op("add_const", a->shape, std::move(v), {a}, [a](Tensor& out) {
    if (!a->needs_grad()) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < out.size(); ++i) a->grad[i] += out.grad[i];
  });
}

TensorPtr add_row_broadcast(const TensorPtr& mat, const TensorPtr& vec) {
  if (mat->rank() != 2 || vec->rank() != 1 || mat->shape[1] != vec->shape[0]) {
    throw ShapeError("add_row_broadcast: shapes " + shape_str(mat->shape) + " and " +
                     shape_str(vec->shape));
  }
  const std::size_t r = mat->shape[0], d = mat->shape[1];
  std::vector<double> v(mat->size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] = mat->values[i * d + j] + vec->values[j];
  return make_op("add_row_broadcast", mat->shape, std::move(v), {mat, vec},
                 [mat, vec, r, d](Tensor& out) {
                   if (mat->needs_grad()) {
                     mat->ensure_grad();
                     for (std::size_t i = 0; i < out.size(); ++i) mat->grad[i] += out.grad[i];
                   }
                   if (vec->needs_grad()) {
                     vec->ensure_grad();
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < d; ++j) vec->grad[j] += out.grad[i * d + j];
                   }
                 });
}

TensorPtr scale_by(const TensorPtr& v, const TensorPtr& s) {
  if (!s->is_scalar()) throw ShapeError("scale_by: scale factor must be scalar");
  const double c = s->values[0];
  std::vector<double> out(v->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v->values[i] * c;
  return make_op("scale_by", v->shape, std::move(out), {v, s}, [v, s, c](Tensor& o) {
    if (v->needs_grad()) {
      v->ensure_grad();
      for (std::size_t i = 0; i < o.size(); ++i) v->grad[i] += c * o.grad[i];
    }
    if (s->needs_grad()) {
      s->ensure_grad();
      double acc = 0;
      for (std::size_t i = 0; i < o.size(); ++i) acc += v->values[i] * o.grad[i];
      s->grad[0] += acc;
    }
  });
}

TensorPtr sum(const TensorPtr& a) {
  double s = 0;
  for (double x : a->values) s += x;
  return make_op("sum", {1}, {s}, {a}, [a](Tensor& out) {
    if (!a->needs_grad()) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out.grad[0];
  });
}

TensorPtr mean_rows(const TensorPtr& mat) {
  const std::size_t r = mat->rows(), d = mat->cols();
  std::vector<double> v(d, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < d; ++j) v[j] += mat->values[i * d + j];
  for (auto& x : v) x /= static_cast<double>(r);
  return make_op("mean_rows", {d}, std::move(v), {mat}, [mat, r, d](Tensor& out) {
    if (!mat->needs_grad()) return;
    mat->ensure_grad();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < d; ++j) mat->grad[i * d + j] += inv * out.grad[j];
  });
}

TensorPtr row(const TensorPtr& mat, std::size_t r) {
  const std::size_t rows = mat->rows(), d = mat->cols();
  if (r >= rows) throw IndexError("row: index " + std::to_string(r) + " out of range");
  std::vector<double> v(mat->values.begin() + r * d, mat->values.begin() + (r + 1) * d);
  return make_op("row", {d}, std::move(v), {mat}, [mat, r, d](Tensor& out) {
    if (!mat->needs_grad()) return;
    mat->ensure_grad();
    for (std::size_t j = 0; j < d; ++j) mat->grad[r * d + j] += out.grad[j];
  });
}

TensorPtr as_row(const TensorPtr& v) {
  if (v->rank() != 1) throw ShapeError("as_row: expects a rank-1 tensor");
  const std::size_t d = v->shape[0];
  std::vector<double> vals = v->values;
  return make_op("as_row", {1, d}, std::move(vals), {v}, [v](Tensor& out) {
    if (!v->needs_grad()) return;
    v->ensure_grad();
    for (std::size_t i = 0; i < v->grad.size(); ++i) v->grad[i] += out.grad[i];
  });
}

TensorPtr cols(const TensorPtr& mat, std::size_t c0, std::size_t c1) {
  const std::size_t r = mat->rows(), c = mat->cols();
  if (c0 >= c1 || c1 > c)
    throw IndexError("cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") out of bounds for " + std::to_string(c) + " columns");
  const std::size_t w = c1 - c0;
  std::vector<double> v(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) v[i * w + j] = mat->values[i * c + c0 + j];
  return make_op("cols", {r, w}, std::move(v), {mat}, [mat, r, c, c0, w](Tensor& out) {
    if (!mat->needs_grad()) return;
    mat->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) mat->grad[i * c + c0 + j] += out.grad[i * w + j];
  });
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input");
  const std::size_t r = parts[0]->rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p->rows() != r) throw ShapeError("concat_cols: row counts differ");
    total += p->cols();
  }
  std::vector<double> v(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p->cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) v[i * total + off + j] = p->values[i * w + j];
    off += w;
  }
  std::vector<TensorPtr> parents(parts.begin(), parts.end());
  return make_op("concat_cols", {r, total}, std::move(v), std::move(parents),
                 [parts, r, total](Tensor& out) {
                   std::size_t off = 0;
                   for (const auto& p : parts) {
                     const std::size_t w = p->cols();
                     if (p->needs_grad()) {
                       p->ensure_grad();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < w; ++j)
                           p->grad[i * w + j] += out.grad[i * total + off + j];
                     }
                     off += w;
                   }
                 });
}

TensorPtr softmax_rows(const TensorPtr& x) {
  check_finite(x->values, "softmax_rows");
  const std::size_t r = x->rank() == 1 ? 1 : x->rows();
  const std::size_t c = x->rank() == 1 ? x->shape[0] : x->cols();
  if (x->rank() > 2) throw ShapeError("softmax_rows: rank-1 or rank-2 input expected");
  std::vector<double> y(x->size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = &x->values[i * c];
    double mx = xi[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) {
      y[i * c + j] = std::exp(xi[j] - mx);
      z += y[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] /= z;
  }
  return make_op("softmax_rows", x->shape, std::move(y), {x}, [x, r, c](Tensor& out) {
    if (!x->needs_grad()) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0;
      for (std::size_t j = 0; j < c; ++j)
        dot += out.grad[i * c + j] * out.values[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        const double yv = out.values[i * c + j];
        x->grad[i * c + j] += yv * (out.grad[i * c + j] - dot);
      }
    }
  });
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
  if (x->rank() < 1 || x->rank() > 2)
    throw ShapeError("layer_norm: rank-1 or rank-2 input expected");
  const std::size_t d = x->shape.back();
  if (gamma->shape != std::vector<std::size_t>{d} || beta->shape != std::vector<std::size_t>{d})
    throw ShapeError("layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");
  if (eps < 0) throw NumericError("layer_norm: eps must be non-negative");
  const std::size_t r = x->rank() == 1 ? 1 : x->shape[0];

  std::vector<double> xhat(x->size()), inv_sd(r), y(x->size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = &x->values[i * d];
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sd[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xi[j] - mean) * is;
      y[i * d + j] = gamma->values[j] * xhat[i * d + j] + beta->values[j];
    }
  }
  return make_op(
      "layer_norm", x->shape, std::move(y), {x, gamma, beta},
      [x, gamma, beta, r, d, xhat = std::move(xhat), inv_sd = std::move(inv_sd)](Tensor& out) {
        if (gamma->needs_grad()) {
          gamma->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j)
              gamma->grad[j] += out.grad[i * d + j] * xhat[i * d + j];
        }
        if (beta->needs_grad()) {
          beta->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j) beta->grad[j] += out.grad[i * d + j];
        }
        if (x->needs_grad()) {
          x->ensure_grad();
          for (std::size_t i = 0; i < r; ++i) {
            double mean_dxh = 0, mean_dxh_xh = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = out.grad[i * d + j] * gamma->values[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xhat[i * d + j];
            }
            mean_dxh /= static_cast<double>(d);
            mean_dxh_xh /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = out.grad[i * d + j] * gamma->values[j];
              x->grad[i * d + j] +=
                  inv_sd[i] * (dxh - mean_dxh - xhat[i * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

TensorPtr gelu(const TensorPtr& x) {
  std::vector<double> y(x->size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x->values[i];
    y[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return make_op("gelu", x->shape, std::move(y), {x}, [x](Tensor& out) {
    if (!x->needs_grad()) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = x->values[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      x->grad[i] += out.grad[i] * (cdf + v * pdf);
    }
  });
}

TensorPtr sigmoid(const TensorPtr& x) {
  std::vector<double> y(x->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x->values[i]));
  return make_op("sigmoid", x->shape, std::move(y), {x}, [x](Tensor& out) {
    if (!x->needs_grad()) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double s = out.values[i];
      x->grad[i] += out.grad[i] * s * (1.0 - s);
    }
  });
}

TensorPtr l2_normalize(const TensorPtr& v) {
  const double n = norm2(v->values);
  if (n < 1e-12) throw DegenerateVectorError("l2_normalize: vector norm below 1e-12");
  std::vector<double> y(v->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = v->values[i] / n;
  return make_op("l2_normalize", v->shape, std::move(y), {v}, [v, n](Tensor& out) {
    if (!v->needs_grad()) return;
    v->ensure_grad();
    double dot = 0;
    for (std::size_t i = 0; i < out.size(); ++i) dot += out.grad[i] * out.values[i];
    for (std::size_t i = 0; i < out.size(); ++i)
      v->grad[i] += (out.grad[i] - out.values[i] * dot) / n;
  });
}

TensorPtr cosine_sim(const TensorPtr& u, const TensorPtr& v) {
  if (u->shape != v->shape || u->rank() != 1)
    throw ShapeError("cosine_sim: expects equal-length vectors, got " + shape_str(u->shape) +
                     " and " + shape_str(v->shape));
  const double nu = norm2(u->values), nv = norm2(v->values);
  if (nu < 1e-12 || nv < 1e-12)
    throw DegenerateVectorError("cosine_sim: vector norm below 1e-12");
  double dot = 0;
  for (std::size_t i = 0; i < u->size(); ++i) dot += u->values[i] * v->values[i];
  const double s = dot / (nu * nv);
  return make_op("cosine_sim", {1}, {s}, {u, v}, [u, v, nu, nv, s](Tensor& out) {
    const double g = out.grad[0];
    if (u->needs_grad()) {
      u->ensure_grad();
      for (std::size_t i = 0; i < u->size(); ++i)
        u->grad[i] += g * (v->values[i] / (nu * nv) - s * u->values[i] / (nu * nu));
    }
    if (v->needs_grad()) {
      v->ensure_grad();
      for (std::size_t i = 0; i < v->size(); ++i)
        v->grad[i] += g * (u->values[i] / (nu * nv) - s * v->values[i] / (nv * nv));
    }
  });
}

TensorPtr cross_entropy_logits(const TensorPtr& logits, std::size_t target) {
  if (logits->rank() != 1)
    throw ShapeError("cross_entropy_logits: expects a logit vector");
  const std::size_t n = logits->shape[0];
  if (target >= n)
    throw IndexError("cross_entropy_logits: target " + std::to_string(target) +
                     " out of range for " + std::to_string(n) + " classes");
  check_finite(logits->values, "cross_entropy_logits");
  double mx = logits->values[0];
  for (double x : logits->values) mx = std::max(mx, x);
  double z = 0;
  for (double x : logits->values) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  const double loss = lse - logits->values[target];
  return make_op("cross_entropy_logits", {1}, {loss}, {logits},
                 [logits, target, mx, z](Tensor& out) {
                   if (!logits->needs_grad()) return;
                   logits->ensure_grad();
                   const double g = out.grad[0];
                   for (std::size_t i = 0; i < logits->size(); ++i) {
                     const double p = std::exp(logits->values[i] - mx) / z;
                     logits->grad[i] += g * (p - (i == target ? 1.0 : 0.0));
                   }
                 });
}

TensorPtr stack_scalars(const std::vector<TensorPtr>& xs) {
  if (xs.empty()) throw ShapeError("stack_scalars: empty input");
  std::vector<double> v(xs.size());
  std::vector<TensorPtr> parents;
  parents.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i]->is_scalar()) throw ShapeError("stack_scalars: all inputs must be scalar");
    v[i] = xs[i]->values[0];
    parents.push_back(xs[i]);
  }
  return make_op("stack_scalars", {xs.size()}, std::move(v), std::move(parents),
                 [xs](Tensor& out) {
                   for (std::size_t i = 0; i < xs.size(); ++i) {
                     if (!xs[i]->needs_grad()) continue;
                     xs[i]->ensure_grad();
                     xs[i]->grad[0] += out.grad[i];
                   }
                 });
}

TensorPtr max_scalars(const std::vector<TensorPtr>& xs) {
  if (xs.empty()) throw ShapeError("max_scalars: empty input");
  std::size_t arg = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i]->is_scalar()) throw ShapeError("max_scalars: all inputs must be scalar");
    if (xs[i]->values[0] > xs[arg]->values[0]) arg = i;  // strict >: ties keep lowest index
  }
  return make_op("max_scalars", {1}, {xs[arg]->values[0]}, {xs[arg]}, [xs, arg](Tensor& out) {
    if (!xs[arg]->needs_grad()) return;
    xs[arg]->ensure_grad();
    xs[arg]->grad[0] += out.grad[0];
  });
}

TensorPtr mean_scalars(const std::vector<TensorPtr>& xs) {
  if (xs.empty()) throw ShapeError("mean_scalars: empty input");
  double s = 0;
  std::vector<TensorPtr> parents;
  parents.reserve(xs.size());
  for (const auto& x : xs) {
    if (!x->is_scalar()) throw ShapeError("mean_scalars: all inputs must be scalar");
    s += x->values[0];
    parents.push_back(x);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  return make_op("mean_scalars", {1}, {s * inv}, std::move(parents), [xs, inv](Tensor& out) {
    for (const auto& x : xs) {
      if (!x->needs_grad()) continue;
      x->ensure_grad();
      x->grad[0] += inv * out.grad[0];
    }
  });
}

void backward(const TensorPtr& loss) {
  if (!loss->is_scalar())
    throw GraphError("backward: loss must be scalar, got " + shape_str(loss->shape));
  if (loss->backward_ran)
    throw GraphError("backward: already run on this graph; re-run forward first");

  // Iterative post-order DFS; parent order is fixed by construction, so the
  // resulting schedule (and therefore fp rounding) is reproducible.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  struct Frame {
    Tensor* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Tensor* p = f.node->parents[f.next_parent++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn();
    }
  }
  loss->backward_ran = true;
}

}  // namespace paxl
