#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "paxl/errors.hpp"
#include "paxl/rng.hpp"

namespace paxl {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of 64-bit reals with an embedded reverse-mode
// autodiff graph. Ops record their parents and a backward closure on the
// output node; backward() replays closures in exact reverse topological
// order, so gradients are bit-reproducible for a given forward build.
class Tensor : public std::enable_shared_from_this<Tensor> {
 public:
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  // Allocated (zero-filled) on construction for requires_grad leaves and
  // lazily during backward for interior nodes.
  std::vector<double> grad;

  // Graph record: parent references plus the backward rule with its saved
  // activations captured in the closure.
  std::vector<TensorPtr> parents;
  std::function<void()> backward_fn;
  const char* op = "leaf";

  static TensorPtr make(std::vector<std::size_t> shape, std::vector<double> values,
                        bool requires_grad = false);
  static TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static TensorPtr scalar(double v, bool requires_grad = false);
  // Gaussian init, mean 0 / given stddev, from the given stream.
  static TensorPtr randn(std::vector<std::size_t> shape, SplitRng& rng, double stddev,
                         bool requires_grad = false);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return values.size() == 1; }
  double item() const;
  std::size_t rows() const;
  std::size_t cols() const;

  // True when this node is a trainable leaf or depends on one; ops skip
  // graph recording entirely for nodes that do not need gradients.
  bool needs_grad() const { return needs_grad_; }
  void set_needs_grad(bool v) { needs_grad_ = v; }

  void zero_grad();
  void ensure_grad();
  void accumulate_grad(const std::vector<double>& g);

  bool backward_ran = false;

 private:
  bool needs_grad_ = false;
};

// RAII guard disabling graph recording; evaluation paths use this so frozen
// forwards cost no graph bookkeeping.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---- ops ------------------------------------------------------------------

// c[m×n] = a[m×k] · b[k×n]; backward dA = dC·Bᵀ, dB = Aᵀ·dC.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
// c[m×n] = a[m×k] · b[n×k]ᵀ without materializing the transpose.
TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr add_const(const TensorPtr& a, double c);
// out[r][j] = mat[r][j] + vec[j].
TensorPtr add_row_broadcast(const TensorPtr& mat, const TensorPtr& vec);
// out = s · v for a scalar tensor s (gradient flows into both).
TensorPtr scale_by(const TensorPtr& v, const TensorPtr& s);

TensorPtr sum(const TensorPtr& a);
// Column means of a rank-2 tensor: out[j] = (1/R) Σ_r mat[r][j].
TensorPtr mean_rows(const TensorPtr& mat);
// View of one row of a rank-2 tensor as a vector.
TensorPtr row(const TensorPtr& mat, std::size_t r);
// Promote a vector to a 1 x d matrix (gradient passes through unchanged).
TensorPtr as_row(const TensorPtr& v);
// Column block [c0, c1) of a rank-2 tensor.
TensorPtr cols(const TensorPtr& mat, std::size_t c0, std::size_t c1);
// Concatenate rank-2 tensors with equal row counts along columns.
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);

// Row-stabilized softmax (max subtracted before exponentiation).
TensorPtr softmax_rows(const TensorPtr& x);
// Per-row normalization over the last dimension with population variance,
// then affine gamma/beta. Accepts rank-1 (single row) or rank-2 input.
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps);
TensorPtr gelu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr l2_normalize(const TensorPtr& v);

// u·v / (‖u‖‖v‖); raises DegenerateVectorError when either norm < 1e-12.
TensorPtr cosine_sim(const TensorPtr& u, const TensorPtr& v);
// −log softmax(logits)[target], evaluated in log space.
TensorPtr cross_entropy_logits(const TensorPtr& logits, std::size_t target);

// Pack scalars into a rank-1 tensor; gradient routes back entrywise.
TensorPtr stack_scalars(const std::vector<TensorPtr>& xs);
// Max of scalars; ties break to the lowest index and the gradient flows to
// the winner only.
TensorPtr max_scalars(const std::vector<TensorPtr>& xs);
TensorPtr mean_scalars(const std::vector<TensorPtr>& xs);

// Reverse-topological gradient accumulation from a scalar loss. Seeds the
// loss gradient with 1. Running twice on the same graph is an error.
void backward(const TensorPtr& loss);

std::string shape_str(const std::vector<std::size_t>& s);

}  // namespace paxl
