// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpaformer/rng.hpp"

namespace cpaformer::tensor {

/// Plain 2D row-major value matrix used to move data in and out of tapes.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {}

  static Matrix zeros(int r, int c) { return Matrix(r, c); }
  static Matrix row_vector(std::vector<double> v) {
    const int c = static_cast<int>(v.size());
    return Matrix(1, c, std::move(v));
  }
  static Matrix col_vector(std::vector<double> v) {
    const int r = static_cast<int>(v.size());
    return Matrix(r, 1, std::move(v));
  }
  static Matrix scalar(double v) { return Matrix(1, 1, {v}); }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }
};

/// Row-major 0/1 mask; nonzero means allowed.
using Mask = std::vector<std::uint8_t>;

class Tape;

/// Lightweight handle to a node on a tape. Values are immutable once the
/// node is created; gradients become available after Tape::backward.
class Tensor {
 public:
  Tensor() = default;
  bool defined() const { return tape_ != nullptr; }
  int rows() const;
  int cols() const;
  int size() const { return rows() * cols(); }
  double at(int r, int c) const;
  double scalar_value() const;
  const std::vector<double>& values() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Confined to one thread; ops append nodes, backward
/// walks them once in reverse creation order so fan-out gradients
/// accumulate additively and deterministically.
///
/// Every op verifies its output is finite and throws NumericError
/// otherwise, so divergence surfaces at the op that produced it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(const Matrix& m, bool requires_grad = true);
  Tensor constant(const Matrix& m) { return leaf(m, false); }
  Tensor scalar_const(double v) { return leaf(Matrix::scalar(v), false); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1.
  void backward(const Tensor& loss);

  /// Gradient of the last backward() with respect to t (zeros if t was
  /// never reached).
  std::vector<double> grad_of(const Tensor& t) const;

  /// When disabled, ops compute values only; backward is unavailable.
  /// Central-difference evaluation uses this mode.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  std::size_t num_nodes() const { return nodes_.size(); }

  // -- internal access for op implementations ------------------------------
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // may be empty
  };
  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  Tensor emit(int rows, int cols, std::vector<double> value,
              bool requires_grad, std::function<void(Tape&)> backprop,
              const char* op_name);

 private:
  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool ran_backward_ = false;
};

// ---- ops -------------------------------------------------------------
// Shapes: same-shape elementwise; (matrix, 1 x cols) broadcasts the row
// vector over rows; (matrix, 1 x 1) broadcasts the scalar.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard / broadcast
Tensor add_const(const Tensor& a, double c);
Tensor mul_const(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int first, int count);

Tensor sum_rows(const Tensor& a);   // 1 x cols, sums over rows
Tensor sum_all(const Tensor& a);    // 1 x 1
Tensor mean_pool(const Tensor& a);  // 1 x cols, arithmetic mean over rows

/// Multiplies row r of a by s[r]; s is rows x 1.
Tensor scale_rows(const Tensor& a, const Tensor& s);
Tensor reciprocal(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);

/// Row-wise softmax over allowed positions; forbidden positions get weight
/// exactly 0 and zero gradient. An all-forbidden row is an error.
Tensor masked_softmax(const Tensor& logits, const Mask& mask);

/// Row-wise (x - mean) / sqrt(var + eps), population variance, no affine.
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

Tensor l2_normalize_rows(const Tensor& a);

/// Mean over rows of standard CE with integer targets; numerically stable.
/// With a mask, forbidden positions are excluded from the partition
/// function. With weights, a weighted mean (normalized by the weight sum).
Tensor cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int>& targets,
                                 const Mask* mask = nullptr,
                                 const std::vector<double>* weights = nullptr);

/// logits and targets are n x 1; weighted mean of the stable form
/// w * (softplus(x) - x * y), normalized by the weight sum.
Tensor bce_with_logits(const Tensor& logits,
                       const std::vector<double>& targets,
                       const std::vector<double>& weights);

/// Inverted dropout: training draws a deterministic mask from the stream
/// and scales kept entries by 1/(1-rate); evaluation is the identity.
Tensor dropout(const Tensor& a, double rate, RngStream& rng, bool training);

// ---- gradient checking -------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// f(theta, grad_out): returns the scalar loss at theta; when grad_out is
/// non-null it must also fill the analytic gradient (same length as theta).
/// Central differences (f(t+h) - f(t-h)) / 2h per coordinate; the relative
/// error denominator is max(1, |analytic|, |numeric|).
GradCheckResult grad_check(
    const std::function<double(const std::vector<double>&,
                               std::vector<double>*)>& f,
    const std::vector<double>& theta, double h);

}  // namespace cpaformer::tensor
