// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cpaformer/errors.hpp"

namespace cpaformer::tensor {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

Tape* same_tape(const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), "undefined tensor operand");
  require(a.tape() == b.tape(), "operands live on different tapes");
  return a.tape();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

enum class Broadcast { Same, Row, Scalar };

Broadcast classify(const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  throw ShapeError("incompatible shapes for elementwise op");
}

}  // namespace

int Tensor::rows() const { return tape_->node(id_).rows; }
int Tensor::cols() const { return tape_->node(id_).cols; }

double Tensor::at(int r, int c) const {
  return tape_->node(id_).value[static_cast<std::size_t>(r) * cols() + c];
}

double Tensor::scalar_value() const {
  require(rows() == 1 && cols() == 1, "tensor is not a scalar");
  return tape_->node(id_).value[0];
}

const std::vector<double>& Tensor::values() const {
  return tape_->node(id_).value;
}

Tensor Tape::emit(int rows, int cols, std::vector<double> value,
                  bool requires_grad, std::function<void(Tape&)> backprop,
                  const char* op_name) {
  for (double v : value) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value produced by ") +
                         op_name);
  }
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::leaf(const Matrix& m, bool requires_grad) {
  return emit(m.rows, m.cols, m.data, requires_grad, nullptr, "leaf");
}

void Tape::backward(const Tensor& loss) {
  require(loss.defined() && loss.tape() == this, "loss is not on this tape");
  require(loss.rows() == 1 && loss.cols() == 1,
          "backward requires a scalar loss");
  if (!grad_enabled_)
    throw NumericError("backward on a tape with gradients disabled");
  for (Node& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[loss.id()].grad[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.backprop) n.backprop(*this);
  }
  ran_backward_ = true;
}

std::vector<double> Tape::grad_of(const Tensor& t) const {
  require(t.defined() && t.tape() == this, "tensor is not on this tape");
  const Node& n = nodes_[t.id()];
  if (!ran_backward_ || n.grad.empty())
    return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

// ---- elementwise ---------------------------------------------------------

// Ops build closures that need the id of their own output node, which is
// only known at emit time; emit_with_self captures it up front.
namespace {

template <typename Fn>
Tensor emit_with_self(Tape* t, int rows, int cols, std::vector<double> out,
                      bool rg, Fn&& fn, const char* name) {
  // reserve the slot first so the closure can capture its id
  const int self = static_cast<int>(t->num_nodes());
  return t->emit(rows, cols, std::move(out), rg,
                 [self, fn](Tape& tp) { fn(tp, self); }, name);
}

void accumulate_broadcast(Tape& tp, int src_id, int out_grad_id,
                          Broadcast bc, int rows, int cols, double sign) {
  auto& gsrc = tp.node(src_id).grad;
  const auto& g = tp.node(out_grad_id).grad;
  if (bc == Broadcast::Same) {
    for (std::size_t i = 0; i < g.size(); ++i) gsrc[i] += sign * g[i];
  } else if (bc == Broadcast::Row) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        gsrc[c] += sign * g[static_cast<std::size_t>(r) * cols + c];
  } else {
    double acc = 0.0;
    for (double v : g) acc += v;
    gsrc[0] += sign * acc;
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Broadcast bc = classify(a, b);
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  const auto& bv = t->node(b.id()).value;
  std::vector<double> out(av.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      out[i] = av[i] + (bc == Broadcast::Same   ? bv[i]
                        : bc == Broadcast::Row ? bv[c]
                                               : bv[0]);
    }
  const int aid = a.id(), bid = b.id();
  const bool rg = t->node(aid).requires_grad || t->node(bid).requires_grad;
  return emit_with_self(
      t, rows, cols, std::move(out), rg,
      [aid, bid, bc, rows, cols](Tape& tp, int self) {
        if (tp.node(aid).requires_grad) {
          auto& ga = tp.node(aid).grad;
          const auto& g = tp.node(self).grad;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.node(bid).requires_grad)
          accumulate_broadcast(tp, bid, self, bc, rows, cols, 1.0);
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Broadcast bc = classify(a, b);
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  const auto& bv = t->node(b.id()).value;
  std::vector<double> out(av.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      out[i] = av[i] - (bc == Broadcast::Same   ? bv[i]
                        : bc == Broadcast::Row ? bv[c]
                                               : bv[0]);
    }
  const int aid = a.id(), bid = b.id();
  const bool rg = t->node(aid).requires_grad || t->node(bid).requires_grad;
  return emit_with_self(
      t, rows, cols, std::move(out), rg,
      [aid, bid, bc, rows, cols](Tape& tp, int self) {
        if (tp.node(aid).requires_grad) {
          auto& ga = tp.node(aid).grad;
          const auto& g = tp.node(self).grad;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.node(bid).requires_grad)
          accumulate_broadcast(tp, bid, self, bc, rows, cols, -1.0);
      },
      "sub");
}

Tensor neg(const Tensor& a) { return mul_const(a, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Broadcast bc = classify(a, b);
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  const auto& bv = t->node(b.id()).value;
  std::vector<double> out(av.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      out[i] = av[i] * (bc == Broadcast::Same   ? bv[i]
                        : bc == Broadcast::Row ? bv[c]
                                               : bv[0]);
    }
  const int aid = a.id(), bid = b.id();
  const bool rg = t->node(aid).requires_grad || t->node(bid).requires_grad;
  return emit_with_self(
      t, rows, cols, std::move(out), rg,
      [aid, bid, bc, rows, cols](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        const auto& av2 = tp.node(aid).value;
        const auto& bv2 = tp.node(bid).value;
        if (tp.node(aid).requires_grad) {
          auto& ga = tp.node(aid).grad;
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
              const std::size_t i = static_cast<std::size_t>(r) * cols + c;
              const double bval = bc == Broadcast::Same   ? bv2[i]
                                  : bc == Broadcast::Row ? bv2[c]
                                                         : bv2[0];
              ga[i] += g[i] * bval;
            }
        }
        if (tp.node(bid).requires_grad) {
          auto& gb = tp.node(bid).grad;
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
              const std::size_t i = static_cast<std::size_t>(r) * cols + c;
              const std::size_t j = bc == Broadcast::Same   ? i
                                    : bc == Broadcast::Row ? c
                                                           : 0;
              gb[j] += g[i] * av2[i];
            }
        }
      },
      "mul");
}

Tensor add_const(const Tensor& a, double cst) {
  Tape* t = a.tape();
  std::vector<double> out = t->node(a.id()).value;
  for (double& v : out) v += cst;
  const int aid = a.id();
  return emit_with_self(
      t, a.rows(), a.cols(), std::move(out), t->node(aid).requires_grad,
      [aid](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      },
      "add_const");
}

Tensor mul_const(const Tensor& a, double cst) {
  Tape* t = a.tape();
  std::vector<double> out = t->node(a.id()).value;
  for (double& v : out) v *= cst;
  const int aid = a.id();
  return emit_with_self(
      t, a.rows(), a.cols(), std::move(out), t->node(aid).requires_grad,
      [aid, cst](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += cst * g[i];
      },
      "mul_const");
}

// ---- matrix products -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  require(a.cols() == b.rows(), "matmul inner dimensions differ");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  const auto& av = t->node(a.id()).value;
  const auto& bv = t->node(b.id()).value;
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * n + j] +=
            aip * bv[static_cast<std::size_t>(p) * n + j];
    }
  const int aid = a.id(), bid = b.id();
  const bool rg = t->node(aid).requires_grad || t->node(bid).requires_grad;
  return emit_with_self(
      t, m, n, std::move(out), rg,
      [aid, bid, m, k, n](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        const auto& av2 = tp.node(aid).value;
        const auto& bv2 = tp.node(bid).value;
        if (tp.node(aid).requires_grad) {
          auto& ga = tp.node(aid).grad;  // g * b^T
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gij = g[static_cast<std::size_t>(i) * n + j];
              if (gij == 0.0) continue;
              for (int p = 0; p < k; ++p)
                ga[static_cast<std::size_t>(i) * k + p] +=
                    gij * bv2[static_cast<std::size_t>(p) * n + j];
            }
        }
        if (tp.node(bid).requires_grad) {
          auto& gb = tp.node(bid).grad;  // a^T * g
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              const double aip = av2[static_cast<std::size_t>(i) * k + p];
              if (aip == 0.0) continue;
              for (int j = 0; j < n; ++j)
                gb[static_cast<std::size_t>(p) * n + j] +=
                    aip * g[static_cast<std::size_t>(i) * n + j];
            }
        }
      },
      "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  require(a.cols() == b.cols(), "matmul_nt inner dimensions differ");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  const auto& av = t->node(a.id()).value;
  const auto& bv = t->node(b.id()).value;
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p)
        acc += av[static_cast<std::size_t>(i) * k + p] *
               bv[static_cast<std::size_t>(j) * k + p];
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  const int aid = a.id(), bid = b.id();
  const bool rg = t->node(aid).requires_grad || t->node(bid).requires_grad;
  return emit_with_self(
      t, m, n, std::move(out), rg,
      [aid, bid, m, k, n](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        const auto& av2 = tp.node(aid).value;
        const auto& bv2 = tp.node(bid).value;
        if (tp.node(aid).requires_grad) {
          auto& ga = tp.node(aid).grad;  // g * b
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gij = g[static_cast<std::size_t>(i) * n + j];
              if (gij == 0.0) continue;
              for (int p = 0; p < k; ++p)
                ga[static_cast<std::size_t>(i) * k + p] +=
                    gij * bv2[static_cast<std::size_t>(j) * k + p];
            }
        }
        if (tp.node(bid).requires_grad) {
          auto& gb = tp.node(bid).grad;  // g^T * a
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gij = g[static_cast<std::size_t>(i) * n + j];
              if (gij == 0.0) continue;
              for (int p = 0; p < k; ++p)
                gb[static_cast<std::size_t>(j) * k + p] +=
                    gij * av2[static_cast<std::size_t>(i) * k + p];
            }
        }
      },
      "matmul_nt");
}

Tensor transpose(const Tensor& a) {
  Tape* t = a.tape();
  const int m = a.rows(), n = a.cols();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] =
          av[static_cast<std::size_t>(i) * n + j];
  const int aid = a.id();
  return emit_with_self(
      t, n, m, std::move(out), t->node(aid).requires_grad,
      [aid, m, n](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            ga[static_cast<std::size_t>(i) * n + j] +=
                g[static_cast<std::size_t>(j) * m + i];
      },
      "transpose");
}

// ---- structure -----------------------------------------------------------

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
  Tape* t = a.tape();
  const int n = a.rows(), c = a.cols();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(rows.size() * static_cast<std::size_t>(c));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] >= 0 && rows[r] < n, "gather_rows index out of range");
    std::memcpy(&out[r * c], &av[static_cast<std::size_t>(rows[r]) * c],
                sizeof(double) * c);
  }
  const int aid = a.id();
  return emit_with_self(
      t, static_cast<int>(rows.size()), c, std::move(out),
      t->node(aid).requires_grad,
      [aid, rows, c](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (int j = 0; j < c; ++j)
            ga[static_cast<std::size_t>(rows[r]) * c + j] +=
                g[r * c + j];
      },
      "gather_rows");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols needs at least one part");
  Tape* t = parts[0].tape();
  const int rows = parts[0].rows();
  int cols = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.tape() == t, "concat_cols across tapes");
    require(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
    rg = rg || t->node(p.id()).requires_grad;
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  std::vector<int> ids, widths;
  int off = 0;
  for (const Tensor& p : parts) {
    const auto& pv = t->node(p.id()).value;
    const int w = p.cols();
    for (int r = 0; r < rows; ++r)
      std::memcpy(&out[static_cast<std::size_t>(r) * cols + off],
                  &pv[static_cast<std::size_t>(r) * w], sizeof(double) * w);
    ids.push_back(p.id());
    widths.push_back(w);
    off += w;
  }
  return emit_with_self(
      t, rows, cols, std::move(out), rg,
      [ids, widths, rows, cols](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        int off2 = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          const int w = widths[p];
          if (tp.node(ids[p]).requires_grad) {
            auto& gp = tp.node(ids[p]).grad;
            for (int r = 0; r < rows; ++r)
              for (int j = 0; j < w; ++j)
                gp[static_cast<std::size_t>(r) * w + j] +=
                    g[static_cast<std::size_t>(r) * cols + off2 + j];
          }
          off2 += w;
        }
      },
      "concat_cols");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows needs at least one part");
  Tape* t = parts[0].tape();
  const int cols = parts[0].cols();
  int rows = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.tape() == t, "concat_rows across tapes");
    require(p.cols() == cols, "concat_rows column mismatch");
    rows += p.rows();
    rg = rg || t->node(p.id()).requires_grad;
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  std::vector<int> ids, heights;
  for (const Tensor& p : parts) {
    const auto& pv = t->node(p.id()).value;
    out.insert(out.end(), pv.begin(), pv.end());
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  return emit_with_self(
      t, rows, cols, std::move(out), rg,
      [ids, heights, cols](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          const std::size_t len =
              static_cast<std::size_t>(heights[p]) * cols;
          if (tp.node(ids[p]).requires_grad) {
            auto& gp = tp.node(ids[p]).grad;
            for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
          }
          off += len;
        }
      },
      "concat_rows");
}

Tensor slice_cols(const Tensor& a, int first, int count) {
  Tape* t = a.tape();
  require(first >= 0 && count >= 1 && first + count <= a.cols(),
          "slice_cols out of range");
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(static_cast<std::size_t>(rows) * count);
  for (int r = 0; r < rows; ++r)
    std::memcpy(&out[static_cast<std::size_t>(r) * count],
                &av[static_cast<std::size_t>(r) * cols + first],
                sizeof(double) * count);
  const int aid = a.id();
  return emit_with_self(
      t, rows, count, std::move(out), t->node(aid).requires_grad,
      [aid, first, count, rows, cols](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < count; ++j)
            ga[static_cast<std::size_t>(r) * cols + first + j] +=
                g[static_cast<std::size_t>(r) * count + j];
      },
      "slice_cols");
}

// ---- reductions ------------------------------------------------------------

Tensor sum_rows(const Tensor& a) {
  Tape* t = a.tape();
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(cols, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[c] += av[static_cast<std::size_t>(r) * cols + c];
  const int aid = a.id();
  return emit_with_self(
      t, 1, cols, std::move(out), t->node(aid).requires_grad,
      [aid, rows, cols](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            ga[static_cast<std::size_t>(r) * cols + c] += g[c];
      },
      "sum_rows");
}

Tensor sum_all(const Tensor& a) {
  Tape* t = a.tape();
  const auto& av = t->node(a.id()).value;
  double acc = 0.0;
  for (double v : av) acc += v;
  const int aid = a.id();
  return emit_with_self(
      t, 1, 1, std::vector<double>{acc}, t->node(aid).requires_grad,
      [aid](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const double g = tp.node(self).grad[0];
        for (double& v : ga) v += g;
      },
      "sum_all");
}

Tensor mean_pool(const Tensor& a) {
  return mul_const(sum_rows(a), 1.0 / a.rows());
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  Tape* t = same_tape(a, s);
  require(s.rows() == a.rows() && s.cols() == 1,
          "scale_rows expects a rows x 1 scale");
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  const auto& sv = t->node(s.id()).value;
  std::vector<double> out(av.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] =
          av[static_cast<std::size_t>(r) * cols + c] * sv[r];
  const int aid = a.id(), sid = s.id();
  const bool rg = t->node(aid).requires_grad || t->node(sid).requires_grad;
  return emit_with_self(
      t, rows, cols, std::move(out), rg,
      [aid, sid, rows, cols](Tape& tp, int self) {
        const auto& g = tp.node(self).grad;
        const auto& av2 = tp.node(aid).value;
        const auto& sv2 = tp.node(sid).value;
        if (tp.node(aid).requires_grad) {
          auto& ga = tp.node(aid).grad;
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              ga[static_cast<std::size_t>(r) * cols + c] +=
                  g[static_cast<std::size_t>(r) * cols + c] * sv2[r];
        }
        if (tp.node(sid).requires_grad) {
          auto& gs = tp.node(sid).grad;
          for (int r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (int c = 0; c < cols; ++c)
              acc += g[static_cast<std::size_t>(r) * cols + c] *
                     av2[static_cast<std::size_t>(r) * cols + c];
            gs[r] += acc;
          }
        }
      },
      "scale_rows");
}

Tensor reciprocal(const Tensor& a) {
  Tape* t = a.tape();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = 1.0 / av[i];
  const int aid = a.id();
  return emit_with_self(
      t, a.rows(), a.cols(), std::move(out), t->node(aid).requires_grad,
      [aid](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        const auto& y = tp.node(self).value;
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] -= g[i] * y[i] * y[i];
      },
      "reciprocal");
}

// ---- nonlinearities --------------------------------------------------------

namespace {

template <typename FwdFn, typename BwdFn>
Tensor unary_op(const Tensor& a, FwdFn fwd, BwdFn bwd, const char* name) {
  Tape* t = a.tape();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const int aid = a.id();
  return emit_with_self(
      t, a.rows(), a.cols(), std::move(out), t->node(aid).requires_grad,
      [aid, bwd](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        const auto& x = tp.node(aid).value;
        const auto& y = tp.node(self).value;
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * bwd(x[i], y[i]);
      },
      name);
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a, [](double x) { return stable_softplus(x); },
      [](double x, double) { return stable_sigmoid(x); }, "softplus");
}

// ---- softmax / norms -------------------------------------------------------

Tensor masked_softmax(const Tensor& logits, const Mask& mask) {
  Tape* t = logits.tape();
  const int rows = logits.rows(), cols = logits.cols();
  require(static_cast<int>(mask.size()) == rows * cols,
          "mask size mismatch");
  const auto& lv = t->node(logits.id()).value;
  std::vector<double> out(lv.size(), 0.0);
  for (int r = 0; r < rows; ++r) {
    double mx = 0.0;
    bool any = false;
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      if (!mask[i]) continue;
      mx = any ? std::max(mx, lv[i]) : lv[i];
      any = true;
    }
    if (!any)
      throw NumericError("masked_softmax row with no allowed positions");
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      if (!mask[i]) continue;
      out[i] = std::exp(lv[i] - mx);
      denom += out[i];
    }
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      if (mask[i]) out[i] /= denom;
    }
  }
  const int lid = logits.id();
  return emit_with_self(
      t, rows, cols, std::move(out), t->node(lid).requires_grad,
      [lid, mask, rows, cols](Tape& tp, int self) {
        auto& gl = tp.node(lid).grad;
        const auto& g = tp.node(self).grad;
        const auto& y = tp.node(self).value;
        for (int r = 0; r < rows; ++r) {
          double s = 0.0;
          for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            if (mask[i]) s += g[i] * y[i];
          }
          for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            if (mask[i]) gl[i] += y[i] * (g[i] - s);
          }
        }
      },
      "masked_softmax");
}

Tensor layer_norm(const Tensor& a, double eps) {
  Tape* t = a.tape();
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(av.size());
  std::vector<double> inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int c = 0; c < cols; ++c)
      mean += av[static_cast<std::size_t>(r) * cols + c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = av[static_cast<std::size_t>(r) * cols + c] - mean;
      var += d * d;
    }
    var /= cols;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] =
          (av[static_cast<std::size_t>(r) * cols + c] - mean) * inv_std[r];
  }
  const int aid = a.id();
  return emit_with_self(
      t, rows, cols, std::move(out), t->node(aid).requires_grad,
      [aid, inv_std, rows, cols](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        const auto& y = tp.node(self).value;
        for (int r = 0; r < rows; ++r) {
          double gmean = 0.0, gymean = 0.0;
          for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            gmean += g[i];
            gymean += g[i] * y[i];
          }
          gmean /= cols;
          gymean /= cols;
          for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            ga[i] += inv_std[r] * (g[i] - gmean - y[i] * gymean);
          }
        }
      },
      "layer_norm");
}

Tensor l2_normalize_rows(const Tensor& a) {
  Tape* t = a.tape();
  const int rows = a.rows(), cols = a.cols();
  const auto& av = t->node(a.id()).value;
  std::vector<double> out(av.size());
  std::vector<double> norms(rows);
  for (int r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double v = av[static_cast<std::size_t>(r) * cols + c];
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0))
      throw NumericError("l2_normalize_rows on a zero row");
    norms[r] = norm;
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] =
          av[static_cast<std::size_t>(r) * cols + c] / norm;
  }
  const int aid = a.id();
  return emit_with_self(
      t, rows, cols, std::move(out), t->node(aid).requires_grad,
      [aid, norms, rows, cols](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        const auto& y = tp.node(self).value;
        for (int r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            dot += g[i] * y[i];
          }
          for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            ga[i] += (g[i] - y[i] * dot) / norms[r];
          }
        }
      },
      "l2_normalize_rows");
}

// ---- losses ----------------------------------------------------------------

Tensor cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int>& targets,
                                 const Mask* mask,
                                 const std::vector<double>* weights) {
  Tape* t = logits.tape();
  const int rows = logits.rows(), cols = logits.cols();
  require(static_cast<int>(targets.size()) == rows,
          "one target per logits row required");
  if (mask)
    require(static_cast<int>(mask->size()) == rows * cols,
            "mask size mismatch");
  if (weights)
    require(static_cast<int>(weights->size()) == rows,
            "one weight per row required");
  const auto& lv = t->node(logits.id()).value;
  std::vector<double> probs(lv.size(), 0.0);
  double weight_sum = 0.0;
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int target = targets[r];
    require(target >= 0 && target < cols, "target out of range");
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    if (mask && !(*mask)[base + target])
      throw NumericError("cross entropy target is a forbidden position");
    double mx = 0.0;
    bool any = false;
    for (int c = 0; c < cols; ++c) {
      if (mask && !(*mask)[base + c]) continue;
      mx = any ? std::max(mx, lv[base + c]) : lv[base + c];
      any = true;
    }
    if (!any) throw NumericError("cross entropy row with no allowed logits");
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) {
      if (mask && !(*mask)[base + c]) continue;
      probs[base + c] = std::exp(lv[base + c] - mx);
      denom += probs[base + c];
    }
    for (int c = 0; c < cols; ++c) {
      if (mask && !(*mask)[base + c]) continue;
      probs[base + c] /= denom;
    }
    const double w = weights ? (*weights)[r] : 1.0;
    weight_sum += w;
    loss += w * (std::log(denom) + mx - lv[base + target]);
  }
  if (weight_sum <= 0.0)
    throw NumericError("cross entropy weights sum to zero");
  loss /= weight_sum;
  const int lid = logits.id();
  const Mask mask_copy = mask ? *mask : Mask{};
  const std::vector<double> w_copy =
      weights ? *weights : std::vector<double>{};
  return emit_with_self(
      t, 1, 1, std::vector<double>{loss}, t->node(lid).requires_grad,
      [lid, targets, probs, mask_copy, w_copy, weight_sum, rows,
       cols](Tape& tp, int self) {
        auto& gl = tp.node(lid).grad;
        const double gscale = tp.node(self).grad[0] / weight_sum;
        for (int r = 0; r < rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r) * cols;
          const double w = w_copy.empty() ? 1.0 : w_copy[r];
          for (int c = 0; c < cols; ++c) {
            if (!mask_copy.empty() && !mask_copy[base + c]) continue;
            const double p = probs[base + c];
            const double onehot = c == targets[r] ? 1.0 : 0.0;
            gl[base + c] += gscale * w * (p - onehot);
          }
        }
      },
      "cross_entropy_with_logits");
}

Tensor bce_with_logits(const Tensor& logits,
                       const std::vector<double>& targets,
                       const std::vector<double>& weights) {
  Tape* t = logits.tape();
  const int rows = logits.rows();
  require(logits.cols() == 1, "bce_with_logits expects n x 1 logits");
  require(static_cast<int>(targets.size()) == rows &&
              static_cast<int>(weights.size()) == rows,
          "targets/weights length mismatch");
  const auto& lv = t->node(logits.id()).value;
  double wsum = 0.0, loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    wsum += weights[r];
    loss += weights[r] * (stable_softplus(lv[r]) - lv[r] * targets[r]);
  }
  if (wsum <= 0.0) throw NumericError("bce weights sum to zero");
  loss /= wsum;
  const int lid = logits.id();
  return emit_with_self(
      t, 1, 1, std::vector<double>{loss}, t->node(lid).requires_grad,
      [lid, targets, weights, wsum, rows](Tape& tp, int self) {
        auto& gl = tp.node(lid).grad;
        const auto& x = tp.node(lid).value;
        const double gscale = tp.node(self).grad[0] / wsum;
        for (int r = 0; r < rows; ++r)
          gl[r] += gscale * weights[r] * (stable_sigmoid(x[r]) - targets[r]);
      },
      "bce_with_logits");
}

Tensor dropout(const Tensor& a, double rate, RngStream& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  require(rate < 1.0, "dropout rate must be in [0, 1)");
  Tape* t = a.tape();
  const auto& av = t->node(a.id()).value;
  const double keep = 1.0 - rate;
  std::vector<double> mask(av.size());
  for (double& m : mask) m = rng.next_bernoulli(rate) ? 0.0 : 1.0 / keep;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * mask[i];
  const int aid = a.id();
  return emit_with_self(
      t, a.rows(), a.cols(), std::move(out), t->node(aid).requires_grad,
      [aid, mask](Tape& tp, int self) {
        auto& ga = tp.node(aid).grad;
        const auto& g = tp.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
      },
      "dropout");
}

GradCheckResult grad_check(
    const std::function<double(const std::vector<double>&,
                               std::vector<double>*)>& f,
    const std::vector<double>& theta, double h) {
  if (!(h >= 1e-7 && h <= 1e-3))
    throw ConfigError("grad_check step must lie in [1e-7, 1e-3]");
  std::vector<double> analytic(theta.size(), 0.0);
  f(theta, &analytic);
  GradCheckResult result;
  std::vector<double> probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double up = f(probe, nullptr);
    probe[i] = theta[i] - h;
    const double down = f(probe, nullptr);
    probe[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("non-finite evaluation during grad_check");
    const double numeric = (up - down) / (2.0 * h);
    const double denom =
        std::max({1.0, std::abs(numeric), std::abs(analytic[i])});
    const double rel = std::abs(numeric - analytic[i]) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = static_cast<int>(i);
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace cpaformer::tensor
