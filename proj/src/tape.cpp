#include "fbsde/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fbsde {

namespace {

[[noreturn]] void shape_error(const char* prim, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(prim) + ": operand shapes " + a.shape_str() +
                              " and " + b.shape_str() + " are incompatible");
}

[[noreturn]] void shape_error(const char* prim, const Tensor& a) {
  throw std::invalid_argument(std::string(prim) + ": operand shape " + a.shape_str() +
                              " is not supported");
}

void require_same_tape(Val a, Val b) {
  if (a.tape != b.tape)
    throw std::invalid_argument("tape: operands were recorded on different tapes");
}

void require_matrix(const char* prim, const Tensor& t) {
  if (t.rank() != 2) shape_error(prim, t);
}

}  // namespace

Val Tape::push(Node n) {
  if (!n.value.all_finite()) {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < n.value.size(); ++i)
      if (!std::isfinite(n.value[i])) {
        flat = i;
        break;
      }
    const std::size_t width =
        n.value.rank() >= 2 ? n.value.size() / n.value.dim(0) : n.value.size();
    throw NonFiniteError("tape: non-finite value produced at node " +
                             std::to_string(nodes_.size()),
                         nodes_.size(), flat, width ? flat / width : 0);
  }
  nodes_.push_back(std::move(n));
  return Val{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Val Tape::constant(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.op = Op::kLeaf;
  return push(std::move(n));
}

Val Tape::param(const Tensor& v, std::size_t slot) {
  if (slot < slot_to_node_.size() && slot_to_node_[slot] != UINT32_MAX)
    throw std::invalid_argument("tape: parameter slot " + std::to_string(slot) +
                                " bound twice");
  Node n;
  n.value = v;
  n.op = Op::kLeaf;
  n.slot = static_cast<std::int32_t>(slot);
  Val out = push(std::move(n));
  if (slot >= slot_to_node_.size()) slot_to_node_.resize(slot + 1, UINT32_MAX);
  slot_to_node_[slot] = out.id;
  return out;
}

Val Tape::add(Val a, Val b) {
  require_same_tape(a, b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) shape_error("add", ta, tb);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] + tb[i];
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Val Tape::sub(Val a, Val b) {
  require_same_tape(a, b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) shape_error("sub", ta, tb);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] - tb[i];
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Val Tape::mul(Val a, Val b) {
  require_same_tape(a, b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) shape_error("mul", ta, tb);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] * tb[i];
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Val Tape::div(Val a, Val b) {
  require_same_tape(a, b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) shape_error("div", ta, tb);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] / tb[i];
  n.op = Op::kDiv;
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Val Tape::scale(Val a, double c) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = c * ta[i];
  n.op = Op::kScale;
  n.a = a.id;
  n.c = c;
  return push(std::move(n));
}

Val Tape::add_scalar(Val a, double c) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] + c;
  n.op = Op::kAddScalar;
  n.a = a.id;
  n.c = c;
  return push(std::move(n));
}

Val Tape::matmul(Val a, Val b) {
  require_same_tape(a, b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_matrix("matmul", ta);
  require_matrix("matmul", tb);
  if (ta.dim(1) != tb.dim(0)) shape_error("matmul", ta, tb);
  const std::size_t p = ta.dim(0), q = ta.dim(1), r = tb.dim(1);
  Node n;
  n.value = Tensor({p, r});
  const double* A = ta.data();
  const double* B = tb.data();
  double* Y = n.value.data();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = A[i * q + k];
      if (aik == 0.0) continue;
      const double* Bk = B + k * r;
      double* Yi = Y + i * r;
      for (std::size_t j = 0; j < r; ++j) Yi[j] += aik * Bk[j];
    }
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  return push(std::move(n));
}

Val Tape::add_rowvec(Val a, Val v) {
  require_same_tape(a, v);
  const Tensor& ta = value(a);
  const Tensor& tv = value(v);
  require_matrix("add_rowvec", ta);
  if (tv.rank() != 1 || tv.dim(0) != ta.dim(1)) shape_error("add_rowvec", ta, tv);
  const std::size_t rows = ta.dim(0), cols = ta.dim(1);
  Node n;
  n.value = Tensor({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) n.value[i * cols + j] = ta[i * cols + j] + tv[j];
  n.op = Op::kAddRowVec;
  n.a = a.id;
  n.b = v.id;
  return push(std::move(n));
}

Val Tape::repeat_rows(Val v, std::size_t rows) {
  const Tensor& tv = value(v);
  if (tv.rank() != 1) shape_error("repeat_rows", tv);
  if (rows == 0) throw std::invalid_argument("repeat_rows: row count must be positive");
  const std::size_t cols = tv.dim(0);
  Node n;
  n.value = Tensor({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) n.value[i * cols + j] = tv[j];
  n.op = Op::kRepeatRows;
  n.a = v.id;
  n.i0 = static_cast<std::uint32_t>(rows);
  return push(std::move(n));
}

Val Tape::add_col_bcast(Val a, Val col) {
  require_same_tape(a, col);
  const Tensor& ta = value(a);
  const Tensor& tc = value(col);
  require_matrix("add_col_bcast", ta);
  if (tc.rank() != 2 || tc.dim(0) != ta.dim(0) || tc.dim(1) != 1)
    shape_error("add_col_bcast", ta, tc);
  const std::size_t rows = ta.dim(0), cols = ta.dim(1);
  Node n;
  n.value = Tensor({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      n.value[i * cols + j] = ta[i * cols + j] + tc[i];
  n.op = Op::kAddColBcast;
  n.a = a.id;
  n.b = col.id;
  return push(std::move(n));
}

Val Tape::mul_col_bcast(Val a, Val col) {
  require_same_tape(a, col);
  const Tensor& ta = value(a);
  const Tensor& tc = value(col);
  require_matrix("mul_col_bcast", ta);
  if (tc.rank() != 2 || tc.dim(0) != ta.dim(0) || tc.dim(1) != 1)
    shape_error("mul_col_bcast", ta, tc);
  const std::size_t rows = ta.dim(0), cols = ta.dim(1);
  Node n;
  n.value = Tensor({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      n.value[i * cols + j] = ta[i * cols + j] * tc[i];
  n.op = Op::kMulColBcast;
  n.a = a.id;
  n.b = col.id;
  return push(std::move(n));
}

Val Tape::diag_embed(Val v) {
  const Tensor& tv = value(v);
  require_matrix("diag_embed", tv);
  const std::size_t rows = tv.dim(0), q = tv.dim(1);
  Node n;
  n.value = Tensor({rows, q * q});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < q; ++j)
      n.value[i * q * q + j * q + j] = tv[i * q + j];
  n.op = Op::kDiagEmbed;
  n.a = v.id;
  n.i0 = static_cast<std::uint32_t>(q);
  return push(std::move(n));
}

Val Tape::relu(Val a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] > 0.0 ? ta[i] : 0.0;
  n.op = Op::kRelu;
  n.a = a.id;
  return push(std::move(n));
}

Val Tape::sin(Val a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = std::sin(ta[i]);
  n.op = Op::kSin;
  n.a = a.id;
  return push(std::move(n));
}

Val Tape::cos(Val a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = std::cos(ta[i]);
  n.op = Op::kCos;
  n.a = a.id;
  return push(std::move(n));
}

Val Tape::exp(Val a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = std::exp(ta[i]);
  n.op = Op::kExp;
  n.a = a.id;
  return push(std::move(n));
}

Val Tape::square(Val a) {
  const Tensor& ta = value(a);
  Node n;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] * ta[i];
  n.op = Op::kSquare;
  n.a = a.id;
  return push(std::move(n));
}

Val Tape::sum_all(Val a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
  Node n;
  n.value = Tensor::scalar(s);
  n.op = Op::kSumAll;
  n.a = a.id;
  return push(std::move(n));
}

Val Tape::row_sum(Val a) {
  const Tensor& ta = value(a);
  require_matrix("row_sum", ta);
  const std::size_t rows = ta.dim(0), cols = ta.dim(1);
  Node n;
  n.value = Tensor({rows, 1});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += ta[i * cols + j];
    n.value[i] = s;
  }
  n.op = Op::kRowSum;
  n.a = a.id;
  return push(std::move(n));
}

Val Tape::concat_cols(Val a, Val b) {
  require_same_tape(a, b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_matrix("concat_cols", ta);
  require_matrix("concat_cols", tb);
  if (ta.dim(0) != tb.dim(0)) shape_error("concat_cols", ta, tb);
  const std::size_t rows = ta.dim(0), p = ta.dim(1), q = tb.dim(1);
  Node n;
  n.value = Tensor({rows, p + q});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < p; ++j) n.value[i * (p + q) + j] = ta[i * p + j];
    for (std::size_t j = 0; j < q; ++j) n.value[i * (p + q) + p + j] = tb[i * q + j];
  }
  n.op = Op::kConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.i0 = static_cast<std::uint32_t>(p);
  return push(std::move(n));
}

Val Tape::bmatvec(Val a, Val w) {
  require_same_tape(a, w);
  const Tensor& ta = value(a);
  const Tensor& tw = value(w);
  require_matrix("bmatvec", ta);
  require_matrix("bmatvec", tw);
  const std::size_t rows = ta.dim(0), d = tw.dim(1);
  if (tw.dim(0) != rows || d == 0 || ta.dim(1) % d != 0) shape_error("bmatvec", ta, tw);
  const std::size_t nout = ta.dim(1) / d;
  Node n;
  n.value = Tensor({rows, nout});
  for (std::size_t mrow = 0; mrow < rows; ++mrow) {
    const double* Am = ta.data() + mrow * nout * d;
    const double* Wm = tw.data() + mrow * d;
    double* Ym = n.value.data() + mrow * nout;
    for (std::size_t i = 0; i < nout; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += Am[i * d + j] * Wm[j];
      Ym[i] = s;
    }
  }
  n.op = Op::kBMatVec;
  n.a = a.id;
  n.b = w.id;
  n.i0 = static_cast<std::uint32_t>(nout);
  return push(std::move(n));
}

std::vector<Tensor> Tape::backward(Val loss) const {
  if (loss.tape != this) throw std::invalid_argument("backward: loss is not on this tape");
  const Tensor& lv = value(loss);
  if (lv.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + lv.shape_str());

  std::vector<Tensor> grad(nodes_.size());
  auto touch = [&](std::uint32_t id) -> Tensor& {
    if (grad[id].size() == 0) grad[id] = Tensor(nodes_[id].value.shape());
    return grad[id];
  };
  touch(loss.id)[0] = 1.0;

  std::vector<Tensor> by_slot(slot_to_node_.size());
  for (std::size_t s = 0; s < slot_to_node_.size(); ++s)
    if (slot_to_node_[s] != UINT32_MAX)
      by_slot[s] = Tensor(nodes_[slot_to_node_[s]].value.shape());

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    if (grad[idx].size() == 0) continue;  // never reached from the loss
    const Node& nd = nodes_[idx];
    const Tensor& g = grad[idx];

    switch (nd.op) {
      case Op::kLeaf:
        if (nd.slot >= 0) by_slot[static_cast<std::size_t>(nd.slot)] = g;
        break;
      case Op::kAdd: {
        Tensor& ga = touch(nd.a);
        Tensor& gb = touch(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = touch(nd.a);
        Tensor& gb = touch(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& va = nodes_[nd.a].value;
        const Tensor& vb = nodes_[nd.b].value;
        Tensor& ga = touch(nd.a);
        Tensor& gb = touch(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * vb[i];
          gb[i] += g[i] * va[i];
        }
        break;
      }
      case Op::kDiv: {
        const Tensor& vb = nodes_[nd.b].value;
        const Tensor& vout = nd.value;
        Tensor& ga = touch(nd.a);
        Tensor& gb = touch(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] / vb[i];
          gb[i] -= g[i] * vout[i] / vb[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += nd.c * g[i];
        break;
      }
      case Op::kAddScalar: {
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::kMatMul: {
        const Tensor& va = nodes_[nd.a].value;
        const Tensor& vb = nodes_[nd.b].value;
        const std::size_t p = va.dim(0), q = va.dim(1), r = vb.dim(1);
        Tensor& ga = touch(nd.a);
        Tensor& gb = touch(nd.b);
        const double* G = g.data();
        const double* A = va.data();
        const double* B = vb.data();
        // dA = G B^T via row dot products; both rows contiguous.
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t k = 0; k < q; ++k) {
            const double* Gi = G + i * r;
            const double* Bk = B + k * r;
            double s = 0.0;
            for (std::size_t j = 0; j < r; ++j) s += Gi[j] * Bk[j];
            ga[i * q + k] += s;
          }
        // dB = A^T G accumulated row-wise.
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t k = 0; k < q; ++k) {
            const double aik = A[i * q + k];
            if (aik == 0.0) continue;
            const double* Gi = G + i * r;
            double* GBk = gb.data() + k * r;
            for (std::size_t j = 0; j < r; ++j) GBk[j] += aik * Gi[j];
          }
        break;
      }
      case Op::kAddRowVec: {
        const Tensor& va = nodes_[nd.a].value;
        const std::size_t rows = va.dim(0), cols = va.dim(1);
        Tensor& ga = touch(nd.a);
        Tensor& gv = touch(nd.b);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            ga[i * cols + j] += g[i * cols + j];
            gv[j] += g[i * cols + j];
          }
        break;
      }
      case Op::kRepeatRows: {
        const std::size_t rows = nd.i0;
        const std::size_t cols = nodes_[nd.a].value.dim(0);
        Tensor& gv = touch(nd.a);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) gv[j] += g[i * cols + j];
        break;
      }
      case Op::kAddColBcast: {
        const Tensor& va = nodes_[nd.a].value;
        const std::size_t rows = va.dim(0), cols = va.dim(1);
        Tensor& ga = touch(nd.a);
        Tensor& gc = touch(nd.b);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            ga[i * cols + j] += g[i * cols + j];
            gc[i] += g[i * cols + j];
          }
        break;
      }
      case Op::kMulColBcast: {
        const Tensor& va = nodes_[nd.a].value;
        const Tensor& vc = nodes_[nd.b].value;
        const std::size_t rows = va.dim(0), cols = va.dim(1);
        Tensor& ga = touch(nd.a);
        Tensor& gc = touch(nd.b);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            ga[i * cols + j] += g[i * cols + j] * vc[i];
            gc[i] += g[i * cols + j] * va[i * cols + j];
          }
        break;
      }
      case Op::kDiagEmbed: {
        const std::size_t q = nd.i0;
        const std::size_t rows = nodes_[nd.a].value.dim(0);
        Tensor& gv = touch(nd.a);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < q; ++j) gv[i * q + j] += g[i * q * q + j * q + j];
        break;
      }
      case Op::kRelu: {
        const Tensor& va = nodes_[nd.a].value;
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (va[i] > 0.0) ga[i] += g[i];
        break;
      }
      case Op::kSin: {
        const Tensor& va = nodes_[nd.a].value;
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::cos(va[i]);
        break;
      }
      case Op::kCos: {
        const Tensor& va = nodes_[nd.a].value;
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * std::sin(va[i]);
        break;
      }
      case Op::kExp: {
        const Tensor& vout = nd.value;
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vout[i];
        break;
      }
      case Op::kSquare: {
        const Tensor& va = nodes_[nd.a].value;
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * va[i];
        break;
      }
      case Op::kSumAll: {
        Tensor& ga = touch(nd.a);
        const double gs = g[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
        break;
      }
      case Op::kRowSum: {
        const Tensor& va = nodes_[nd.a].value;
        const std::size_t rows = va.dim(0), cols = va.dim(1);
        Tensor& ga = touch(nd.a);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += g[i];
        break;
      }
      case Op::kConcatCols: {
        const std::size_t p = nd.i0;
        const std::size_t rows = nd.value.dim(0);
        const std::size_t total = nd.value.dim(1);
        const std::size_t q = total - p;
        Tensor& ga = touch(nd.a);
        Tensor& gb = touch(nd.b);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * total + j];
          for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * total + p + j];
        }
        break;
      }
      case Op::kBMatVec: {
        const Tensor& va = nodes_[nd.a].value;
        const Tensor& vw = nodes_[nd.b].value;
        const std::size_t rows = va.dim(0);
        const std::size_t nout = nd.i0;
        const std::size_t d = vw.dim(1);
        Tensor& ga = touch(nd.a);
        Tensor& gw = touch(nd.b);
        for (std::size_t mrow = 0; mrow < rows; ++mrow) {
          const double* Gm = g.data() + mrow * nout;
          const double* Am = va.data() + mrow * nout * d;
          const double* Wm = vw.data() + mrow * d;
          double* GAm = ga.data() + mrow * nout * d;
          double* GWm = gw.data() + mrow * d;
          for (std::size_t i = 0; i < nout; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              GAm[i * d + j] += Gm[i] * Wm[j];
              GWm[j] += Gm[i] * Am[i * d + j];
            }
        }
        break;
      }
    }
    grad[idx] = Tensor();  // release as the sweep passes
  }
  return by_slot;
}

Val operator+(Val a, Val b) { return a.tape->add(a, b); }
Val operator-(Val a, Val b) { return a.tape->sub(a, b); }
Val operator*(Val a, Val b) { return a.tape->mul(a, b); }
Val operator/(Val a, Val b) { return a.tape->div(a, b); }
Val operator+(Val a, double c) { return a.tape->add_scalar(a, c); }
Val operator+(double c, Val a) { return a.tape->add_scalar(a, c); }
Val operator-(Val a, double c) { return a.tape->add_scalar(a, -c); }
Val operator-(double c, Val a) { return a.tape->add_scalar(a.tape->scale(a, -1.0), c); }
Val operator*(Val a, double c) { return a.tape->scale(a, c); }
Val operator*(double c, Val a) { return a.tape->scale(a, c); }
Val operator-(Val a) { return a.tape->scale(a, -1.0); }

}  // namespace fbsde
