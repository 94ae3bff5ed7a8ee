#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbsde/tensor.hpp"

namespace fbsde {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid as long as the
/// tape lives. One tape per training iteration, discarded after the update.
struct Val {
  Tape* tape = nullptr;
  std::uint32_t id = 0;
};

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,         // a + b, same shape
  kSub,         // a - b, same shape
  kMul,         // a * b elementwise, same shape
  kDiv,         // a / b elementwise, same shape
  kScale,       // c * a
  kAddScalar,   // a + c
  kMatMul,      // [p,q] x [q,r] -> [p,r]
  kAddRowVec,   // [M,q] + [q] broadcast over rows
  kRepeatRows,  // [q] -> [M,q]
  kAddColBcast, // [M,q] + [M,1] broadcast over columns
  kMulColBcast, // [M,q] * [M,1] broadcast over columns
  kDiagEmbed,   // [M,q] -> [M,q*q], values on the diagonal
  kRelu,
  kSin,
  kCos,
  kExp,
  kSquare,
  kSumAll,      // any shape -> [1]
  kRowSum,      // [M,q] -> [M,1]
  kConcatCols,  // [M,p] ++ [M,q] -> [M,p+q]
  kBMatVec,     // batched matvec: [M,n*d] (row-major n x d) times [M,d] -> [M,n]
};

/// Thrown when a primitive produces a NaN/Inf entry. Carries enough to point
/// at the offending batch row: `row` is flat_index / row_width for rank >= 2
/// outputs, 0 otherwise.
struct NonFiniteError : std::runtime_error {
  NonFiniteError(const std::string& msg, std::size_t node_index_,
                 std::size_t flat_index_, std::size_t row_)
      : std::runtime_error(msg),
        node_index(node_index_),
        flat_index(flat_index_),
        row(row_) {}
  std::size_t node_index;
  std::size_t flat_index;
  std::size_t row;
};

/// Reverse-mode computation record over dense Tensors.
///
/// Nodes are appended in construction order; parents always precede children,
/// so a single reverse sweep visits every node after all of its consumers.
/// Every primitive validates operand shapes and checks its output for
/// non-finite entries (NaN/Inf is an error, never silent).
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf holding a non-trainable value (states, Brownian increments, ...).
  Val constant(Tensor v);

  /// Leaf bound to the trainable parameter registry. `slot` is the caller's
  /// stable index for this parameter; each slot may be bound at most once
  /// per tape. backward() reports gradients by slot.
  Val param(const Tensor& v, std::size_t slot);

  const Tensor& value(Val v) const { return nodes_[v.id].value; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t num_slots() const { return slot_to_node_.size(); }

  /// Reverse sweep from a scalar loss (shape [] or [1]). Returns
  /// d(loss)/d(param) for every bound slot, indexed by slot; a bound
  /// parameter the loss never touches gets a zero tensor of its shape.
  /// Intermediate gradients are released as the sweep passes them.
  /// May be called more than once on the same tape.
  std::vector<Tensor> backward(Val loss) const;

  // -- primitives ----------------------------------------------------------
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);
  Val div(Val a, Val b);
  Val scale(Val a, double c);
  Val add_scalar(Val a, double c);
  Val matmul(Val a, Val b);
  Val add_rowvec(Val a, Val v);
  Val repeat_rows(Val v, std::size_t rows);
  Val add_col_bcast(Val a, Val col);
  Val mul_col_bcast(Val a, Val col);
  Val diag_embed(Val v);
  Val relu(Val a);
  Val sin(Val a);
  Val cos(Val a);
  Val exp(Val a);
  Val square(Val a);
  Val sum_all(Val a);
  Val row_sum(Val a);
  Val concat_cols(Val a, Val b);
  Val bmatvec(Val a, Val w);

 private:
  struct Node {
    Tensor value;
    Op op = Op::kLeaf;
    std::uint32_t a = 0, b = 0;   // parent ids
    double c = 0.0;               // scalar payload
    std::uint32_t i0 = 0;         // integer payload (split point, n, ...)
    std::int32_t slot = -1;       // parameter registry slot, -1 for constants
  };

  Val push(Node n);
  const Node& node(Val v) const { return nodes_[v.id]; }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> slot_to_node_;  // slot -> node id
};

// Operator sugar so problem coefficients read like the formulas they encode.
Val operator+(Val a, Val b);
Val operator-(Val a, Val b);
Val operator*(Val a, Val b);
Val operator/(Val a, Val b);
Val operator+(Val a, double c);
Val operator+(double c, Val a);
Val operator-(Val a, double c);
Val operator-(double c, Val a);
Val operator*(Val a, double c);
Val operator*(double c, Val a);
Val operator-(Val a);

inline Val relu(Val a) { return a.tape->relu(a); }
inline Val sin(Val a) { return a.tape->sin(a); }
inline Val cos(Val a) { return a.tape->cos(a); }
inline Val exp(Val a) { return a.tape->exp(a); }
inline Val square(Val a) { return a.tape->square(a); }
inline Val sum_all(Val a) { return a.tape->sum_all(a); }
inline Val row_sum(Val a) { return a.tape->row_sum(a); }
inline Val matmul(Val a, Val b) { return a.tape->matmul(a, b); }
inline Val add_rowvec(Val a, Val v) { return a.tape->add_rowvec(a, v); }
inline Val repeat_rows(Val v, std::size_t rows) { return v.tape->repeat_rows(v, rows); }
inline Val add_col_bcast(Val a, Val col) { return a.tape->add_col_bcast(a, col); }
inline Val mul_col_bcast(Val a, Val col) { return a.tape->mul_col_bcast(a, col); }
inline Val diag_embed(Val v) { return v.tape->diag_embed(v); }
inline Val concat_cols(Val a, Val b) { return a.tape->concat_cols(a, b); }
inline Val bmatvec(Val a, Val w) { return a.tape->bmatvec(a, w); }

}  // namespace fbsde
