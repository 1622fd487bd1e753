// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode automatic differentiation over dense float64
// tensors. Backward rules are written in terms of the same differentiable
// primitives, so running backward while the tape is recording produces
// gradients that are themselves tape nodes (double backward).

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtl/error.hpp"

namespace mtl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;
class Tensor;

struct TensorStorage {
  Shape shape;
  std::vector<double> values;
};

enum class Op : std::uint8_t;
struct OpAttrs;
Tensor apply(Op op, std::vector<Tensor> inputs, OpAttrs attrs);

/// Dense row-major float64 tensor. Either a detached constant or a handle to
/// a node on a Tape. Storage is immutable and shared between copies.
class Tensor {
 public:
  Tensor() = default;
  /// Detached tensor. Throws DimensionError if values.size() != product(shape)
  /// and NumericError on non-finite values.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  /// Rank-1 tensor holding `values`.
  static Tensor vector(std::vector<double> values);
  /// Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::span<const double> values() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  /// Value of a single-element tensor.
  double item() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }
  /// Same values, no tape node.
  Tensor detach() const;

 private:
  friend class Tape;
  friend Tensor apply(Op op, std::vector<Tensor> inputs, OpAttrs attrs);
  friend void check_handle(const Tensor& t);

  explicit Tensor(std::shared_ptr<const TensorStorage> storage) : storage_(std::move(storage)) {}

  std::shared_ptr<const TensorStorage> storage_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
  std::uint64_t generation_ = 0;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  Shift,
  MatMul,
  Relu,
  Tanh,
  Exp,
  Log,
  Sum,
  Mean,
  SoftmaxRows,
  GatherRows,
  ScatterAddRows,
  ConcatCols,
  SliceCols,
  PadCols,
  Transpose,
  Reshape,
};

const char* op_name(Op op);

/// Non-tensor arguments of a primitive.
struct OpAttrs {
  double scalar = 0.0;
  std::vector<std::size_t> ids;
  std::size_t begin = 0;
  std::size_t count = 0;
  Shape shape;
};

/// Append-only record of primitive applications. Not safe for concurrent use;
/// distinct tapes are independent. A Tape must outlive every Tensor that
/// references it; clear() invalidates outstanding handles.
class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    std::vector<Tensor> inputs;
    OpAttrs attrs;
    std::shared_ptr<const TensorStorage> value;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf on this tape.
  Tensor variable(const Tensor& value);

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }
  bool recording() const { return recording_; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  /// Handle to an existing node.
  Tensor tensor(std::size_t id) const;

  /// Drops every node and bumps the generation; old handles become invalid.
  void clear();

  /// Re-evaluates every recorded primitive from its inputs, in order, and
  /// reports whether all recomputed values equal the recorded ones bit-for-bit.
  bool replay_matches() const;

  /// While alive, primitives applied to this tape's tensors produce detached
  /// results instead of new nodes.
  class PauseRecording {
   public:
    explicit PauseRecording(Tape& tape) : tape_(tape), previous_(tape.recording_) {
      tape_.recording_ = false;
    }
    ~PauseRecording() { tape_.recording_ = previous_; }
    PauseRecording(const PauseRecording&) = delete;
    PauseRecording& operator=(const PauseRecording&) = delete;

   private:
    Tape& tape_;
    bool previous_;
  };

 private:
  friend Tensor apply(Op op, std::vector<Tensor> inputs, OpAttrs attrs);
  friend void check_handle(const Tensor& t);

  Tensor record(Op op, std::vector<Tensor> inputs, OpAttrs attrs,
                std::shared_ptr<const TensorStorage> value);

  // deque: node references stay valid while backward appends nodes
  std::deque<Node> nodes_;
  std::uint64_t generation_ = 1;
  bool recording_ = true;
};

/// Applies a primitive; the named operations below are thin wrappers.
Tensor apply(Op op, std::vector<Tensor> inputs, OpAttrs attrs);

// Elementwise (identical shapes required).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor shift(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws NumericError for any value <= 0.
Tensor log(const Tensor& a);

// Reductions to shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Rank-2 operations.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& logits);
/// Row i of the result is table[ids[i]]. Throws IndexError for ids >= rows.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
/// Adjoint of gather_rows: result [num_rows x cols], src row i added into row ids[i].
Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> ids, std::size_t num_rows);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Adjoint of slice_cols: zero matrix of `total` columns with `a` placed at `begin`.
Tensor pad_cols(const Tensor& a, std::size_t begin, std::size_t total);
Tensor reshape(const Tensor& a, Shape shape);

/// Gradients keyed by parameter handle.
class GradientMap {
 public:
  void insert(const Tensor& param, Tensor grad);
  bool contains(const Tensor& param) const;
  /// Throws ContractError when absent.
  const Tensor& at(const Tensor& param) const;
  /// Zeros of the parameter's shape when absent.
  Tensor get_or_zeros(const Tensor& param) const;
  std::size_t size() const { return grads_.size(); }

 private:
  using Key = std::pair<const void*, std::size_t>;
  static Key key_of(const Tensor& t);
  std::map<Key, Tensor> grads_;
};

/// Reverse-mode gradients of scalar `output` w.r.t. each tensor in `wrt`.
/// Parameters unreachable from `output` get all-zero gradients. With
/// `higher_order`, the backward pass is recorded so the returned gradients can
/// be differentiated again. Throws ContractError for a non-scalar output.
GradientMap backward(const Tensor& output, std::span<const Tensor> wrt, bool higher_order = false);

/// Concatenates gradients of `order` into one [P] vector; missing entries are zeros.
Tensor flatten_grads(const GradientMap& grads, std::span<const Tensor> order);

/// Scalar function of a parameter list; called with tape variables.
using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Central-difference check of backward() for `f` at `params`. Returns the
/// maximum over all coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Each evaluation runs on a fresh tape, so `f` may itself call backward().
double check_gradient(const ScalarFn& f, std::span<const Tensor> params, double eps);

}  // namespace mtl
