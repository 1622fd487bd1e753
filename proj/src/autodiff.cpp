// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <sstream>

namespace mtl {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

using StoragePtr = std::shared_ptr<const TensorStorage>;

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

void require_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + what);
  }
}

StoragePtr make_storage(Shape shape, std::vector<double> values) {
  auto s = std::make_shared<TensorStorage>();
  s->shape = std::move(shape);
  s->values = std::move(values);
  return s;
}

const TensorStorage& rank2(const TensorStorage& t, const char* op) {
  if (t.shape.size() != 2) {
    throw DimensionError(std::string(op) + " requires a rank-2 tensor, got " + shape_string(t.shape));
  }
  return t;
}

void same_shape(const TensorStorage& a, const TensorStorage& b, const char* op) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape) + " vs " +
                         shape_string(b.shape));
  }
}

template <class F>
StoragePtr unary_map(const TensorStorage& a, F f) {
  std::vector<double> out(a.values.size());
  std::transform(a.values.begin(), a.values.end(), out.begin(), f);
  return make_storage(a.shape, std::move(out));
}

template <class F>
StoragePtr binary_map(const TensorStorage& a, const TensorStorage& b, const char* op, F f) {
  same_shape(a, b, op);
  std::vector<double> out(a.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.values[i], b.values[i]);
  return make_storage(a.shape, std::move(out));
}

// Pure forward evaluation of one primitive.
StoragePtr evaluate(Op op, std::span<const TensorStorage* const> in, const OpAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) throw ContractError(std::string(op_name(op)) + ": wrong number of inputs");
  };
  switch (op) {
    case Op::Leaf:
      throw ContractError("leaf nodes are not evaluated");
    case Op::Add:
      arity(2);
      return binary_map(*in[0], *in[1], "add", [](double x, double y) { return x + y; });
    case Op::Sub:
      arity(2);
      return binary_map(*in[0], *in[1], "sub", [](double x, double y) { return x - y; });
    case Op::Mul:
      arity(2);
      return binary_map(*in[0], *in[1], "mul", [](double x, double y) { return x * y; });
    case Op::Scale: {
      arity(1);
      const double s = attrs.scalar;
      return unary_map(*in[0], [s](double x) { return x * s; });
    }
    case Op::Shift: {
      arity(1);
      const double s = attrs.scalar;
      return unary_map(*in[0], [s](double x) { return x + s; });
    }
    case Op::Relu:
      arity(1);
      return unary_map(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Tanh:
      arity(1);
      return unary_map(*in[0], [](double x) { return std::tanh(x); });
    case Op::Exp:
      arity(1);
      return unary_map(*in[0], [](double x) { return std::exp(x); });
    case Op::Log:
      arity(1);
      for (double x : in[0]->values) {
        if (!(x > 0.0)) throw NumericError("log of non-positive value " + std::to_string(x));
      }
      return unary_map(*in[0], [](double x) { return std::log(x); });
    case Op::Sum:
    case Op::Mean: {
      arity(1);
      double acc = 0.0;
      for (double x : in[0]->values) acc += x;
      if (op == Op::Mean) acc /= static_cast<double>(in[0]->values.size());
      return make_storage({1}, {acc});
    }
    case Op::MatMul: {
      arity(2);
      const auto& a = rank2(*in[0], "matmul");
      const auto& b = rank2(*in[1], "matmul");
      const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
      if (b.shape[0] != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape) + " x " +
                             shape_string(b.shape));
      }
      std::vector<double> out(m * n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a.values[i * k + p];
          if (av == 0.0) continue;
          const double* brow = b.values.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
      }
      return make_storage({m, n}, std::move(out));
    }
    case Op::Transpose: {
      arity(1);
      const auto& a = rank2(*in[0], "transpose");
      const std::size_t m = a.shape[0], n = a.shape[1];
      std::vector<double> out(m * n);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values[i * n + j];
      return make_storage({n, m}, std::move(out));
    }
    case Op::SoftmaxRows: {
      arity(1);
      const auto& a = rank2(*in[0], "softmax_rows");
      const std::size_t m = a.shape[0], n = a.shape[1];
      std::vector<double> out(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.values.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          out[i * n + j] = std::exp(row[j] - mx);
          z += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
      }
      return make_storage({m, n}, std::move(out));
    }
    case Op::GatherRows: {
      arity(1);
      const auto& t = rank2(*in[0], "gather_rows");
      const std::size_t rows = t.shape[0], cols = t.shape[1];
      if (attrs.ids.empty()) throw DimensionError("gather_rows: empty id list");
      std::vector<double> out(attrs.ids.size() * cols);
      for (std::size_t i = 0; i < attrs.ids.size(); ++i) {
        const std::size_t id = attrs.ids[i];
        if (id >= rows) {
          throw IndexError("gather_rows: id " + std::to_string(id) + " out of range [0, " +
                           std::to_string(rows) + ")");
        }
        std::copy_n(t.values.data() + id * cols, cols, out.data() + i * cols);
      }
      return make_storage({attrs.ids.size(), cols}, std::move(out));
    }
    case Op::ScatterAddRows: {
      arity(1);
      const auto& s = rank2(*in[0], "scatter_add_rows");
      const std::size_t cols = s.shape[1];
      if (s.shape[0] != attrs.ids.size()) throw DimensionError("scatter_add_rows: one id per source row required");
      if (attrs.count == 0) throw DimensionError("scatter_add_rows: zero target rows");
      std::vector<double> out(attrs.count * cols, 0.0);
      for (std::size_t i = 0; i < attrs.ids.size(); ++i) {
        const std::size_t id = attrs.ids[i];
        if (id >= attrs.count) throw IndexError("scatter_add_rows: id " + std::to_string(id) + " out of range");
        for (std::size_t j = 0; j < cols; ++j) out[id * cols + j] += s.values[i * cols + j];
      }
      return make_storage({attrs.count, cols}, std::move(out));
    }
    case Op::ConcatCols: {
      if (in.empty()) throw ContractError("concat_cols: no inputs");
      const std::size_t m = rank2(*in[0], "concat_cols").shape[0];
      std::size_t total = 0;
      for (const auto* t : in) {
        if (rank2(*t, "concat_cols").shape[0] != m) throw DimensionError("concat_cols: row counts differ");
        total += t->shape[1];
      }
      std::vector<double> out(m * total);
      std::size_t offset = 0;
      for (const auto* t : in) {
        const std::size_t n = t->shape[1];
        for (std::size_t i = 0; i < m; ++i) std::copy_n(t->values.data() + i * n, n, out.data() + i * total + offset);
        offset += n;
      }
      return make_storage({m, total}, std::move(out));
    }
    case Op::SliceCols: {
      arity(1);
      const auto& a = rank2(*in[0], "slice_cols");
      const std::size_t m = a.shape[0], n = a.shape[1];
      if (attrs.count == 0 || attrs.begin + attrs.count > n) throw DimensionError("slice_cols: range out of bounds");
      std::vector<double> out(m * attrs.count);
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(a.values.data() + i * n + attrs.begin, attrs.count, out.data() + i * attrs.count);
      return make_storage({m, attrs.count}, std::move(out));
    }
    case Op::PadCols: {
      arity(1);
      const auto& a = rank2(*in[0], "pad_cols");
      const std::size_t m = a.shape[0], n = a.shape[1], total = attrs.count;
      if (attrs.begin + n > total) throw DimensionError("pad_cols: range out of bounds");
      std::vector<double> out(m * total, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(a.values.data() + i * n, n, out.data() + i * total + attrs.begin);
      return make_storage({m, total}, std::move(out));
    }
    case Op::Reshape: {
      arity(1);
      validate_shape(attrs.shape);
      if (shape_size(attrs.shape) != in[0]->values.size()) {
        throw DimensionError("reshape: " + shape_string(in[0]->shape) + " to " + shape_string(attrs.shape));
      }
      return make_storage(attrs.shape, in[0]->values);
    }
  }
  throw ContractError("unknown primitive");
}

Tensor expand_scalar(const Tensor& g, const Shape& shape) {
  const std::size_t n = shape_size(shape);
  Tensor ones = Tensor::filled({n, 1}, 1.0);
  return reshape(matmul(ones, reshape(g, {1, 1})), shape);
}

// Input adjoints of one node given the output adjoint `g`. Built from the
// public primitives, so they are recorded when the tape is recording.
std::vector<Tensor> vjp(const Tape::Node& node, const Tensor& out, const Tensor& g,
                        const std::vector<bool>& want) {
  const auto& in = node.inputs;
  std::vector<Tensor> grads(in.size());
  auto need = [&](std::size_t i) { return want[i]; };
  switch (node.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      if (need(0)) grads[0] = g;
      if (need(1)) grads[1] = g;
      break;
    case Op::Sub:
      if (need(0)) grads[0] = g;
      if (need(1)) grads[1] = scale(g, -1.0);
      break;
    case Op::Mul:
      if (need(0)) grads[0] = mul(g, in[1]);
      if (need(1)) grads[1] = mul(g, in[0]);
      break;
    case Op::Scale:
      grads[0] = scale(g, node.attrs.scalar);
      break;
    case Op::Shift:
      grads[0] = g;
      break;
    case Op::MatMul:
      if (need(0)) grads[0] = matmul(g, transpose(in[1]));
      if (need(1)) grads[1] = matmul(transpose(in[0]), g);
      break;
    case Op::Relu: {
      // Derivative mask is piecewise constant, so it enters as a constant.
      std::vector<double> mask(in[0].size());
      const auto x = in[0].values();
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
      grads[0] = mul(g, Tensor(in[0].shape(), std::move(mask)));
      break;
    }
    case Op::Tanh:
      grads[0] = mul(g, shift(scale(mul(out, out), -1.0), 1.0));
      break;
    case Op::Exp:
      grads[0] = mul(g, out);
      break;
    case Op::Log:
      // 1/x = exp(-log x)
      grads[0] = mul(g, exp(scale(out, -1.0)));
      break;
    case Op::Sum:
      grads[0] = expand_scalar(g, in[0].shape());
      break;
    case Op::Mean:
      grads[0] = scale(expand_scalar(g, in[0].shape()), 1.0 / static_cast<double>(in[0].size()));
      break;
    case Op::SoftmaxRows: {
      const std::size_t n = out.cols();
      Tensor gy = mul(g, out);
      Tensor row_dot = matmul(gy, Tensor::filled({n, 1}, 1.0));
      Tensor spread = matmul(row_dot, Tensor::filled({1, n}, 1.0));
      grads[0] = sub(gy, mul(out, spread));
      break;
    }
    case Op::GatherRows:
      grads[0] = scatter_add_rows(g, node.attrs.ids, in[0].rows());
      break;
    case Op::ScatterAddRows:
      grads[0] = gather_rows(g, node.attrs.ids);
      break;
    case Op::ConcatCols: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t n = in[i].cols();
        if (need(i)) grads[i] = slice_cols(g, offset, n);
        offset += n;
      }
      break;
    }
    case Op::SliceCols:
      grads[0] = pad_cols(g, node.attrs.begin, in[0].cols());
      break;
    case Op::PadCols:
      grads[0] = slice_cols(g, node.attrs.begin, in[0].cols());
      break;
    case Op::Transpose:
      grads[0] = transpose(g);
      break;
    case Op::Reshape:
      grads[0] = reshape(g, in[0].shape());
      break;
  }
  return grads;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::MatMul: return "matmul";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::GatherRows: return "gather_rows";
    case Op::ScatterAddRows: return "scatter_add_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::PadCols: return "pad_cols";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> values) {
  validate_shape(shape);
  if (values.size() != shape_size(shape)) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " + std::to_string(values.size()));
  }
  require_finite(values, "tensor construction");
  storage_ = make_storage(std::move(shape), std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw DimensionError("matrix: no rows");
  const std::size_t n = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw DimensionError("matrix: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), n}, std::move(values));
}

const Shape& Tensor::shape() const {
  if (!storage_) throw ContractError("use of an undefined tensor");
  return storage_->shape;
}

std::size_t Tensor::size() const { return storage_ ? storage_->values.size() : 0; }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.back();
}

std::span<const double> Tensor::values() const {
  if (!storage_) throw ContractError("use of an undefined tensor");
  return storage_->values;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on a tensor of shape " + shape_string(shape()));
  return storage_->values[0];
}

Tensor Tensor::detach() const { return Tensor(storage_); }

void check_handle(const Tensor& t) {
  if (t.tape_ == nullptr) return;
  if (t.generation_ != t.tape_->generation_ || t.node_ >= t.tape_->nodes_.size()) {
    throw ContractError("stale tensor handle: its tape was cleared");
  }
}

// ---------------------------------------------------------------- Tape

Tensor Tape::variable(const Tensor& value) {
  if (!value.defined()) throw ContractError("variable() of an undefined tensor");
  check_handle(value);
  return record(Op::Leaf, {}, {}, value.storage_);
}

Tensor Tape::record(Op op, std::vector<Tensor> inputs, OpAttrs attrs, StoragePtr value) {
  Tensor t(value);
  t.tape_ = this;
  t.node_ = nodes_.size();
  t.generation_ = generation_;
  nodes_.push_back(Node{op, std::move(inputs), std::move(attrs), std::move(value)});
  return t;
}

Tensor Tape::tensor(std::size_t id) const {
  Tensor t(nodes_.at(id).value);
  t.tape_ = const_cast<Tape*>(this);
  t.node_ = id;
  t.generation_ = generation_;
  return t;
}

void Tape::clear() {
  nodes_.clear();
  ++generation_;
}

bool Tape::replay_matches() const {
  std::vector<StoragePtr> replayed(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::Leaf) {
      replayed[i] = n.value;
      continue;
    }
    std::vector<const TensorStorage*> in;
    for (const Tensor& t : n.inputs) {
      in.push_back(t.tape_ == this ? replayed[t.node_].get() : t.storage_.get());
    }
    replayed[i] = evaluate(n.op, in, n.attrs);
    if (replayed[i]->shape != n.value->shape ||
        std::memcmp(replayed[i]->values.data(), n.value->values.data(), n.value->values.size() * sizeof(double)) !=
            0) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------- primitives

Tensor apply(Op op, std::vector<Tensor> inputs, OpAttrs attrs) {
  Tape* tape = nullptr;
  std::vector<const TensorStorage*> in;
  in.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw ContractError(std::string(op_name(op)) + ": undefined input tensor");
    check_handle(t);
    if (t.tape_ != nullptr) {
      if (tape != nullptr && tape != t.tape_) throw ContractError("tensors from different tapes combined");
      tape = t.tape_;
    }
    in.push_back(t.storage_.get());
  }
  StoragePtr value = evaluate(op, in, attrs);
  require_finite(value->values, op_name(op));
  if (tape != nullptr && tape->recording_) return tape->record(op, std::move(inputs), std::move(attrs), std::move(value));
  return Tensor(std::move(value));
}

Tensor add(const Tensor& a, const Tensor& b) { return apply(Op::Add, {a, b}, {}); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply(Op::Sub, {a, b}, {}); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply(Op::Mul, {a, b}, {}); }

Tensor scale(const Tensor& a, double s) {
  OpAttrs attrs;
  attrs.scalar = s;
  return apply(Op::Scale, {a}, std::move(attrs));
}

Tensor shift(const Tensor& a, double s) {
  OpAttrs attrs;
  attrs.scalar = s;
  return apply(Op::Shift, {a}, std::move(attrs));
}

Tensor relu(const Tensor& a) { return apply(Op::Relu, {a}, {}); }
Tensor tanh(const Tensor& a) { return apply(Op::Tanh, {a}, {}); }
Tensor exp(const Tensor& a) { return apply(Op::Exp, {a}, {}); }
Tensor log(const Tensor& a) { return apply(Op::Log, {a}, {}); }
Tensor sum(const Tensor& a) { return apply(Op::Sum, {a}, {}); }
Tensor mean(const Tensor& a) { return apply(Op::Mean, {a}, {}); }
Tensor matmul(const Tensor& a, const Tensor& b) { return apply(Op::MatMul, {a, b}, {}); }
Tensor transpose(const Tensor& a) { return apply(Op::Transpose, {a}, {}); }
Tensor softmax_rows(const Tensor& logits) { return apply(Op::SoftmaxRows, {logits}, {}); }

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  OpAttrs attrs;
  attrs.ids.assign(ids.begin(), ids.end());
  return apply(Op::GatherRows, {table}, std::move(attrs));
}

Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> ids, std::size_t num_rows) {
  OpAttrs attrs;
  attrs.ids.assign(ids.begin(), ids.end());
  attrs.count = num_rows;
  return apply(Op::ScatterAddRows, {src}, std::move(attrs));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  return apply(Op::ConcatCols, std::vector<Tensor>(parts.begin(), parts.end()), {});
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  OpAttrs attrs;
  attrs.begin = begin;
  attrs.count = count;
  return apply(Op::SliceCols, {a}, std::move(attrs));
}

Tensor pad_cols(const Tensor& a, std::size_t begin, std::size_t total) {
  OpAttrs attrs;
  attrs.begin = begin;
  attrs.count = total;
  return apply(Op::PadCols, {a}, std::move(attrs));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (a.defined() && a.shape() == shape) return a;
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return apply(Op::Reshape, {a}, std::move(attrs));
}

// ---------------------------------------------------------------- gradients

GradientMap::Key GradientMap::key_of(const Tensor& t) {
  if (t.on_tape()) return {t.tape(), t.node()};
  return {t.values().data(), std::numeric_limits<std::size_t>::max()};
}

void GradientMap::insert(const Tensor& param, Tensor grad) {
  if (grad.shape() != param.shape()) {
    throw DimensionError("gradient shape " + shape_string(grad.shape()) + " differs from parameter shape " +
                         shape_string(param.shape()));
  }
  grads_[key_of(param)] = std::move(grad);
}

bool GradientMap::contains(const Tensor& param) const { return grads_.count(key_of(param)) != 0; }

const Tensor& GradientMap::at(const Tensor& param) const {
  auto it = grads_.find(key_of(param));
  if (it == grads_.end()) throw ContractError("no gradient recorded for parameter");
  return it->second;
}

Tensor GradientMap::get_or_zeros(const Tensor& param) const {
  auto it = grads_.find(key_of(param));
  return it == grads_.end() ? Tensor::zeros(param.shape()) : it->second;
}

GradientMap backward(const Tensor& output, std::span<const Tensor> wrt, bool higher_order) {
  if (!output.defined() || output.size() != 1) {
    throw ContractError("backward() requires a scalar output, got shape " +
                        (output.defined() ? shape_string(output.shape()) : std::string("<undefined>")));
  }
  check_handle(output);
  GradientMap result;
  Tape* tape = output.tape();
  if (tape == nullptr) {
    for (const Tensor& p : wrt) result.insert(p, Tensor::zeros(p.shape()));
    return result;
  }

  // needs[i]: node i depends on at least one requested tensor
  const std::size_t out_id = output.node();
  std::vector<char> needs(out_id + 1, 0);
  std::size_t lo = out_id + 1;
  for (const Tensor& p : wrt) {
    check_handle(p);
    if (p.tape() == tape && p.node() <= out_id) {
      needs[p.node()] = 1;
      lo = std::min(lo, p.node());
    }
  }
  for (std::size_t i = lo; i <= out_id && lo <= out_id; ++i) {
    if (needs[i]) continue;
    for (const Tensor& in : tape->node(i).inputs) {
      if (in.tape() == tape && needs[in.node()]) {
        needs[i] = 1;
        break;
      }
    }
  }

  std::vector<Tensor> adjoint(out_id + 1);
  std::optional<Tape::PauseRecording> pause;
  if (!higher_order) pause.emplace(*tape);

  if (lo <= out_id) {
    adjoint[out_id] = Tensor::filled(output.shape(), 1.0);
    for (std::size_t i = out_id + 1; i-- > lo;) {
      if (!needs[i] || !adjoint[i].defined()) continue;
      const Tape::Node& node = tape->node(i);
      if (node.op == Op::Leaf) continue;
      std::vector<bool> want(node.inputs.size());
      bool any = false;
      for (std::size_t j = 0; j < node.inputs.size(); ++j) {
        const Tensor& in = node.inputs[j];
        want[j] = in.tape() == tape && needs[in.node()];
        any = any || want[j];
      }
      if (!any) continue;
      std::vector<Tensor> grads = vjp(node, tape->tensor(i), adjoint[i], want);
      for (std::size_t j = 0; j < node.inputs.size(); ++j) {
        if (!want[j] || !grads[j].defined()) continue;
        Tensor& slot = adjoint[node.inputs[j].node()];
        slot = slot.defined() ? add(slot, grads[j]) : grads[j];
      }
    }
  }

  for (const Tensor& p : wrt) {
    const bool reached = p.tape() == tape && p.node() <= out_id && adjoint[p.node()].defined();
    result.insert(p, reached ? adjoint[p.node()] : Tensor::zeros(p.shape()));
  }
  return result;
}

Tensor flatten_grads(const GradientMap& grads, std::span<const Tensor> order) {
  if (order.empty()) throw ContractError("flatten_grads: empty parameter order");
  std::vector<Tensor> rows;
  rows.reserve(order.size());
  std::size_t total = 0;
  for (const Tensor& p : order) {
    Tensor g = grads.get_or_zeros(p);
    total += g.size();
    rows.push_back(reshape(g, {1, g.size()}));
  }
  return reshape(concat_cols(rows), {total});
}

double check_gradient(const ScalarFn& f, std::span<const Tensor> params, double eps) {
  if (!(eps > 0.0)) throw ContractError("check_gradient: eps must be positive");

  auto evaluate_at = [&](std::span<const Tensor> point) {
    Tape tape;
    std::vector<Tensor> vars;
    vars.reserve(point.size());
    for (const Tensor& p : point) vars.push_back(tape.variable(p));
    const double v = f(vars).item();
    if (!std::isfinite(v)) throw NumericError("check_gradient: non-finite function value");
    return v;
  };

  Tape tape;
  std::vector<Tensor> vars;
  for (const Tensor& p : params) vars.push_back(tape.variable(p));
  const GradientMap grads = backward(f(vars), vars);

  std::vector<Tensor> point(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < point.size(); ++k) {
    const Tensor original = params[k].detach();
    const auto analytic = grads.at(vars[k]).values();
    std::vector<double> vals(original.values().begin(), original.values().end());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double x = vals[i];
      vals[i] = x + eps;
      point[k] = Tensor(original.shape(), vals);
      const double fp = evaluate_at(point);
      vals[i] = x - eps;
      point[k] = Tensor(original.shape(), vals);
      const double fm = evaluate_at(point);
      vals[i] = x;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    point[k] = original;
  }
  return worst;
}

}  // namespace mtl
