#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Var is a handle to a node in a dynamically built expression graph. Every
// op computes its value eagerly and, when any input requires a gradient,
// records a closure that pushes the node's gradient into its inputs.
// backward() walks the graph once in reverse topological order. Graphs are
// owned by the Vars that reference them and are never shared across threads.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rode/tensor.hpp"

namespace rode::ad {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;
  std::string name;
  bool requires_grad = false;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using GradientMap = std::map<std::string, Tensor>;

Var constant(Tensor value);
Var constant(double value);
// Named leaf; its gradient is reported under `name` by backward().
Var parameter(std::string name, Tensor value);

// Gradients of a 1x1 loss with respect to every named leaf reachable from it.
GradientMap backward(const Var& loss);

// Constant matrix in compressed-row form.
class SparseMatrix {
 public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Tensor multiply(const Tensor& x) const;
  Tensor multiply_transposed(const Tensor& x) const;
  Tensor to_dense() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> columns_;
  std::vector<double> values_;
};

// Elementwise binary ops broadcast along any dimension of size 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var clamp_min(const Var& a, double lo);

Var matmul(const Var& a, const Var& b);
Var sparse_matmul(const SparseMatrix& s, const Var& x);

Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);  // r x c -> r x 1
Var squared_norm(const Var& a);

Var concat_cols(const Var& a, const Var& b);
Var stack_rows(const std::vector<Var>& rows);
Var slice(const Var& a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols);
Var slice_rows(const Var& a, std::size_t row0, std::size_t nrows);
Var element(const Var& a, std::size_t r, std::size_t c = 0);
Var gather_rows(const Var& a, const std::vector<std::size_t>& indices);
// Copy of `base` with row indices[i] replaced by row i of `rows`. Indices must be distinct.
Var scatter_rows(const Var& base, const std::vector<std::size_t>& indices, const Var& rows);
// out[dst] += src[src_index] for every (src_index, dst) pair, flat row-major indices.
Var index_map(const Var& src, std::size_t out_rows, std::size_t out_cols,
              const std::vector<std::pair<std::size_t, std::size_t>>& mapping);

// Softmax over all entries; masked entries (mask[i] == true) get probability exactly 0.
Var masked_softmax(const Var& a, const std::vector<bool>& mask);
// Log-probabilities of masked_softmax; masked entries are -inf and receive no gradient.
Var masked_log_softmax(const Var& a, const std::vector<bool>& mask);

// Inverted dropout: keeps each entry with probability 1 - rate and rescales by 1/(1 - rate).
Var dropout(const Var& a, double rate, std::mt19937_64& rng);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator/(const Var& a, double s) { return scale(a, 1.0 / s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(double s, const Var& a) { return add_scalar(neg(a), s); }

inline bool is_finite(const Var& v) { return v.value().all_finite(); }

}  // namespace rode::ad
