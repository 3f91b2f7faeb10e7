#include "rode/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "rode/errors.hpp"

namespace rode::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

MutMap view(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

Tensor& grad_buffer(Node& n) {
  if (!n.grad.same_shape(n.value) || n.grad.size() != n.value.size())
    n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backprop = std::move(backprop);
  }
  return Var(std::move(node));
}

// Elementwise op with a derivative expressed through input and output values.
template <class F, class D>
Var unary(const Var& a, F f, D df) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make(std::move(y), {a}, [df](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * df(in.value[i], self.value[i]);
  });
}

std::size_t broadcast_dim(std::size_t a, std::size_t b, const char* what) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ContractViolation(std::string("incompatible shapes in ") + what);
}

enum class Bin { add, sub, mul, div };

Var binary(const Var& a, const Var& b, Bin op) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t rows = broadcast_dim(x.rows(), y.rows(), "elementwise op");
  const std::size_t cols = broadcast_dim(x.cols(), y.cols(), "elementwise op");
  Tensor out(rows, cols);
  const bool xr = x.rows() == 1, xc = x.cols() == 1, yr = y.rows() == 1, yc = y.cols() == 1;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double u = x(xr ? 0 : r, xc ? 0 : c);
      const double v = y(yr ? 0 : r, yc ? 0 : c);
      double o = 0.0;
      switch (op) {
        case Bin::add: o = u + v; break;
        case Bin::sub: o = u - v; break;
        case Bin::mul: o = u * v; break;
        case Bin::div: o = u / v; break;
      }
      out(r, c) = o;
    }
  }
  return make(std::move(out), {a, b}, [op, xr, xc, yr, yc](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const bool ga_on = na.requires_grad, gb_on = nb.requires_grad;
    Tensor* ga = ga_on ? &grad_buffer(na) : nullptr;
    Tensor* gb = gb_on ? &grad_buffer(nb) : nullptr;
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      for (std::size_t c = 0; c < self.value.cols(); ++c) {
        const double g = self.grad(r, c);
        const std::size_t ar = xr ? 0 : r, ac = xc ? 0 : c, br = yr ? 0 : r, bc = yc ? 0 : c;
        const double u = na.value(ar, ac);
        const double v = nb.value(br, bc);
        double du = 0.0, dv = 0.0;
        switch (op) {
          case Bin::add: du = 1.0; dv = 1.0; break;
          case Bin::sub: du = 1.0; dv = -1.0; break;
          case Bin::mul: du = v; dv = u; break;
          case Bin::div: du = 1.0 / v; dv = -u / (v * v); break;
        }
        if (ga) (*ga)(ar, ac) += g * du;
        if (gb) (*gb)(br, bc) += g * dv;
      }
    }
  });
}

}  // namespace

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var constant(double value) { return constant(Tensor::scalar(value)); }

Var parameter(std::string name, Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->name = std::move(name);
  node->requires_grad = true;
  return Var(std::move(node));
}

GradientMap backward(const Var& loss) {
  RODE_REQUIRE(loss.defined(), "backward on an undefined value");
  RODE_REQUIRE(loss.value().size() == 1, "backward requires a scalar loss");
  GradientMap grads;
  if (!loss.requires_grad()) return grads;

  // Iterative post-order DFS gives a topological order with inputs first.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad = Tensor();
  grad_buffer(*loss.node())[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
  }

  for (Node* n : order) {
    if (n->name.empty() || n->inputs.size() != 0) continue;
    Tensor g = n->grad.size() == n->value.size() ? n->grad : Tensor(n->value.rows(), n->value.cols());
    auto [pos, inserted] = grads.emplace(n->name, g);
    if (!inserted) pos->second += g;
  }
  return grads;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries)
    : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.row < b.row; });
  columns_.reserve(entries.size());
  values_.reserve(entries.size());
  for (const auto& e : entries) {
    RODE_REQUIRE(e.row < rows && e.col < cols, "sparse entry out of range");
    ++offsets_[e.row + 1];
    columns_.push_back(e.col);
    values_.push_back(e.value);
  }
  for (std::size_t r = 0; r < rows; ++r) offsets_[r + 1] += offsets_[r];
}

Tensor SparseMatrix::multiply(const Tensor& x) const {
  RODE_REQUIRE(x.rows() == cols_, "sparse multiply shape mismatch");
  Tensor out(rows_, x.cols());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k)
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) += values_[k] * x(columns_[k], c);
  return out;
}

Tensor SparseMatrix::multiply_transposed(const Tensor& x) const {
  RODE_REQUIRE(x.rows() == rows_, "sparse multiply shape mismatch");
  Tensor out(cols_, x.cols());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k)
      for (std::size_t c = 0; c < x.cols(); ++c) out(columns_[k], c) += values_[k] * x(r, c);
  return out;
}

Tensor SparseMatrix::to_dense() const {
  Tensor out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) out(r, columns_[k]) += values_[k];
  return out;
}

Var add(const Var& a, const Var& b) { return binary(a, b, Bin::add); }
Var sub(const Var& a, const Var& b) { return binary(a, b, Bin::sub); }
Var mul(const Var& a, const Var& b) { return binary(a, b, Bin::mul); }
Var div(const Var& a, const Var& b) { return binary(a, b, Bin::div); }

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var cos(const Var& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp_min(const Var& a, double lo) {
  return unary(a, [lo](double x) { return x > lo ? x : lo; },
               [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = rode::matmul(a.value(), b.value());
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad && na.value.size() > 0)
      view(grad_buffer(na)).noalias() += view(self.grad) * view(nb.value).transpose();
    if (nb.requires_grad && nb.value.size() > 0)
      view(grad_buffer(nb)).noalias() += view(na.value).transpose() * view(self.grad);
  });
}

Var sparse_matmul(const SparseMatrix& s, const Var& x) {
  Tensor out = s.multiply(x.value());
  return make(std::move(out), {x}, [s](Node& self) {
    grad_buffer(*self.inputs[0]) += s.multiply_transposed(self.grad);
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return make(Tensor::scalar(total), {a}, [](Node& self) {
    Tensor& g = grad_buffer(*self.inputs[0]);
    const double up = self.grad[0];
    for (double& v : g.data()) v += up;
  });
}

Var mean(const Var& a) {
  RODE_REQUIRE(a.value().size() > 0, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_sum(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, 0) += x(r, c);
  return make(std::move(out), {a}, [](Node& self) {
    Tensor& g = grad_buffer(*self.inputs[0]);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(r, 0);
  });
}

Var squared_norm(const Var& a) { return sum(square(a)); }

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  RODE_REQUIRE(x.rows() == y.rows(), "concat_cols requires equal row counts");
  Tensor out(x.rows(), x.cols() + y.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) out(r, x.cols() + c) = y(r, c);
  }
  const std::size_t split = x.cols();
  return make(std::move(out), {a, b}, [split](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      if (na.requires_grad) {
        Tensor& g = grad_buffer(na);
        for (std::size_t c = 0; c < split; ++c) g(r, c) += self.grad(r, c);
      }
      if (nb.requires_grad) {
        Tensor& g = grad_buffer(nb);
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(r, split + c);
      }
    }
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  RODE_REQUIRE(!rows.empty(), "stack_rows of an empty list");
  const std::size_t cols = rows.front().cols();
  std::size_t total = 0;
  for (const auto& r : rows) {
    RODE_REQUIRE(r.cols() == cols, "stack_rows requires equal column counts");
    total += r.rows();
  }
  Tensor out(total, cols);
  std::size_t at = 0;
  for (const auto& r : rows) {
    const auto src = r.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(at * cols));
    at += r.rows();
  }
  return make(std::move(out), rows, [cols](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->value.size();
      if (in->requires_grad) {
        Tensor& g = grad_buffer(*in);
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
    (void)cols;
  });
}

Var slice(const Var& a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) {
  const Tensor& x = a.value();
  RODE_REQUIRE(row0 + nrows <= x.rows() && col0 + ncols <= x.cols(), "slice out of range");
  Tensor out(nrows, ncols);
  for (std::size_t r = 0; r < nrows; ++r)
    for (std::size_t c = 0; c < ncols; ++c) out(r, c) = x(row0 + r, col0 + c);
  return make(std::move(out), {a}, [row0, col0](Node& self) {
    Tensor& g = grad_buffer(*self.inputs[0]);
    for (std::size_t r = 0; r < self.value.rows(); ++r)
      for (std::size_t c = 0; c < self.value.cols(); ++c) g(row0 + r, col0 + c) += self.grad(r, c);
  });
}

Var slice_rows(const Var& a, std::size_t row0, std::size_t nrows) {
  return slice(a, row0, nrows, 0, a.cols());
}

Var element(const Var& a, std::size_t r, std::size_t c) { return slice(a, r, 1, c, 1); }

Var gather_rows(const Var& a, const std::vector<std::size_t>& indices) {
  const Tensor& x = a.value();
  Tensor out(indices.size(), x.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    RODE_REQUIRE(indices[i] < x.rows(), "gather_rows index out of range");
    for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) = x(indices[i], c);
  }
  return make(std::move(out), {a}, [indices](Node& self) {
    Tensor& g = grad_buffer(*self.inputs[0]);
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) g(indices[i], c) += self.grad(i, c);
  });
}

Var scatter_rows(const Var& base, const std::vector<std::size_t>& indices, const Var& rows) {
  const Tensor& b = base.value();
  const Tensor& src = rows.value();
  RODE_REQUIRE(src.rows() == indices.size() && src.cols() == b.cols(), "scatter_rows shape mismatch");
  Tensor out = b;
  std::vector<char> replaced(b.rows(), 0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    RODE_REQUIRE(indices[i] < b.rows(), "scatter_rows index out of range");
    RODE_REQUIRE(!replaced[indices[i]], "scatter_rows indices must be distinct");
    replaced[indices[i]] = 1;
    for (std::size_t c = 0; c < b.cols(); ++c) out(indices[i], c) = src(i, c);
  }
  return make(std::move(out), {base, rows}, [indices, replaced](Node& self) {
    Node& nb = *self.inputs[0];
    Node& ns = *self.inputs[1];
    if (nb.requires_grad) {
      Tensor& g = grad_buffer(nb);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        if (replaced[r]) continue;
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(r, c);
      }
    }
    if (ns.requires_grad) {
      Tensor& g = grad_buffer(ns);
      for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t c = 0; c < g.cols(); ++c) g(i, c) += self.grad(indices[i], c);
    }
  });
}

Var index_map(const Var& src, std::size_t out_rows, std::size_t out_cols,
              const std::vector<std::pair<std::size_t, std::size_t>>& mapping) {
  const Tensor& x = src.value();
  Tensor out(out_rows, out_cols);
  for (const auto& [from, to] : mapping) {
    RODE_REQUIRE(from < x.size() && to < out.size(), "index_map index out of range");
    out[to] += x[from];
  }
  return make(std::move(out), {src}, [mapping](Node& self) {
    Tensor& g = grad_buffer(*self.inputs[0]);
    for (const auto& [from, to] : mapping) g[from] += self.grad[to];
  });
}

namespace {

// Shifted exponentials over unmasked entries; returns (max, log-sum-exp).
std::pair<double, double> masked_logsumexp(const Tensor& x, const std::vector<bool>& mask) {
  RODE_REQUIRE(mask.size() == x.size(), "mask length does not match tensor size");
  double hi = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i]) continue;
    any = true;
    hi = std::max(hi, x[i]);
  }
  RODE_REQUIRE(any, "softmax with every entry masked");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!mask[i]) total += std::exp(x[i] - hi);
  return {hi, std::log(total)};
}

}  // namespace

Var masked_softmax(const Var& a, const std::vector<bool>& mask) {
  const Tensor& x = a.value();
  const auto [hi, lse] = masked_logsumexp(x, mask);
  Tensor p(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = mask[i] ? 0.0 : std::exp(x[i] - hi - lse);
  return make(std::move(p), {a}, [](Node& self) {
    const Tensor& prob = self.value;
    double dot = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) dot += self.grad[i] * prob[i];
    Tensor& g = grad_buffer(*self.inputs[0]);
    for (std::size_t i = 0; i < prob.size(); ++i) g[i] += prob[i] * (self.grad[i] - dot);
  });
}

Var masked_log_softmax(const Var& a, const std::vector<bool>& mask) {
  const Tensor& x = a.value();
  const auto [hi, lse] = masked_logsumexp(x, mask);
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = mask[i] ? -std::numeric_limits<double>::infinity() : x[i] - hi - lse;
  return make(std::move(out), {a}, [mask](Node& self) {
    double total = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) total += self.grad[i];
    Tensor& g = grad_buffer(*self.inputs[0]);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) g[i] += self.grad[i] - std::exp(self.value[i]) * total;
  });
}

Var dropout(const Var& a, double rate, std::mt19937_64& rng) {
  RODE_REQUIRE(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(a.rows(), a.cols());
  const double kept = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = keep(rng) ? kept : 0.0;
  return mul(a, constant(std::move(mask)));
}

}  // namespace rode::ad
