#include "rode/tensor.hpp"

#include <Eigen/Core>
#include <cmath>

#include "rode/errors.hpp"

namespace rode {

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  RODE_REQUIRE(data_.size() == rows * cols, "tensor data length does not match shape");
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::row_copy(std::size_t r) const {
  RODE_REQUIRE(r < rows_, "row index out of range");
  return Tensor::row(row_span(r));
}

double Tensor::item() const {
  RODE_REQUIRE(data_.size() == 1, "item() requires a 1x1 tensor");
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::squared_norm() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

Tensor& Tensor::operator+=(const Tensor& o) {
  RODE_REQUIRE(same_shape(o), "shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  RODE_REQUIRE(a.same_shape(b), "shape mismatch in -");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, Tensor a) {
  a *= s;
  return a;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  RODE_REQUIRE(a.cols() == b.rows(), "matmul inner dimensions differ");
  Tensor out(a.rows(), b.cols());
  if (out.size() == 0 || a.cols() == 0) return out;
  Eigen::Map<const RowMajor> ma(a.data().data(), a.rows(), a.cols());
  Eigen::Map<const RowMajor> mb(b.data().data(), b.rows(), b.cols());
  Eigen::Map<RowMajor> mo(out.data().data(), out.rows(), out.cols());
  mo.noalias() = ma * mb;
  return out;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  RODE_REQUIRE(a.size() == b.size(), "distance between vectors of different length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace rode
