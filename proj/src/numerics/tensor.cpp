#include "bleg/numerics/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "bleg/error.hpp"

namespace bleg::numerics {

namespace {

std::size_t element_count(const Tensor::Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t trailing_cols(const Tensor::Shape& shape) {
  if (shape.empty()) return 0;
  return shape.size() == 1 ? shape[0] : shape.back();
}

}  // namespace

std::string shape_string(const Tensor::Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill), cols_(trailing_cols(shape_)) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()), cols_(trailing_cols(shape_)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor of shape " + numerics::shape_string(shape_) + " cannot hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, std::vector<double>{value}); }

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) throw DimensionError("expected a rank-2 tensor, got " + numerics::shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() > 2) throw DimensionError("expected a rank-2 tensor, got " + numerics::shape_string(shape_));
  return cols_;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() requires a single-element tensor, got " + numerics::shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return Eigen::Map<const Eigen::ArrayXd>(data_.data(), static_cast<Eigen::Index>(data_.size())).allFinite();
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (data_.size() != other.data_.size()) {
    throw DimensionError("cannot accumulate " + other.shape_string() + " into " + shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_string() const { return numerics::shape_string(shape_); }

}  // namespace bleg::numerics
