#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "pathtree/errors.hpp"
#include "pathtree/rng.hpp"

namespace pathtree {

// Dense row-major matrix of 64-bit floats. Vectors are 1xN rows, scalars 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor(rows, cols);
  }
  static Tensor identity(std::size_t n);
  static Tensor scalar(double v);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::initializer_list<double> values);
  static Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);
  static Tensor normal(std::size_t rows, std::size_t cols, Rng& rng);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  void fill(double v);
  bool all_finite() const;
  double scalar_value() const;  // requires 1x1

  Tensor slice_row(std::size_t r) const;  // 1 x cols copy

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Kernels. All deterministic: accumulation runs left-to-right in index order.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Row-wise stable softmax (max subtraction). EmptyInput on zero columns.
Tensor softmax_rows(const Tensor& a);
std::vector<double> softmax(const std::vector<double>& x);

double dot(const Tensor& u, const Tensor& v);      // flat dot, shapes must match
double squared_distance(const Tensor& u, const Tensor& v);
double norm2(const Tensor& u);
double cosine_sim(const Tensor& u, const Tensor& v);  // ZeroVector if a norm is 0

void ensure_finite(const Tensor& t, const char* context);

}  // namespace pathtree
