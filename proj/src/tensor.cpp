#include "pathtree/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pathtree {

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t[0] = v;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) fail(ErrorCode::ShapeMismatch, "ragged initializer");
    std::size_t j = 0;
    for (double v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  Tensor t(1, values.size());
  std::size_t j = 0;
  for (double v : values) t[j++] = v;
  return t;
}

Tensor Tensor::uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_normal();
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::scalar_value() const {
  if (rows_ != 1 || cols_ != 1) fail(ErrorCode::ShapeMismatch, "tensor is not a scalar");
  return data_[0];
}

Tensor Tensor::slice_row(std::size_t r) const {
  Tensor out(1, cols_);
  for (std::size_t j = 0; j < cols_; ++j) out[j] = at(r, j);
  return out;
}

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::ShapeMismatch, "matmul " + shape_str(a) + " * " + shape_str(b));
  }
  Tensor out(a.rows(), b.cols());
  // i-k-j order: each out(i,j) accumulates over k in ascending order.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail(ErrorCode::ShapeMismatch, "add " + shape_str(a) + " vs " + shape_str(b));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail(ErrorCode::ShapeMismatch, "sub " + shape_str(a) + " vs " + shape_str(b));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail(ErrorCode::ShapeMismatch, "hadamard " + shape_str(a) + " vs " + shape_str(b));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  if (a.cols() == 0) fail(ErrorCode::EmptyInput, "softmax over empty row");
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, a.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double e = std::exp(a.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) /= sum;
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& x) {
  if (x.empty()) fail(ErrorCode::EmptyInput, "softmax over empty row");
  Tensor t(1, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) t[i] = x[i];
  const Tensor s = softmax_rows(t);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s[i];
  return out;
}

double dot(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size()) fail(ErrorCode::ShapeMismatch, "dot size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double squared_distance(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size()) fail(ErrorCode::ShapeMismatch, "distance size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return s;
}

double norm2(const Tensor& u) { return std::sqrt(dot(u, u)); }

double cosine_sim(const Tensor& u, const Tensor& v) {
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) fail(ErrorCode::ZeroVector, "cosine of zero vector");
  return dot(u, v) / (nu * nv);
}

void ensure_finite(const Tensor& t, const char* context) {
  if (!t.all_finite()) {
    fail(ErrorCode::NonFinitePayload, std::string("non-finite values in ") + context);
  }
}

}  // namespace pathtree
