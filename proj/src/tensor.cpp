#include "pcgn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pcgn {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("tensor: rows() needs a matrix, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("tensor: cols() needs a matrix, got " + shape_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw DomainError("tensor: item() on non-scalar " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace kernels {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
  Tensor out(b.rank() == 2 ? Shape{m, n} : Shape{m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = pa + i * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += row[p] * pb[p];
      po[i] = acc;
    }
    return out;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: needs a matrix, got " + shape_string(a.shape()));
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.size() == 0) throw DomainError("softmax: empty input");
  const double peak = *std::max_element(x.data().begin(), x.data().end());
  Tensor out = x;
  double total = 0.0;
  for (double& v : out.data()) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : out.data()) v /= total;
  return out;
}

Tensor log_softmax(const Tensor& x) {
  if (x.size() == 0) throw DomainError("log_softmax: empty input");
  const double peak = *std::max_element(x.data().begin(), x.data().end());
  double total = 0.0;
  for (double v : x.data()) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);
  Tensor out = x;
  for (double& v : out.data()) v -= log_norm;
  return out;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DomainError("concat: no parts");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 1) throw DimensionError("concat: parts must be vectors, got " + shape_string(p.shape()));
    total += p.size();
  }
  std::vector<double> data;
  data.reserve(total);
  for (const Tensor& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor::vector(std::move(data));
}

Tensor embedding_lookup(const Tensor& table, std::size_t index) {
  if (table.rank() != 2) throw DimensionError("embedding_lookup: table must be a matrix");
  if (index >= table.shape()[0]) {
    throw IndexError("embedding_lookup: index " + std::to_string(index) + " out of range for " +
                     std::to_string(table.shape()[0]) + " rows");
  }
  const std::size_t d = table.shape()[1];
  const auto row = table.data().subspan(index * d, d);
  return Tensor::vector(std::vector<double>(row.begin(), row.end()));
}

}  // namespace kernels

}  // namespace pcgn
