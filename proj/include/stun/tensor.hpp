#ifndef STUN_TENSOR_HPP_
#define STUN_TENSOR_HPP_

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace stun {

// Dense row-major tensor of doubles. Images and feature maps use CxHxW,
// plain vectors use a single dimension.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
    data.assign(numel(shape), fill);
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // CxHxW access
  double& at(std::size_t c, std::size_t h, std::size_t w) {
    return data[(c * shape[1] + h) * shape[2] + w];
  }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return data[(c * shape[1] + h) * shape[2] + w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
};

inline void check_same_dim(const std::vector<double>& a,
                           const std::vector<double>& b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const std::vector<double>& v) {
  return std::sqrt(dot(v, v));
}

// Euclidean distance between two vectors of equal dimension.
inline double euclidean(const std::vector<double>& a,
                        const std::vector<double>& b) {
  check_same_dim(a, b, "euclidean");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double squared_euclidean(const std::vector<double>& a,
                                const std::vector<double>& b) {
  check_same_dim(a, b, "squared_euclidean");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace stun

#endif  // STUN_TENSOR_HPP_
