#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wxc {

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error("wxc: " + msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

/// Dense row-major n-d array of doubles. All model math runs in 64-bit;
/// 32-bit only appears at the container boundary.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0);
  }
  Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(numel_of(shape_)), fill);
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(static_cast<int64_t>(data_.size()) == numel_of(shape_),
            "tensor data size does not match shape " + shape_str(shape_));
  }

  static int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      require(d >= 0, "negative dimension in shape");
      n *= d;
    }
    return n;
  }

  const Shape& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const {
    if (i < 0) i += ndim();
    require(i >= 0 && i < ndim(), "dim index out of range");
    return shape_[static_cast<size_t>(i)];
  }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  template <typename... Ix>
  double& at(Ix... ix) {
    return data_[static_cast<size_t>(offset(ix...))];
  }
  template <typename... Ix>
  double at(Ix... ix) const {
    return data_[static_cast<size_t>(offset(ix...))];
  }

  template <typename... Ix>
  int64_t offset(Ix... ix) const {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    const size_t n = sizeof...(Ix);
    require(static_cast<int64_t>(n) == ndim(), "index rank mismatch");
    int64_t off = 0;
    for (size_t k = 0; k < n; ++k) {
      off = off * shape_[k] + idx[k];
    }
    return off;
  }

  Tensor reshaped(Shape s) const& {
    require(numel_of(s) == numel(), "reshape changes element count");
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }
  Tensor reshaped(Shape s) && {
    require(numel_of(s) == numel(), "reshape changes element count");
    shape_ = std::move(s);
    return std::move(*this);
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace wxc
