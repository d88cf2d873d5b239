#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltcnn/rng.hpp"

namespace ltcnn {

static_assert(std::endian::native == std::endian::little,
              "LTT1/LTCNNCP1 serialization assumes a little-endian host");

// Dense row-major N-d array. Last dimension is fastest. The universal value
// type for images, activations, weights and gradients.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), T(0)) {}

  TensorT(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw std::invalid_argument("tensor data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
    }
  }

  static TensorT full(std::vector<std::size_t> shape, T value) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename... Ix>
  T& operator()(Ix... ix) {
    return data_[flat_index(ix...)];
  }
  template <typename... Ix>
  const T& operator()(Ix... ix) const {
    return data_[flat_index(ix...)];
  }

  // Row-major offset of (i0, i1, ...): i0*d1*...*dn + i1*d2*...*dn + ...
  template <typename... Ix>
  std::size_t flat_index(Ix... ix) const {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    const std::size_t n = sizeof...(Ix);
    if (n != shape_.size())
      throw std::invalid_argument("index rank mismatch");
    std::size_t off = 0;
    for (std::size_t d = 0; d < n; ++d) off = off * shape_[d] + idx[d];
    return off;
  }

  // Same data, new shape; element counts must agree.
  TensorT reshaped(std::vector<std::size_t> new_shape) const {
    if (checked_size(new_shape) != data_.size()) {
      throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " +
                                  shape_str(new_shape) +
                                  ": element count mismatch");
    }
    return TensorT(std::move(new_shape), data_);
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
  }

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("zero dimension in tensor shape");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

namespace detail {
template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b,
                        const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                TensorT<T>::shape_str(a.shape()) + " vs " +
                                TensorT<T>::shape_str(b.shape()));
  }
}
}  // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape(a, b, "add");
  TensorT<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape(a, b, "sub");
  TensorT<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape(a, b, "mul");
  TensorT<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
TensorT<T> max_with_scalar(const TensorT<T>& a, T s) {
  TensorT<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > s ? a[i] : s;
  return out;
}

// out[m,n] = sum_k a[m,k] * b[k,n], accumulated left to right over k so the
// result is bitwise reproducible.
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                TensorT<T>::shape_str(a.shape()) + " x " +
                                TensorT<T>::shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<T> out({m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = pa[i * k + kk];
      const T* brow = pb + kk * n;
      T* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename T>
TensorT<T> sample_normal(Rng& rng, std::vector<std::size_t> shape, double mean,
                         double stddev) {
  if (stddev < 0) throw std::invalid_argument("sample_normal: stddev < 0");
  TensorT<T> out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(rng.normal(mean, stddev));
  return out;
}

// --- LTT1 tensor file format ---
// magic "LTT1", u8 rank, rank x u32-LE dims, row-major f32-LE payload.

inline void save_ltt1(const std::string& path, const Tensor& t) {
  if (t.rank() > 255) throw std::invalid_argument("LTT1: rank > 255");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("LTT1: cannot open " + path);
  f.write("LTT1", 4);
  const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&rank), 1);
  for (std::size_t d : t.shape()) {
    const std::uint32_t v = static_cast<std::uint32_t>(d);
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!f) throw std::runtime_error("LTT1: write failed for " + path);
}

inline Tensor load_ltt1(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("LTT1: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "LTT1", 4) != 0)
    throw std::runtime_error("LTT1: bad magic in " + path);
  std::uint8_t rank = 0;
  f.read(reinterpret_cast<char*>(&rank), 1);
  if (!f) throw std::runtime_error("LTT1: truncated header in " + path);
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    f.read(reinterpret_cast<char*>(&d), 4);
    if (!f || d == 0) throw std::runtime_error("LTT1: bad dims in " + path);
    shape[i] = d;
    n *= d;
  }
  std::vector<float> data(n);
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::size_t>(f.gcount()) != n * sizeof(float))
    throw std::runtime_error("LTT1: truncated payload in " + path);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace ltcnn
