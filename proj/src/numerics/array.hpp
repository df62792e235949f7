#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "numerics/errors.hpp"

namespace drift::num {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major array. Plain value type; the autodiff layer wraps it.
template <typename T>
struct Array {
  Shape shape;
  std::vector<T> data;

  Array() = default;
  explicit Array(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Array(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) {
      throw DimensionError("array data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
  }

  static Array matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return Array({rows, cols}, std::vector<T>(values));
  }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  T& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  template <typename U>
  Array<U> cast() const {
    return Array<U>(shape, std::vector<U>(data.begin(), data.end()));
  }

  bool operator==(const Array&) const = default;
};

}  // namespace drift::num
