#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "viewssl/error.hpp"

namespace viewssl::nn {

class NnError : public Error {
 public:
  enum class Kind { ShapeError, LengthMismatch, LabelOutOfRange, NonFinite, EmptyDataset, Divergence, BadConfig };
  NnError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Dense row-major array.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T{}) : shape(std::move(s)), data(count(shape), fill) {}
  Tensor(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != count(shape)) {
      throw NnError(NnError::Kind::ShapeError, "tensor data does not match its shape");
    }
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw NnError(NnError::Kind::ShapeError, "tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }

  /// Throws NonFinite naming `what` if any element is NaN or infinite.
  void check_finite(const std::string& what) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(static_cast<double>(data[i]))) {
        throw NnError(NnError::Kind::NonFinite, what + ": non-finite value at flat index " + std::to_string(i));
      }
    }
  }
};

}  // namespace viewssl::nn
