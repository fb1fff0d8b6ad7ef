#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "zett/common/rng.hpp"

namespace zett::grad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Most ops view it as a matrix whose
// column count is the last dimension.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> values);  // throws ShapeMismatch

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor randn(Shape s, Rng& rng, double stddev);

  std::size_t size() const { return data.size(); }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : data.size() / cols(); }
  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double item() const;  // the single element; throws NotScalar

  bool operator==(const Tensor&) const = default;
};

// A trainable (or frozen) tensor shared between models and the optimizer.
// Tied embeddings are one Parameter referenced twice.
struct ParamData {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool trainable = true;
  bool decay = true;  // AdamW weight decay applies

  void zero_grad();
};

using Parameter = std::shared_ptr<ParamData>;

Parameter make_param(std::string name, Tensor value, bool decay = true);

}  // namespace zett::grad
