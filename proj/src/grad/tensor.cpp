#include "zett/grad/tensor.hpp"

#include <algorithm>

#include "zett/common/error.hpp"

namespace zett::grad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  require(data.size() == numel(shape), ErrorCode::ShapeMismatch,
          "tensor data of " + std::to_string(data.size()) + " values for shape " + shape_string(shape));
}

Tensor Tensor::randn(Shape s, Rng& rng, double stddev) {
  Tensor t(std::move(s));
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

double Tensor::item() const {
  require(data.size() == 1, ErrorCode::NotScalar, "tensor of shape " + shape_string(shape) + " is not a scalar");
  return data[0];
}

void ParamData::zero_grad() {
  if (grad.shape != value.shape) grad = Tensor(value.shape);
  else std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

Parameter make_param(std::string name, Tensor value, bool decay) {
  auto p = std::make_shared<ParamData>();
  p->name = std::move(name);
  p->grad = Tensor(value.shape);
  p->value = std::move(value);
  p->decay = decay;
  return p;
}

}  // namespace zett::grad
