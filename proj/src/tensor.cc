#include "sca_aec/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sca_aec/error.h"

namespace sca_aec {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (NumElements(shape_) != data_.size()) {
    FailUsage("tensor data length " + std::to_string(data_.size()) +
              " does not match shape " + ShapeString(shape_));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    FailUsage("axis " + std::to_string(axis) + " out of range for shape " +
              ShapeString(shape_));
  }
  return shape_[axis];
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != data_.size()) {
    FailUsage("cannot reshape " + ShapeString(shape_) + " to " +
              ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Parameter::ZeroGrad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  } else {
    grad.Fill(0.0);
  }
}

}  // namespace sca_aec
