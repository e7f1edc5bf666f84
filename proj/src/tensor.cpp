#include "dvsm/tensor.hpp"

#include <cmath>

#include "dvsm/error.hpp"

namespace dvsm {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    values_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    validate_shape(shape_);
    if (numel(shape_) != values_.size()) {
        throw DimensionError("shape " + to_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                             " values, got " + std::to_string(values_.size()));
    }
}

double Tensor::item() const {
    if (values_.size() != 1) throw DimensionError("item() on non-scalar tensor " + to_string(shape_));
    return values_[0];
}

void Tensor::accumulate_grad(std::span<const double> delta) {
    if (delta.size() != values_.size()) {
        throw DimensionError("gradient size " + std::to_string(delta.size()) + " does not match tensor " +
                             to_string(shape_));
    }
    if (grad_.empty()) grad_.assign(values_.size(), 0.0);
    for (std::size_t i = 0; i < delta.size(); ++i) grad_[i] += delta[i];
}

}  // namespace dvsm
