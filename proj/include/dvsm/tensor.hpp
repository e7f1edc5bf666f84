#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dvsm {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Scalars are represented with shape {1}. The gradient buffer is absent
/// until a backward pass deposits into it and is only cleared by zero_grad().
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double at(std::size_t row, std::size_t col) const { return values_[row * shape_.back() + col]; }
    double item() const;

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

    bool has_grad() const noexcept { return !grad_.empty(); }
    std::span<const double> grad() const noexcept { return grad_; }
    void accumulate_grad(std::span<const double> delta);
    void zero_grad() noexcept { grad_.clear(); }

    bool operator==(const Tensor& other) const noexcept {
        return shape_ == other.shape_ && values_ == other.values_;
    }

private:
    Shape shape_;
    std::vector<double> values_;
    std::vector<double> grad_;
    bool requires_grad_ = false;
};

}  // namespace dvsm
