#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dvsm/rng.hpp"
#include "dvsm/tensor.hpp"

namespace dvsm {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::uint32_t id() const noexcept { return id_; }
    const Shape& shape() const;
    std::span<const double> value() const;
    std::span<const double> grad() const;
    double item() const;
    Tensor to_tensor() const;

private:
    friend class Tape;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

/// Records operations in execution order for one reverse-mode pass.
///
/// Nodes are appended as ops run, so the record is topologically ordered by
/// construction. backward() walks it once in reverse and then adds each leaf's
/// gradient into the grad buffer of the Tensor it was created from.
/// A tape is single-threaded; separate tapes may live on separate threads.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Leaf bound to an external tensor. The same tensor always maps to the same leaf.
    Var param(Tensor& tensor);
    /// Read-only leaf; never receives gradient.
    Var param(const Tensor& tensor);

    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

    // Op-authoring interface.
    Var record(Shape shape, std::vector<double> values, std::vector<std::uint32_t> inputs, const char* op,
               BackwardFn backward);
    const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
    std::span<const double> value(std::uint32_t id) const;
    std::span<const double> grad(std::uint32_t id) const { return nodes_[id].grad; }
    bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
    /// Gradient buffer of an input, allocated on first use.
    std::span<double> grad_sink(std::uint32_t id);
    const std::vector<std::uint32_t>& inputs(std::uint32_t id) const { return nodes_[id].inputs; }

private:
    struct Node {
        Shape shape;
        std::vector<double> values;
        const Tensor* source = nullptr;
        Tensor* leaf = nullptr;
        std::vector<std::uint32_t> inputs;
        std::vector<double> grad;
        BackwardFn backward;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::uint32_t> leaf_ids_;
    std::unordered_map<const Tensor*, std::uint32_t> frozen_ids_;
};

// Elementwise arithmetic. Shapes must match, or the smaller shape must equal
// the trailing dimensions of the larger one (e.g. [d] against [L x d]); it is
// then repeated along the leading dimensions. No other broadcasting is done.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

// abs'(0) = 0.
Var abs(Var a);
Var tanh(Var a);
/// Exact (erf) GELU.
Var gelu(Var a);
Var log(Var a);

/// Sum of all elements, shape {1}.
Var sum(Var a);
/// Element `index` of a flat view, shape {1}.
Var pick(Var a, std::size_t index);
Var reshape(Var a, Shape shape);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var softmax(Var x, std::size_t axis);
Var log_softmax(Var x, std::size_t axis);
/// Softmax over the last axis of a 2-D tensor where columns with key_mask[c] == 0
/// get probability exactly 0. At least one column must be unmasked.
Var masked_softmax(Var x, std::span<const std::uint8_t> key_mask);

/// Normalizes over the last dimension, then applies gamma * x + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps);

Var concat(std::span<const Var> parts, std::size_t axis);
/// Sub-range [begin, begin + length) along `axis`.
Var narrow(Var x, std::size_t axis, std::size_t begin, std::size_t length);

/// Mean over `axis` of the entries whose mask bit is set; divides by the mask count.
Var masked_mean(Var x, std::size_t axis, std::span<const std::uint8_t> mask);
/// Coordinate-wise max over `axis` among the entries whose mask bit is set.
Var masked_max(Var x, std::size_t axis, std::span<const std::uint8_t> mask);

/// Rows of `table` selected by `ids`, shape [ids.size() x table.dim(1)].
Var embedding(Var table, std::span<const std::int64_t> ids);

/// Inverted dropout: zeroes each element with probability `rate` and scales survivors by 1/(1-rate).
Var dropout(Var x, double rate, Rng& rng);

/// u.v / (|u||v|) for two equal-size vectors; zero-norm input is an error.
Var cosine(Var u, Var v);

// Finite-difference gradient checking.

/// Relative error used by the gradient checker.
double relative_error(double analytic, double numeric);

/// Max relative error between backward() and central differences over every
/// coordinate of x, for a scalar-valued f.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps);

struct GradCheckResult {
    /// Over coordinates whose analytic gradient reaches the significance floor.
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst;
    /// |analytic - numeric| over coordinates below the floor, where a central
    /// difference measures little beyond rounding of the loss.
    double max_flat_abs_error = 0.0;
    std::size_t flat_coordinates = 0;
};

/// Checks `loss` against central differences for up to `max_coords_per_tensor`
/// sampled significant coordinates and two flat ones per parameter tensor.
/// Grad buffers of `params` are cleared before and after.
GradCheckResult grad_check_params(const std::function<Var(Tape&)>& loss, std::span<Tensor* const> params,
                                  std::span<const std::string> names, double eps,
                                  std::size_t max_coords_per_tensor, std::uint64_t seed,
                                  double significance_floor = 1e-6);

}  // namespace dvsm
