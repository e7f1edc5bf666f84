#include "dvsm/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "dvsm/error.hpp"

namespace dvsm {

// ---------------------------------------------------------------------------
// Var / Tape

const Shape& Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::value() const { return tape_->value(id_); }
std::span<const double> Var::grad() const { return tape_->grad(id_); }

double Var::item() const {
    auto v = value();
    if (v.size() != 1) throw DimensionError("item() on non-scalar value " + to_string(shape()));
    return v[0];
}

Tensor Var::to_tensor() const {
    auto v = value();
    return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

Var Tape::constant(Tensor value) {
    Node node;
    node.shape = value.shape();
    node.values.assign(value.values().begin(), value.values().end());
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::param(Tensor& tensor) {
    if (auto it = leaf_ids_.find(&tensor); it != leaf_ids_.end()) return Var(this, it->second);
    Node node;
    node.shape = tensor.shape();
    node.source = &tensor;
    node.leaf = &tensor;
    node.needs_grad = tensor.requires_grad();
    nodes_.push_back(std::move(node));
    const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    leaf_ids_.emplace(&tensor, id);
    return Var(this, id);
}

Var Tape::param(const Tensor& tensor) {
    if (auto it = frozen_ids_.find(&tensor); it != frozen_ids_.end()) return Var(this, it->second);
    Node node;
    node.shape = tensor.shape();
    node.source = &tensor;
    nodes_.push_back(std::move(node));
    const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    frozen_ids_.emplace(&tensor, id);
    return Var(this, id);
}

std::span<const double> Tape::value(std::uint32_t id) const {
    const Node& node = nodes_[id];
    if (node.source) return node.source->values();
    return node.values;
}

std::span<double> Tape::grad_sink(std::uint32_t id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) node.grad.assign(numel(node.shape), 0.0);
    return node.grad;
}

Var Tape::record(Shape shape, std::vector<double> values, std::vector<std::uint32_t> inputs, const char* op,
                 BackwardFn backward) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
    }
    Node node;
    node.shape = std::move(shape);
    node.values = std::move(values);
    for (auto in : inputs) node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
    node.inputs = std::move(inputs);
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) throw UsageError("backward: loss belongs to a different tape");
    if (numel(shape(loss.id())) != 1) {
        throw DimensionError("backward needs a scalar loss, got " + to_string(shape(loss.id())));
    }
    for (auto& node : nodes_) node.grad.clear();
    grad_sink(loss.id())[0] = 1.0;
    for (std::int64_t id = loss.id(); id >= 0; --id) {
        Node& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.needs_grad || node.grad.empty() || !node.backward) continue;
        node.backward(*this, static_cast<std::uint32_t>(id));
    }
    for (auto& node : nodes_) {
        if (node.leaf && node.leaf->requires_grad() && !node.grad.empty()) node.leaf->accumulate_grad(node.grad);
    }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tape& same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw UsageError("operands recorded on different tapes");
    return a.tape();
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

/// Output shape for trailing-dimension broadcasting; throws on anything else.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return a;
    if (is_suffix(b, a)) return a;
    if (is_suffix(a, b)) return b;
    throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                             to_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != axis) out.push_back(shape[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

void require_2d(const Shape& s, const char* op) {
    if (s.size() != 2) throw DimensionError(std::string(op) + " needs a 2-D tensor, got " + to_string(s));
}

template <typename Fwd, typename Deriv>
Var unary(Var a, const char* op, Fwd fwd, Deriv deriv) {
    auto x = a.value();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    return a.tape().record(a.shape(), std::move(out), {a.id()}, op, [deriv](Tape& t, std::uint32_t self) {
        const auto in = t.inputs(self)[0];
        auto g = t.grad(self);
        auto x = t.value(in);
        auto y = t.value(self);
        auto gx = t.grad_sink(in);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), "add");
    auto x = a.value(), y = b.value();
    const std::size_t n = numel(out_shape);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i % x.size()] + y[i % y.size()];
    return t.record(std::move(out_shape), std::move(out), {a.id(), b.id()}, "add", [](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        for (auto in : t.inputs(self)) {
            if (!t.needs_grad(in)) continue;
            auto gi = t.grad_sink(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i % gi.size()] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), "sub");
    auto x = a.value(), y = b.value();
    const std::size_t n = numel(out_shape);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i % x.size()] - y[i % y.size()];
    return t.record(std::move(out_shape), std::move(out), {a.id(), b.id()}, "sub", [](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        const auto ia = t.inputs(self)[0], ib = t.inputs(self)[1];
        if (t.needs_grad(ia)) {
            auto ga = t.grad_sink(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i % ga.size()] += g[i];
        }
        if (t.needs_grad(ib)) {
            auto gb = t.grad_sink(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % gb.size()] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), "mul");
    auto x = a.value(), y = b.value();
    const std::size_t n = numel(out_shape);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i % x.size()] * y[i % y.size()];
    return t.record(std::move(out_shape), std::move(out), {a.id(), b.id()}, "mul", [](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        const auto ia = t.inputs(self)[0], ib = t.inputs(self)[1];
        auto x = t.value(ia), y = t.value(ib);
        if (t.needs_grad(ia)) {
            auto ga = t.grad_sink(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i % ga.size()] += g[i] * y[i % y.size()];
        }
        if (t.needs_grad(ib)) {
            auto gb = t.grad_sink(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % gb.size()] += g[i] * x[i % x.size()];
        }
    });
}

Var scale(Var a, double factor) {
    return unary(
        a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
    return unary(
        a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var abs(Var a) {
    return unary(
        a, "abs", [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var tanh(Var a) {
    return unary(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
    return unary(
        a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        });
}

Var log(Var a) {
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// reductions and reshaping

Var sum(Var a) {
    auto x = a.value();
    double total = 0.0;
    for (double v : x) total += v;
    return a.tape().record({1}, {total}, {a.id()}, "sum", [](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        for (auto& gx : t.grad_sink(t.inputs(self)[0])) gx += g;
    });
}

Var pick(Var a, std::size_t index) {
    auto x = a.value();
    if (index >= x.size()) {
        throw DimensionError("pick: index " + std::to_string(index) + " out of range for " + to_string(a.shape()));
    }
    return a.tape().record({1}, {x[index]}, {a.id()}, "pick", [index](Tape& t, std::uint32_t self) {
        t.grad_sink(t.inputs(self)[0])[index] += t.grad(self)[0];
    });
}

Var reshape(Var a, Shape shape) {
    if (numel(shape) != numel(a.shape())) {
        throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    auto x = a.value();
    return a.tape().record(std::move(shape), std::vector<double>(x.begin(), x.end()), {a.id()}, "reshape",
                           [](Tape& t, std::uint32_t self) {
                               auto g = t.grad(self);
                               auto gx = t.grad_sink(t.inputs(self)[0]);
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           });
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        throw DimensionError("matmul: shapes " + to_string(sa) + " and " + to_string(sb) + " do not agree");
    }
    const auto m = static_cast<Eigen::Index>(sa[0]);
    const auto k = static_cast<Eigen::Index>(sa[1]);
    const auto n = static_cast<Eigen::Index>(sb[1]);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    MutMap(out.data(), m, n).noalias() = ConstMap(a.value().data(), m, k) * ConstMap(b.value().data(), k, n);
    return t.record({sa[0], sb[1]}, std::move(out), {a.id(), b.id()}, "matmul",
                    [m, k, n](Tape& t, std::uint32_t self) {
                        ConstMap g(t.grad(self).data(), m, n);
                        const auto ia = t.inputs(self)[0], ib = t.inputs(self)[1];
                        if (t.needs_grad(ia)) {
                            MutMap(t.grad_sink(ia).data(), m, k).noalias() +=
                                g * ConstMap(t.value(ib).data(), k, n).transpose();
                        }
                        if (t.needs_grad(ib)) {
                            MutMap(t.grad_sink(ib).data(), k, n).noalias() +=
                                ConstMap(t.value(ia).data(), m, k).transpose() * g;
                        }
                    });
}

Var transpose(Var a) {
    require_2d(a.shape(), "transpose");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    auto x = a.value();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
    return a.tape().record({c, r}, std::move(out), {a.id()}, "transpose", [r, c](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto gx = t.grad_sink(t.inputs(self)[0]);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    });
}

// ---------------------------------------------------------------------------
// normalization

Var softmax(Var x, std::size_t axis) {
    const AxisSplit s = split_at(x.shape(), axis, "softmax");
    auto in = x.value();
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, in[base + k * s.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < s.extent; ++k) {
                const double e = std::exp(in[base + k * s.inner] - mx);
                out[base + k * s.inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
        }
    }
    return x.tape().record(x.shape(), std::move(out), {x.id()}, "softmax", [s](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto y = t.value(self);
        auto gx = t.grad_sink(t.inputs(self)[0]);
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < s.extent; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
                for (std::size_t k = 0; k < s.extent; ++k) {
                    const std::size_t idx = base + k * s.inner;
                    gx[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

Var log_softmax(Var x, std::size_t axis) {
    const AxisSplit s = split_at(x.shape(), axis, "log_softmax");
    auto in = x.value();
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, in[base + k * s.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < s.extent; ++k) total += std::exp(in[base + k * s.inner] - mx);
            const double lse = mx + std::log(total);
            for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] = in[base + k * s.inner] - lse;
        }
    }
    return x.tape().record(x.shape(), std::move(out), {x.id()}, "log_softmax", [s](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto y = t.value(self);
        auto gx = t.grad_sink(t.inputs(self)[0]);
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double gsum = 0.0;
                for (std::size_t k = 0; k < s.extent; ++k) gsum += g[base + k * s.inner];
                for (std::size_t k = 0; k < s.extent; ++k) {
                    const std::size_t idx = base + k * s.inner;
                    gx[idx] += g[idx] - std::exp(y[idx]) * gsum;
                }
            }
        }
    });
}

Var masked_softmax(Var x, std::span<const std::uint8_t> key_mask) {
    require_2d(x.shape(), "masked_softmax");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (key_mask.size() != cols) {
        throw DimensionError("masked_softmax: mask length " + std::to_string(key_mask.size()) + " vs " +
                             to_string(x.shape()));
    }
    if (std::none_of(key_mask.begin(), key_mask.end(), [](std::uint8_t m) { return m != 0; })) {
        throw UsageError("masked_softmax: every key is masked");
    }
    auto in = x.value();
    std::vector<double> out(in.size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * cols;
        double* dst = out.data() + r * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c)
            if (key_mask[c]) mx = std::max(mx, row[c]);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            if (!key_mask[c]) continue;
            dst[c] = std::exp(row[c] - mx);
            total += dst[c];
        }
        for (std::size_t c = 0; c < cols; ++c) dst[c] /= total;
    }
    return x.tape().record(x.shape(), std::move(out), {x.id()}, "masked_softmax",
                           [rows, cols](Tape& t, std::uint32_t self) {
                               auto g = t.grad(self);
                               auto y = t.value(self);
                               auto gx = t.grad_sink(t.inputs(self)[0]);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const std::size_t base = r * cols;
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < cols; ++c) dot += g[base + c] * y[base + c];
                                   for (std::size_t c = 0; c < cols; ++c)
                                       gx[base + c] += y[base + c] * (g[base + c] - dot);
                               }
                           });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Tape& t = same_tape(x, gamma);
    same_tape(x, beta);
    if (!(eps > 0.0)) throw UsageError("layer_norm: eps must be positive");
    const std::size_t dim = x.shape().back();
    if (gamma.shape() != Shape{dim} || beta.shape() != Shape{dim}) {
        throw DimensionError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " +
                             to_string(beta.shape()) + " must match last dimension of " + to_string(x.shape()));
    }
    auto in = x.value();
    auto gv = gamma.value(), bv = beta.value();
    const std::size_t rows = in.size() / dim;
    std::vector<double> normed(in.size()), rstd(rows), out(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * dim;
        double mean = 0.0;
        for (std::size_t c = 0; c < dim; ++c) mean += row[c];
        mean /= static_cast<double>(dim);
        double var = 0.0;
        for (std::size_t c = 0; c < dim; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= static_cast<double>(dim);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < dim; ++c) {
            normed[r * dim + c] = (row[c] - mean) * rstd[r];
            out[r * dim + c] = gv[c] * normed[r * dim + c] + bv[c];
        }
    }
    return t.record(x.shape(), std::move(out), {x.id(), gamma.id(), beta.id()}, "layer_norm",
                    [normed = std::move(normed), rstd = std::move(rstd), rows, dim](Tape& t, std::uint32_t self) {
                        auto g = t.grad(self);
                        const auto ix = t.inputs(self)[0], ig = t.inputs(self)[1], ib = t.inputs(self)[2];
                        auto gv = t.value(ig);
                        if (t.needs_grad(ig)) {
                            auto gg = t.grad_sink(ig);
                            for (std::size_t i = 0; i < g.size(); ++i) gg[i % dim] += g[i] * normed[i];
                        }
                        if (t.needs_grad(ib)) {
                            auto gb = t.grad_sink(ib);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i % dim] += g[i];
                        }
                        if (!t.needs_grad(ix)) return;
                        auto gx = t.grad_sink(ix);
                        const double inv_dim = 1.0 / static_cast<double>(dim);
                        for (std::size_t r = 0; r < rows; ++r) {
                            double mean_d = 0.0, mean_dn = 0.0;
                            for (std::size_t c = 0; c < dim; ++c) {
                                const double d = g[r * dim + c] * gv[c];
                                mean_d += d;
                                mean_dn += d * normed[r * dim + c];
                            }
                            mean_d *= inv_dim;
                            mean_dn *= inv_dim;
                            for (std::size_t c = 0; c < dim; ++c) {
                                const double d = g[r * dim + c] * gv[c];
                                gx[r * dim + c] += rstd[r] * (d - mean_d - normed[r * dim + c] * mean_dn);
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// structure

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw UsageError("concat: no inputs");
    Tape& t = parts[0].tape();
    const Shape& first = parts[0].shape();
    split_at(first, axis, "concat");
    std::vector<std::size_t> extents;
    std::vector<std::uint32_t> ids;
    std::size_t total = 0;
    for (const Var& p : parts) {
        same_tape(parts[0], p);
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) throw DimensionError("concat: " + to_string(s) + " incompatible with " + to_string(first));
        extents.push_back(s[axis]);
        ids.push_back(p.id());
        total += s[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = total;
    const AxisSplit s = split_at(out_shape, axis, "concat");
    std::vector<double> out(numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto v = parts[p].value();
        const std::size_t chunk = extents[p] * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(v.data() + o * chunk, chunk, out.data() + o * total * s.inner + offset * s.inner);
        offset += extents[p];
    }
    return t.record(std::move(out_shape), std::move(out), std::move(ids), "concat",
                    [extents, s, total](Tape& t, std::uint32_t self) {
                        auto g = t.grad(self);
                        std::size_t offset = 0;
                        for (std::size_t p = 0; p < extents.size(); ++p) {
                            const auto in = t.inputs(self)[p];
                            const std::size_t chunk = extents[p] * s.inner;
                            if (t.needs_grad(in)) {
                                auto gi = t.grad_sink(in);
                                for (std::size_t o = 0; o < s.outer; ++o) {
                                    const double* src = g.data() + o * total * s.inner + offset * s.inner;
                                    for (std::size_t j = 0; j < chunk; ++j) gi[o * chunk + j] += src[j];
                                }
                            }
                            offset += extents[p];
                        }
                    });
}

Var narrow(Var x, std::size_t axis, std::size_t begin, std::size_t length) {
    const AxisSplit s = split_at(x.shape(), axis, "narrow");
    if (length == 0 || begin + length > s.extent) {
        throw DimensionError("narrow: range [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                             ") out of bounds for " + to_string(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    auto in = x.value();
    std::vector<double> out(numel(out_shape));
    const std::size_t chunk = length * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(in.data() + o * s.extent * s.inner + begin * s.inner, chunk, out.data() + o * chunk);
    return x.tape().record(std::move(out_shape), std::move(out), {x.id()}, "narrow",
                           [s, begin, chunk](Tape& t, std::uint32_t self) {
                               auto g = t.grad(self);
                               auto gx = t.grad_sink(t.inputs(self)[0]);
                               for (std::size_t o = 0; o < s.outer; ++o) {
                                   double* dst = gx.data() + o * s.extent * s.inner + begin * s.inner;
                                   for (std::size_t j = 0; j < chunk; ++j) dst[j] += g[o * chunk + j];
                               }
                           });
}

namespace {

std::size_t checked_mask_count(const AxisSplit& s, std::span<const std::uint8_t> mask, const char* op) {
    if (mask.size() != s.extent) {
        throw DimensionError(std::string(op) + ": mask length " + std::to_string(mask.size()) +
                             " does not match axis extent " + std::to_string(s.extent));
    }
    const auto count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
    if (count == 0) throw UsageError(std::string(op) + ": mask selects no entries");
    return count;
}

}  // namespace

Var masked_mean(Var x, std::size_t axis, std::span<const std::uint8_t> mask) {
    const AxisSplit s = split_at(x.shape(), axis, "masked_mean");
    const double inv = 1.0 / static_cast<double>(checked_mask_count(s, mask, "masked_mean"));
    std::vector<std::uint8_t> keep(mask.begin(), mask.end());
    auto in = x.value();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.extent; ++k) {
            if (!keep[k]) continue;
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.extent + k) * s.inner + i];
        }
    for (auto& v : out) v *= inv;
    return x.tape().record(drop_axis(x.shape(), axis), std::move(out), {x.id()}, "masked_mean",
                           [s, keep = std::move(keep), inv](Tape& t, std::uint32_t self) {
                               auto g = t.grad(self);
                               auto gx = t.grad_sink(t.inputs(self)[0]);
                               for (std::size_t o = 0; o < s.outer; ++o)
                                   for (std::size_t k = 0; k < s.extent; ++k) {
                                       if (!keep[k]) continue;
                                       for (std::size_t i = 0; i < s.inner; ++i)
                                           gx[(o * s.extent + k) * s.inner + i] += g[o * s.inner + i] * inv;
                                   }
                           });
}

Var masked_max(Var x, std::size_t axis, std::span<const std::uint8_t> mask) {
    const AxisSplit s = split_at(x.shape(), axis, "masked_max");
    checked_mask_count(s, mask, "masked_max");
    auto in = x.value();
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> argmax(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            bool found = false;
            for (std::size_t k = 0; k < s.extent; ++k) {
                if (!mask[k]) continue;
                const std::size_t idx = (o * s.extent + k) * s.inner + i;
                if (!found || in[idx] > out[o * s.inner + i]) {
                    out[o * s.inner + i] = in[idx];
                    argmax[o * s.inner + i] = idx;
                    found = true;
                }
            }
        }
    return x.tape().record(drop_axis(x.shape(), axis), std::move(out), {x.id()}, "masked_max",
                           [argmax = std::move(argmax)](Tape& t, std::uint32_t self) {
                               auto g = t.grad(self);
                               auto gx = t.grad_sink(t.inputs(self)[0]);
                               for (std::size_t j = 0; j < g.size(); ++j) gx[argmax[j]] += g[j];
                           });
}

Var embedding(Var table, std::span<const std::int64_t> ids) {
    require_2d(table.shape(), "embedding");
    const std::size_t rows = table.shape()[0], dim = table.shape()[1];
    if (ids.empty()) throw DimensionError("embedding: empty id sequence");
    std::vector<std::int64_t> idx(ids.begin(), ids.end());
    for (auto id : idx) {
        if (id < 0 || static_cast<std::size_t>(id) >= rows) {
            throw UsageError("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(rows) +
                             " rows");
        }
    }
    auto tv = table.value();
    std::vector<double> out(idx.size() * dim);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(tv.data() + static_cast<std::size_t>(idx[r]) * dim, dim, out.data() + r * dim);
    const std::size_t count = idx.size();
    return table.tape().record({count, dim}, std::move(out), {table.id()}, "embedding",
                               [idx = std::move(idx), dim](Tape& t, std::uint32_t self) {
                                   auto g = t.grad(self);
                                   auto gt = t.grad_sink(t.inputs(self)[0]);
                                   for (std::size_t r = 0; r < idx.size(); ++r) {
                                       double* dst = gt.data() + static_cast<std::size_t>(idx[r]) * dim;
                                       for (std::size_t c = 0; c < dim; ++c) dst[c] += g[r * dim + c];
                                   }
                               });
}

Var dropout(Var x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout rate must lie in [0, 1)");
    if (rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    auto in = x.value();
    std::vector<double> factors(in.size()), out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        factors[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out[i] = in[i] * factors[i];
    }
    return x.tape().record(x.shape(), std::move(out), {x.id()}, "dropout",
                           [factors = std::move(factors)](Tape& t, std::uint32_t self) {
                               auto g = t.grad(self);
                               auto gx = t.grad_sink(t.inputs(self)[0]);
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factors[i];
                           });
}

Var cosine(Var u, Var v) {
    Tape& t = same_tape(u, v);
    auto a = u.value(), b = v.value();
    if (a.size() != b.size()) {
        throw DimensionError("cosine: sizes " + to_string(u.shape()) + " and " + to_string(v.shape()) + " differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw NumericalError("cosine of a zero vector is undefined");
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    const double c = dot / (na * nb);
    return t.record({1}, {c}, {u.id(), v.id()}, "cosine", [na, nb, c](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        const auto iu = t.inputs(self)[0], iv = t.inputs(self)[1];
        auto a = t.value(iu), b = t.value(iv);
        if (t.needs_grad(iu)) {
            auto ga = t.grad_sink(iu);
            for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g * (b[i] / (na * nb) - c * a[i] / (na * na));
        }
        if (t.needs_grad(iv)) {
            auto gb = t.grad_sink(iv);
            for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g * (a[i] / (na * nb) - c * b[i] / (nb * nb));
        }
    });
}

// ---------------------------------------------------------------------------
// gradient checking

double relative_error(double analytic, double numeric) {
    return std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
}

namespace {

void check_eps(double eps) {
    if (!(eps > 1e-8 && eps < 1e-2)) throw UsageError("grad_check: eps must lie in (1e-8, 1e-2)");
}

double scalar_of(Var loss) {
    if (numel(loss.shape()) != 1) throw DimensionError("grad_check: function must return a scalar");
    return loss.value()[0];
}

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
    check_eps(eps);
    Tensor probe = x;
    probe.zero_grad();
    probe.set_requires_grad(true);
    {
        Tape tape;
        Var loss = f(tape, tape.param(probe));
        scalar_of(loss);
        tape.backward(loss);
    }
    std::vector<double> analytic(probe.size(), 0.0);
    if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

    auto eval_at = [&](std::size_t i, double value) {
        Tensor shifted = x;
        shifted.values()[i] = value;
        Tape tape;
        return scalar_of(f(tape, tape.constant(std::move(shifted))));
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double numeric = (eval_at(i, x[i] + eps) - eval_at(i, x[i] - eps)) / (2.0 * eps);
        worst = std::max(worst, relative_error(analytic[i], numeric));
    }
    return worst;
}

GradCheckResult grad_check_params(const std::function<Var(Tape&)>& loss, std::span<Tensor* const> params,
                                  std::span<const std::string> names, double eps,
                                  std::size_t max_coords_per_tensor, std::uint64_t seed,
                                  double significance_floor) {
    check_eps(eps);
    if (names.size() != params.size()) throw UsageError("grad_check_params: one name per parameter required");
    for (Tensor* p : params) {
        p->zero_grad();
        p->set_requires_grad(true);
    }
    {
        Tape tape;
        Var l = loss(tape);
        scalar_of(l);
        tape.backward(l);
    }
    auto evaluate = [&] {
        Tape tape;
        return scalar_of(loss(tape));
    };

    Rng rng(seed);
    GradCheckResult result;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p];
        std::vector<double> analytic(param.size(), 0.0);
        if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());

        // Relative error is only meaningful where the gradient stands clear of
        // central-difference noise; a couple of flat coordinates get an
        // absolute check instead.
        std::vector<std::size_t> live, flat;
        for (std::size_t i = 0; i < analytic.size(); ++i)
            (std::fabs(analytic[i]) >= significance_floor ? live : flat).push_back(i);
        auto sample = [&](std::vector<std::size_t>& pool, std::size_t count) {
            for (std::size_t i = 0; i < std::min(count, pool.size()); ++i) {
                const std::size_t j = i + rng.below(pool.size() - i);
                std::swap(pool[i], pool[j]);
            }
            pool.resize(std::min(count, pool.size()));
        };
        sample(live, max_coords_per_tensor);
        sample(flat, 2);
        auto numeric_at = [&](std::size_t i) {
            const double original = param[i];
            param[i] = original + eps;
            const double up = evaluate();
            param[i] = original - eps;
            const double down = evaluate();
            param[i] = original;
            return (up - down) / (2.0 * eps);
        };

        for (std::size_t i : flat) {
            result.max_flat_abs_error = std::max(result.max_flat_abs_error, std::fabs(analytic[i] - numeric_at(i)));
            ++result.flat_coordinates;
        }
        for (std::size_t i : live) {
            const double numeric = numeric_at(i);
            const double err = relative_error(analytic[i], numeric);
            ++result.coordinates;
            if (err >= result.max_rel_error) {
                result.max_rel_error = err;
                char detail[96];
                std::snprintf(detail, sizeof detail, " analytic %.6e numeric %.6e", analytic[i], numeric);
                result.worst = names[p] + "[" + std::to_string(i) + "]" + detail;
            }
        }
    }
    for (Tensor* p : params) p->zero_grad();
    return result;
}

}  // namespace dvsm
