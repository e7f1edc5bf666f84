#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dvsm/tensor.hpp"

namespace dvsm {

/// Linear warmup from 0 to base_lr over floor(warmup_ratio * total_steps)
/// steps, then linear decay to 0 at total_steps.
struct LrSchedule {
    double base_lr = 1e-3;
    double warmup_ratio = 0.1;
    std::size_t total_steps = 1;

    void validate() const;
    std::size_t warmup_steps() const;
};

double lr_at(const LrSchedule& schedule, std::size_t step);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    bool operator==(const AdamState&) const = default;
};

/// Zeroed moments shaped like `params`.
AdamState make_adam_state(std::span<Tensor* const> params, double beta1 = 0.9, double beta2 = 0.999,
                          double eps = 1e-8);

/// One bias-corrected Adam update using each tensor's grad buffer (absent = zero):
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
/// Non-finite gradients raise NumericalError before anything is modified.
void adam_step(std::span<Tensor* const> params, AdamState& state, double lr);

}  // namespace dvsm
