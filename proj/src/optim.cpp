#include "dvsm/optim.hpp"

#include <cmath>

#include "dvsm/error.hpp"

namespace dvsm {

void LrSchedule::validate() const {
    if (!(base_lr > 0.0)) throw UsageError("base learning rate must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw UsageError("warmup_ratio must lie in [0, 1)");
    if (total_steps == 0) throw UsageError("schedule needs at least one step");
}

std::size_t LrSchedule::warmup_steps() const {
    // The small offset keeps e.g. 0.1 * 30 from landing just above an integer.
    return static_cast<std::size_t>(std::floor(warmup_ratio * static_cast<double>(total_steps) + 1e-9));
}

double lr_at(const LrSchedule& schedule, std::size_t step) {
    schedule.validate();
    if (step > schedule.total_steps) {
        throw UsageError("lr_at: step " + std::to_string(step) + " beyond total " +
                         std::to_string(schedule.total_steps));
    }
    const std::size_t warmup = schedule.warmup_steps();
    if (step < warmup) return schedule.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    return schedule.base_lr * static_cast<double>(schedule.total_steps - step) /
           static_cast<double>(schedule.total_steps - warmup);
}

AdamState make_adam_state(std::span<Tensor* const> params, double beta1, double beta2, double eps) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    for (const Tensor* p : params) {
        s.first_moment.emplace_back(p->size(), 0.0);
        s.second_moment.emplace_back(p->size(), 0.0);
    }
    return s;
}

void adam_step(std::span<Tensor* const> params, AdamState& state, double lr) {
    if (!(lr >= 0.0)) throw UsageError("adam_step: learning rate must be non-negative");
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                             " tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& t = *params[p];
        if (state.first_moment[p].size() != t.size() || state.second_moment[p].size() != t.size()) {
            throw DimensionError("adam_step: moment buffer shape does not match parameter " + to_string(t.shape()));
        }
        for (double g : t.grad())
            if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient");
    }

    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        auto values = t.values();
        auto grad = t.grad();
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad.empty() ? 0.0 : grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

}  // namespace dvsm
