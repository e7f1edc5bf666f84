#include "dvsm/distill.hpp"

#include <cmath>
#include <optional>

#include "dvsm/error.hpp"

namespace dvsm {

std::string_view to_string(ScheduleMode mode) {
    switch (mode) {
        case ScheduleMode::Anneal: return "anneal";
        case ScheduleMode::Weight: return "weight";
        case ScheduleMode::HardOnly: return "hard";
    }
    return "anneal";
}

ScheduleMode parse_schedule_mode(std::string_view name) {
    if (name == "anneal") return ScheduleMode::Anneal;
    if (name == "weight") return ScheduleMode::Weight;
    if (name == "hard") return ScheduleMode::HardOnly;
    throw UsageError("unknown mode '" + std::string(name) + "' (expected hard, anneal or weight)");
}

void AnnealSchedule::validate() const {
    if (total_steps < 1) throw UsageError("schedule needs at least one step");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
}

double anneal_lambda(std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) throw UsageError("anneal_lambda: total_steps must be positive");
    if (step > total_steps) {
        throw UsageError("anneal_lambda: step " + std::to_string(step) + " beyond total " +
                         std::to_string(total_steps));
    }
    return static_cast<double>(step) / static_cast<double>(total_steps);
}

namespace {

void check_lambda(double lambda, const char* what) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError(std::string(what) + " must lie in [0, 1]");
}

void check_gold(std::size_t gold, std::size_t n) {
    if (gold >= n) {
        throw UsageError("gold label " + std::to_string(gold) + " out of range for " + std::to_string(n) +
                         " classes");
    }
}

void check_teachers(std::span<const Distribution> teachers, std::size_t n) {
    if (teachers.empty()) throw UsageError("at least one teacher is required");
    for (const auto& q : teachers) {
        if (q.size() != n) {
            throw DimensionError("teacher distribution has " + std::to_string(q.size()) + " entries, student has " +
                                 std::to_string(n));
        }
    }
}

double teacher_scale(std::size_t k, TeacherAggregation aggregation) {
    return aggregation == TeacherAggregation::Mean ? 1.0 / static_cast<double>(k) : 1.0;
}

double negative_entropy(std::span<const double> target) {
    double total = 0.0;
    for (double t : target)
        if (t > 0.0) total += t * std::log(t);
    return total;
}

}  // namespace

Distribution annealed_target(std::size_t gold, std::span<const double> teacher, double lambda) {
    check_lambda(lambda, "lambda");
    check_gold(gold, teacher.size());
    Distribution out(teacher.size());
    for (std::size_t i = 0; i < teacher.size(); ++i) out[i] = (1.0 - lambda) * teacher[i];
    out[gold] += lambda;
    return out;
}

double kl_divergence(std::span<const double> target, std::span<const double> student) {
    if (target.size() != student.size()) {
        throw DimensionError("kl_divergence: lengths " + std::to_string(target.size()) + " and " +
                             std::to_string(student.size()) + " differ");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == 0.0) continue;
        total += target[i] * (std::log(target[i]) - std::log(student[i]));
    }
    if (!std::isfinite(total)) throw NumericalError("kl_divergence: student assigns zero mass to a target class");
    return total;
}

double cross_entropy(std::size_t gold, std::span<const double> student) {
    check_gold(gold, student.size());
    const double loss = -std::log(student[gold]);
    if (!std::isfinite(loss)) throw NumericalError("cross_entropy: zero probability on the gold class");
    return loss;
}

double distill_loss(std::size_t gold, std::span<const Distribution> teachers, std::span<const double> student,
                    double lambda, TeacherAggregation aggregation) {
    check_teachers(teachers, student.size());
    double total = 0.0;
    for (const auto& q : teachers) total += kl_divergence(annealed_target(gold, q, lambda), student);
    return total * teacher_scale(teachers.size(), aggregation);
}

double weighted_loss(std::size_t gold, std::span<const Distribution> teachers, std::span<const double> student,
                     double alpha, TeacherAggregation aggregation) {
    check_lambda(alpha, "alpha");
    check_teachers(teachers, student.size());
    double soft = 0.0;
    for (const auto& q : teachers) soft += kl_divergence(q, student);
    return alpha * soft * teacher_scale(teachers.size(), aggregation) + (1.0 - alpha) * cross_entropy(gold, student);
}

double mse_loss(double pred, double gold) { return (pred - gold) * (pred - gold); }

double regression_distill_target(double gold, double teacher, double lambda) {
    check_lambda(lambda, "lambda");
    return lambda * gold + (1.0 - lambda) * teacher;
}

// ---------------------------------------------------------------------------

Var kl_divergence(std::span<const double> target, Var student_log_probs) {
    const std::size_t n = numel(student_log_probs.shape());
    if (target.size() != n) {
        throw DimensionError("kl_divergence: target has " + std::to_string(target.size()) + " entries, student " +
                             std::to_string(n));
    }
    Tape& tape = student_log_probs.tape();
    Var t = tape.constant(Tensor(student_log_probs.shape(), std::vector<double>(target.begin(), target.end())));
    return add_scalar(scale(sum(mul(t, student_log_probs)), -1.0), negative_entropy(target));
}

Var cross_entropy(std::size_t gold, Var student_log_probs) {
    check_gold(gold, numel(student_log_probs.shape()));
    return scale(pick(student_log_probs, gold), -1.0);
}

Var distill_loss(std::size_t gold, std::span<const Distribution> teachers, Var student_log_probs, double lambda,
                 TeacherAggregation aggregation) {
    check_teachers(teachers, numel(student_log_probs.shape()));
    std::optional<Var> total;
    for (const auto& q : teachers) {
        Var term = kl_divergence(annealed_target(gold, q, lambda), student_log_probs);
        total = total ? add(*total, term) : term;
    }
    return aggregation == TeacherAggregation::Mean ? scale(*total, teacher_scale(teachers.size(), aggregation))
                                                   : *total;
}

Var weighted_loss(std::size_t gold, std::span<const Distribution> teachers, Var student_log_probs, double alpha,
                  TeacherAggregation aggregation) {
    check_lambda(alpha, "alpha");
    check_teachers(teachers, numel(student_log_probs.shape()));
    std::optional<Var> soft;
    for (const auto& q : teachers) {
        Var term = kl_divergence(q, student_log_probs);
        soft = soft ? add(*soft, term) : term;
    }
    return add(scale(*soft, alpha * teacher_scale(teachers.size(), aggregation)),
               scale(cross_entropy(gold, student_log_probs), 1.0 - alpha));
}

Var mse_loss(Var pred, double gold) {
    Var diff = add_scalar(pred, -gold);
    return sum(mul(diff, diff));
}

}  // namespace dvsm
