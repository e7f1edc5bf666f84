#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dvsm/autodiff.hpp"

namespace dvsm {

using Distribution = std::vector<double>;

enum class ScheduleMode { Anneal, Weight, HardOnly };

std::string_view to_string(ScheduleMode mode);
/// Accepts "anneal", "weight" and "hard".
ScheduleMode parse_schedule_mode(std::string_view name);

/// How per-teacher terms combine. The objective sums over teachers; Mean divides by K.
enum class TeacherAggregation { Sum, Mean };

struct AnnealSchedule {
    std::size_t total_steps = 1;
    ScheduleMode mode = ScheduleMode::Anneal;
    double alpha = 0.0;

    void validate() const;
};

/// step / total_steps.
double anneal_lambda(std::size_t step, std::size_t total_steps);

/// lambda * onehot(gold) + (1 - lambda) * teacher.
Distribution annealed_target(std::size_t gold, std::span<const double> teacher, double lambda);

// Plain-value losses over probability distributions.

/// KL(target || student) with 0 log 0 = 0.
double kl_divergence(std::span<const double> target, std::span<const double> student);
double cross_entropy(std::size_t gold, std::span<const double> student);
/// sum_k KL(annealed_target(gold, q_k, lambda) || student).
double distill_loss(std::size_t gold, std::span<const Distribution> teachers, std::span<const double> student,
                    double lambda, TeacherAggregation aggregation = TeacherAggregation::Sum);
/// alpha * sum_k KL(q_k || student) + (1 - alpha) * CE(gold, student).
double weighted_loss(std::size_t gold, std::span<const Distribution> teachers, std::span<const double> student,
                     double alpha, TeacherAggregation aggregation = TeacherAggregation::Sum);
double mse_loss(double pred, double gold);
double regression_distill_target(double gold, double teacher, double lambda);

// Differentiable forms. The student argument is a vector of log-probabilities
// (any shape with n elements), as produced by log_softmax.

Var kl_divergence(std::span<const double> target, Var student_log_probs);
Var cross_entropy(std::size_t gold, Var student_log_probs);
Var distill_loss(std::size_t gold, std::span<const Distribution> teachers, Var student_log_probs, double lambda,
                 TeacherAggregation aggregation = TeacherAggregation::Sum);
Var weighted_loss(std::size_t gold, std::span<const Distribution> teachers, Var student_log_probs, double alpha,
                  TeacherAggregation aggregation = TeacherAggregation::Sum);
Var mse_loss(Var pred, double gold);

}  // namespace dvsm
