#include <cmath>

#include "checks.hpp"
#include "doctest.h"
#include "dvsm/distill.hpp"
#include "dvsm/error.hpp"
#include "oracle.hpp"

using namespace dvsm;

namespace {

Var logits_var(Tape& tape, const Tensor& x) { return log_softmax(tape.constant(x), 1); }

}  // namespace

TEST_CASE("kl divergence examples") {
    const Distribution p{0.2, 0.5, 0.3};
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(Distribution{1, 0}, Distribution{0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const double direct = 0.3 * std::log(0.3 / 0.6) + 0.7 * std::log(0.7 / 0.4);
    CHECK(kl_divergence(Distribution{0.3, 0.7}, Distribution{0.6, 0.4}) == doctest::Approx(direct).epsilon(1e-14));
    CHECK_THROWS_AS(kl_divergence(Distribution{1, 0}, Distribution{1, 0, 0}), DimensionError);
    CHECK_THROWS_AS(kl_divergence(Distribution{0.5, 0.5}, Distribution{1, 0}), NumericalError);
}

TEST_CASE("cross entropy examples") {
    CHECK(cross_entropy(1, Distribution{0, 1, 0}) == 0.0);
    CHECK(cross_entropy(2, Distribution{1.0 / 3, 1.0 / 3, 1.0 / 3}) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK_THROWS_AS(cross_entropy(3, Distribution{0.5, 0.5}), UsageError);
}

TEST_CASE("lambda schedule") {
    CHECK(anneal_lambda(0, 100) == 0.0);
    CHECK(anneal_lambda(100, 100) == 1.0);
    CHECK(anneal_lambda(25, 100) == 0.25);
    CHECK_THROWS_AS(anneal_lambda(101, 100), UsageError);
    CHECK_THROWS_AS(anneal_lambda(0, 0), UsageError);
    const auto r = checks::schedule_properties(10000, 1e-3, 0.1);
    CHECK(r.lambda_endpoints);
    CHECK(r.lambda_monotone);
}

TEST_CASE("annealed target mixes gold and teacher") {
    const Distribution q{0.2, 0.8};
    CHECK(annealed_target(1, q, 1.0) == Distribution{0.0, 1.0});
    CHECK(annealed_target(1, q, 0.0) == q);
    const auto mid = annealed_target(0, q, 0.5);
    CHECK(mid[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(mid[1] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK_THROWS_AS(annealed_target(0, q, 1.5), UsageError);
}

TEST_CASE("distill loss examples") {
    const Distribution student{0.4, 0.4, 0.2};
    const std::vector<Distribution> two{{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}};
    CHECK(distill_loss(1, two, student, 1.0) == doctest::Approx(2.0 * cross_entropy(1, student)).epsilon(1e-14));
    const std::vector<Distribution> same{student};
    CHECK(distill_loss(2, same, student, 0.0) == 0.0);
    // Mixtures with gold 0 at lambda 0.5, written out by hand.
    const double want = oracle::kl({0.6, 0.25, 0.15}, student) + oracle::kl({0.8, 0.05, 0.15}, student);
    CHECK(distill_loss(0, two, student, 0.5) == doctest::Approx(want).epsilon(1e-14));
    CHECK(distill_loss(0, two, student, 0.5, TeacherAggregation::Mean) == doctest::Approx(want / 2).epsilon(1e-14));
    CHECK_THROWS_AS(distill_loss(0, std::vector<Distribution>{}, student, 0.5), UsageError);
    CHECK_THROWS_AS(distill_loss(0, std::vector<Distribution>{{0.5, 0.5}}, student, 0.5), DimensionError);
}

TEST_CASE("weighted loss examples") {
    const Distribution student{0.4, 0.4, 0.2};
    const std::vector<Distribution> two{{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}};
    CHECK(weighted_loss(2, two, student, 0.0) == doctest::Approx(cross_entropy(2, student)).epsilon(1e-15));
    CHECK(weighted_loss(2, std::vector<Distribution>{student}, student, 1.0) == 0.0);
    const double want = 0.5 * (oracle::kl(two[0], student) + oracle::kl(two[1], student)) + 0.5 * -std::log(0.4);
    CHECK(weighted_loss(1, two, student, 0.5) == doctest::Approx(want).epsilon(1e-14));
    CHECK_THROWS_AS(weighted_loss(1, two, student, -0.1), UsageError);
}

TEST_CASE("regression targets and squared error") {
    CHECK(mse_loss(0.3, 0.3) == 0.0);
    CHECK(mse_loss(0.0, 2.0) == 4.0);
    CHECK(regression_distill_target(0.8, 0.6, 1.0) == 0.8);
    CHECK(regression_distill_target(0.8, 0.6, 0.0) == 0.6);
    CHECK(regression_distill_target(0.8, 0.6, 0.5) == doctest::Approx(0.7).epsilon(1e-15));

    Tensor pred({1}, 0.3);
    const double g = grad_check([](Tape&, Var x) { return mse_loss(x, -0.4); }, pred, 1e-6);
    CHECK(g < 1e-8);
    Tape tape;
    Tensor p({1}, 0.3);
    p.set_requires_grad(true);
    tape.backward(mse_loss(tape.param(p), -0.4));
    CHECK(p.grad()[0] == doctest::Approx(2 * (0.3 + 0.4)).epsilon(1e-14));
}

TEST_CASE("loss identities over random cases") {
    const auto e = checks::loss_identities(17, 100);
    CHECK(e.distill_vs_k_ce < 1e-10);
    CHECK(e.weighted_vs_ce < 1e-12);
    CHECK(e.ce_vs_kl_onehot == 0.0);
}

TEST_CASE("distill loss is nonnegative and zero only at the target") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 2 + rng.below(4);
        const auto s = checks::random_distribution(rng, n);
        const std::vector<Distribution> qs{checks::random_distribution(rng, n), checks::random_distribution(rng, n)};
        const double lambda = rng.uniform();
        CHECK(distill_loss(rng.below(n), qs, s, lambda) >= 0.0);
    }
    const Distribution q{0.1, 0.6, 0.3};
    const auto target = annealed_target(1, q, 0.4);
    CHECK(distill_loss(1, std::vector<Distribution>{q}, target, 0.4) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("differentiable losses agree with the plain forms") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const std::size_t n = 3;
        Tensor z({1, n});
        for (auto& v : z.values()) v = rng.normal(0.0, 1.0);
        Tape tape;
        Var lp = logits_var(tape, z);
        Distribution s(n);
        for (std::size_t j = 0; j < n; ++j) s[j] = std::exp(lp.value()[j]);
        const std::vector<Distribution> qs{checks::random_distribution(rng, n), checks::random_distribution(rng, n)};
        const std::size_t gold = rng.below(n);
        CHECK(cross_entropy(gold, lp).item() == doctest::Approx(cross_entropy(gold, s)).epsilon(1e-12));
        CHECK(kl_divergence(qs[0], lp).item() == doctest::Approx(kl_divergence(qs[0], s)).epsilon(1e-12));
        CHECK(distill_loss(gold, qs, lp, 0.3).item() == doctest::Approx(distill_loss(gold, qs, s, 0.3)).epsilon(1e-12));
        CHECK(weighted_loss(gold, qs, lp, 0.3).item() ==
              doctest::Approx(weighted_loss(gold, qs, s, 0.3)).epsilon(1e-12));
    }
}

TEST_CASE("loss gradients with respect to logits match finite differences") {
    Rng rng(7);
    for (int i = 0; i < 10; ++i) {
        Tensor z({1, 4});
        for (auto& v : z.values()) v = rng.normal(0.0, 1.0);
        const std::vector<Distribution> qs{checks::random_distribution(rng, 4), checks::random_distribution(rng, 4)};
        const std::size_t gold = rng.below(4);
        const double lambda = rng.uniform();
        CHECK(grad_check([&](Tape&, Var x) { return cross_entropy(gold, log_softmax(x, 1)); }, z, 1e-5) < 1e-5);
        CHECK(grad_check([&](Tape&, Var x) { return kl_divergence(qs[0], log_softmax(x, 1)); }, z, 1e-5) < 1e-5);
        CHECK(grad_check([&](Tape&, Var x) { return distill_loss(gold, qs, log_softmax(x, 1), lambda); }, z, 1e-5) <
              1e-5);
        CHECK(grad_check([&](Tape&, Var x) { return weighted_loss(gold, qs, log_softmax(x, 1), lambda); }, z, 1e-5) <
              1e-5);
    }
}

TEST_CASE("free student distribution converges to a fixed teacher") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = checks::free_student_convergence(seed, 5, 0.5, 2000, 1e-3);
        CAPTURE(seed);
        CHECK(r.final_kl < 1e-3);
        CHECK(r.steps_to_threshold > 0);
    }
}

TEST_CASE("mode names") {
    CHECK(parse_schedule_mode("anneal") == ScheduleMode::Anneal);
    CHECK(parse_schedule_mode("weight") == ScheduleMode::Weight);
    CHECK(parse_schedule_mode("hard") == ScheduleMode::HardOnly);
    CHECK(to_string(ScheduleMode::HardOnly) == "hard");
    CHECK_THROWS_AS(parse_schedule_mode("soft"), UsageError);
}
