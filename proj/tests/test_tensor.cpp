#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dvsm/autodiff.hpp"
#include "dvsm/error.hpp"

using namespace dvsm;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal(0.0, scale);
    return t;
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at(1, 2) == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, {1, 2}), DimensionError);
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
    CHECK_THROWS_AS(t.item(), DimensionError);
    CHECK(to_string(Shape{2, 3}) == "[2x3]");
}

TEST_CASE("rng is reproducible and its forks are independent") {
    Rng a(7), b(7);
    for (int i = 0; i < 5; ++i) CHECK(a.next() == b.next());
    Rng c(7);
    Rng f1 = c.fork(1);
    Rng c2(7);
    Rng f2 = c2.fork(2);
    CHECK(f1.next() != f2.next());
    Rng u(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(u.below(7) < 7);
    }
}

TEST_CASE("backward of sum gives ones") {
    Tensor x = random_tensor({3, 4}, 1);
    x.set_requires_grad(true);
    Tape tape;
    tape.backward(sum(tape.param(x)));
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of x.x gives 2x") {
    Tensor x({4}, {1.0, -2.0, 0.5, 3.0});
    x.set_requires_grad(true);
    Tape tape;
    Var v = tape.param(x);
    tape.backward(sum(mul(v, v)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-15));
}

TEST_CASE("gradients accumulate until zero_grad") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    for (int i = 0; i < 3; ++i) {
        Tape tape;
        tape.backward(sum(tape.param(x)));
    }
    CHECK(x.grad()[0] == 3.0);
    x.zero_grad();
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("a tensor used twice on one tape is one leaf") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Var a = tape.param(x);
    Var b = tape.param(x);
    CHECK(a.id() == b.id());
    tape.backward(sum(add(a, b)));
    CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("frozen leaves receive no gradient") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    const Tensor& frozen = x;
    Tape tape;
    tape.backward(sum(tape.param(frozen)));
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward rejects a non-scalar loss") {
    Tensor x({2}, {1.0, 2.0});
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.param(x)), DimensionError);
}

TEST_CASE("backward is deterministic") {
    auto run = [] {
        Tensor w = random_tensor({5, 3}, 11);
        Tensor x = random_tensor({4, 5}, 12);
        w.set_requires_grad(true);
        Tape tape;
        Var h = tanh(matmul(tape.constant(x), tape.param(w)));
        tape.backward(sum(log_softmax(h, 1)));
        return std::vector<double>(w.grad().begin(), w.grad().end());
    };
    CHECK(run() == run());
}

TEST_CASE("trailing-dimension broadcast only") {
    Tape tape;
    Var m = tape.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var row = tape.constant(Tensor({3}, {10, 20, 30}));
    auto out = add(m, row).value();
    CHECK(out[4] == 25);
    Var col = tape.constant(Tensor({2}, {1, 2}));
    CHECK_THROWS_AS(add(m, col), DimensionError);
}

TEST_CASE("abs subgradient at zero is zero") {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    tape.backward(sum(abs(tape.param(x))));
    CHECK(x.grad()[0] == -1.0);
    CHECK(x.grad()[1] == 0.0);
    CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("softmax rows sum to one") {
    Tape tape;
    Var s = softmax(tape.constant(random_tensor({6, 9}, 3, 5.0)), 1);
    auto v = s.value();
    for (std::size_t r = 0; r < 6; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 9; ++c) total += v[r * 9 + c];
        CHECK(std::fabs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("masked softmax gives masked keys exactly zero weight") {
    Tape tape;
    Var s = masked_softmax(tape.constant(random_tensor({3, 4}, 4)), std::vector<std::uint8_t>{1, 0, 1, 0});
    auto v = s.value();
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(v[r * 4 + 1] == 0.0);
        CHECK(v[r * 4 + 3] == 0.0);
        CHECK(std::fabs(v[r * 4] + v[r * 4 + 2] - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(masked_softmax(tape.constant(Tensor({1, 2})), std::vector<std::uint8_t>{0, 0}), UsageError);
}

TEST_CASE("masked mean divides by the mask count") {
    Tape tape;
    Var x = tape.constant(Tensor({3, 2}, {1, 2, 3, 4, 100, 100}));
    auto m = masked_mean(x, 0, std::vector<std::uint8_t>{1, 1, 0}).value();
    CHECK(m[0] == 2.0);
    CHECK(m[1] == 3.0);
}

TEST_CASE("embedding rejects out-of-range ids") {
    Tape tape;
    Var table = tape.constant(Tensor({4, 2}));
    CHECK_THROWS_AS(embedding(table, std::vector<std::int64_t>{4}), UsageError);
}

TEST_CASE("dropout is inverted and seeded") {
    Tape tape;
    Var x = tape.constant(Tensor({1000}, 1.0));
    Rng a(5), b(5);
    auto da = dropout(x, 0.5, a).value();
    auto db = dropout(x, 0.5, b).value();
    CHECK(std::equal(da.begin(), da.end(), db.begin()));
    for (double v : da) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("non-finite values raise NumericalError") {
    Tape tape;
    Var x = tape.constant(Tensor({1}, {-1.0}));
    CHECK_THROWS_AS(log(x), NumericalError);
    Var z = tape.constant(Tensor({2}, {0.0, 0.0}));
    CHECK_THROWS_AS(cosine(z, z), NumericalError);
}

TEST_CASE("grad_check on sum is exact to 1e-10") {
    const Tensor x = random_tensor({3, 3}, 21);
    const double err = grad_check([](Tape&, Var v) { return sum(v); }, x, 1e-5);
    CHECK(err < 1e-10);
}

TEST_CASE("grad_check on softmax-then-pick is below 1e-6") {
    const Tensor x = random_tensor({5}, 22);
    const double err = grad_check([](Tape&, Var v) { return pick(softmax(v, 0), 2); }, x, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check validates eps") {
    const Tensor x({1}, {1.0});
    CHECK_THROWS_AS(grad_check([](Tape&, Var v) { return sum(v); }, x, 0.1), UsageError);
    CHECK_THROWS_AS(grad_check([](Tape&, Var v) { return sum(v); }, x, 1e-9), UsageError);
}

TEST_CASE("relative error formula") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(1.0, 3.0) == doctest::Approx(0.5));
    CHECK(relative_error(0.0, 1e-10) == doctest::Approx(1e-2));
}

// Every differentiable op against central differences on 10 seeds.
TEST_CASE("every op passes grad_check on 10 seeds") {
    using Fn = std::function<Var(Tape&, Var)>;
    const Tensor w = random_tensor({4, 3}, 99);
    const Tensor g = random_tensor({4}, 98);
    const Tensor b = random_tensor({4}, 97);
    const std::vector<std::uint8_t> mask = {1, 0, 1};
    const std::vector<std::pair<const char*, Fn>> ops = {
        {"add", [](Tape&, Var x) { return sum(mul(add(x, x), x)); }},
        {"sub", [&](Tape& t, Var x) { return sum(mul(sub(x, t.constant(Tensor({3, 4}, 0.3))), x)); }},
        {"mul_broadcast", [&](Tape& t, Var x) { return sum(mul(x, t.constant(g))); }},
        {"scale_shift", [](Tape&, Var x) { return sum(mul(add_scalar(scale(x, 1.7), 0.2), x)); }},
        {"abs", [](Tape&, Var x) { return sum(mul(abs(x), x)); }},
        {"tanh", [](Tape&, Var x) { return sum(tanh(x)); }},
        {"gelu", [](Tape&, Var x) { return sum(mul(gelu(x), x)); }},
        {"log", [](Tape&, Var x) { return sum(log(add_scalar(mul(x, x), 1.0))); }},
        {"pick", [](Tape&, Var x) { return mul(pick(x, 5), pick(x, 7)); }},
        {"reshape", [](Tape&, Var x) { return pick(softmax(reshape(x, {12}), 0), 3); }},
        {"matmul", [&](Tape& t, Var x) { return sum(tanh(matmul(x, t.constant(w)))); }},
        {"transpose", [](Tape&, Var x) { return sum(mul(transpose(x), transpose(tanh(x)))); }},
        {"softmax0", [](Tape&, Var x) { return pick(softmax(x, 0), 4); }},
        {"log_softmax", [](Tape&, Var x) { return pick(log_softmax(x, 1), 6); }},
        {"masked_softmax",
         [&](Tape&, Var x) {
             return sum(mul(masked_softmax(narrow(x, 1, 0, 3), mask), narrow(x, 1, 1, 3)));
         }},
        {"layer_norm",
         [&](Tape& t, Var x) {
             return sum(tanh(layer_norm(x, t.constant(g), t.constant(b), 1e-12)));
         }},
        {"concat", [](Tape&, Var x) {
             std::vector<Var> parts{x, tanh(x)};
             return sum(mul(concat(parts, 0), concat(parts, 0)));
         }},
        {"narrow", [](Tape&, Var x) { return sum(mul(narrow(x, 0, 1, 2), narrow(x, 0, 0, 2))); }},
        {"masked_mean",
         [&](Tape&, Var x) { return sum(tanh(masked_mean(x, 1, std::vector<std::uint8_t>{1, 1, 0, 1}))); }},
        {"masked_max",
         [&](Tape&, Var x) { return sum(masked_max(x, 0, std::vector<std::uint8_t>{1, 0, 1})); }},
        {"cosine", [](Tape&, Var x) { return cosine(narrow(x, 0, 0, 1), narrow(x, 0, 1, 1)); }},
        {"dropout", [](Tape&, Var x) {
             Rng rng(3);
             return sum(mul(dropout(x, 0.3, rng), x));
         }},
    };
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor x = random_tensor({3, 4}, 1000 + seed);
        for (const auto& [name, fn] : ops) {
            CAPTURE(name);
            CAPTURE(seed);
            CHECK(grad_check(fn, x, 1e-5) <= 1e-4);
        }
    }
}

TEST_CASE("embedding gradient scatters into rows") {
    Tensor table = random_tensor({5, 2}, 31);
    table.set_requires_grad(true);
    Tape tape;
    tape.backward(sum(embedding(tape.param(table), std::vector<std::int64_t>{1, 3, 1})));
    CHECK(table.grad()[2] == 2.0);
    CHECK(table.grad()[6] == 1.0);
    CHECK(table.grad()[0] == 0.0);
}
