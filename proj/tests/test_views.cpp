#include <cmath>

#include "doctest.h"
#include "dvsm/error.hpp"
#include "dvsm/views.hpp"
#include "oracle.hpp"

using namespace dvsm;

namespace {

EncoderConfig tiny() {
    EncoderConfig c;
    c.vocab_size = 8;
    c.max_seq_len = 12;
    c.hidden_dim = 4;
    c.num_layers = 1;
    c.num_heads = 2;
    c.ffn_dim = 6;
    return c;
}

Vocab letters() { return Vocab::from_tokens({"a", "b", "c", "d"}); }

// Deterministic non-random weights so the forward pass is reproducible by hand.
template <typename Model>
void hand_set(Model& model) {
    std::size_t k = 0;
    model.for_each_parameter([&](const std::string&, Tensor& t) {
        for (auto& v : t.values()) v = 0.5 * std::sin(0.37 * static_cast<double>(++k));
    });
}

std::vector<std::int64_t> ids(std::initializer_list<std::int64_t> xs) { return xs; }

LabeledPair pair(std::string a, std::string b) { return {std::move(a), std::move(b), std::size_t{0}, std::nullopt}; }

}  // namespace

TEST_CASE("single-sentence layout") {
    const auto in = build_single_input(ids({5, 6}), 8);
    CHECK(in.token_ids == ids({kClsId, 5, 6, kSepId}));
    CHECK(in.segment_ids == ids({0, 0, 0, 0}));
    CHECK(build_single_input(ids({5, 6, 7, 8, 9}), 5).token_ids == ids({kClsId, 5, 6, 7, kSepId}));
    CHECK_THROWS_AS(build_single_input({}, 8), DataError);
}

TEST_CASE("cross layout and segments") {
    const auto in = build_cross_input(ids({10}), ids({11}), 16);
    CHECK(in.token_ids == ids({kClsId, 10, kSepId, 11, kSepId}));
    CHECK(in.segment_ids == ids({0, 0, 0, 1, 1}));
    CHECK(in.attention_mask == std::vector<std::uint8_t>(5, 1));
}

TEST_CASE("cross truncation is longest-first") {
    std::vector<std::int64_t> q(60, 7), t(2, 8);
    const auto in = build_cross_input(q, t, 16);
    // 16 - 3 specials = 13 slots, T keeps both tokens.
    CHECK(in.size() == 16);
    CHECK(std::count(in.token_ids.begin(), in.token_ids.end(), 7) == 11);
    CHECK(std::count(in.token_ids.begin(), in.token_ids.end(), 8) == 2);

    std::vector<std::int64_t> a(10, 7), b(10, 8);
    const auto even = build_cross_input(a, b, 11);
    CHECK(std::count(even.token_ids.begin(), even.token_ids.end(), 7) == 4);
    CHECK(std::count(even.token_ids.begin(), even.token_ids.end(), 8) == 4);

    CHECK_THROWS_AS(build_cross_input(a, b, 4), DataError);
    CHECK_THROWS_AS(build_cross_input({}, b, 16), DataError);
}

TEST_CASE("siamese embedding contracts") {
    Rng rng(0);
    SiameseModel m(letters(), tiny(), Pooling::Mean, TaskKind::Classification, 3, rng);
    const auto u = siamese_embed(m, "a b c");
    CHECK(u == siamese_embed(m, "a b c"));
    CHECK(u.size() == 4);
    CHECK(siamese_embed(m, "d").size() == 4);
    CHECK(siamese_embed(m, "a b c d a b c d a b c d a").size() == 4);
    CHECK(std::fabs(cosine_score(u, u) - 1.0) < 1e-12);
}

TEST_CASE("siamese forward matches the hand computation") {
    Rng rng(1);
    SiameseModel m(letters(), tiny(), Pooling::Mean, TaskKind::Classification, 3, rng);
    hand_set(m);
    const Vocab& vocab = m.vocab();
    auto embed = [&](const std::string& s) {
        const auto in = build_single_input(vocab.encode(s), 12);
        return oracle::mean_pool(oracle::encode(m.encoder(), in), in.attention_mask);
    };
    const auto want = oracle::siamese_head(embed("a b"), embed("c"), oracle::as_matrix(*m.head()));
    const auto got = siamese_forward(m, pair("a b", "c"));
    REQUIRE(got.size() == 3);
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        total += got[i];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("swapping the pair keeps the |u - v| block") {
    Rng rng(2);
    SiameseModel m(letters(), tiny(), Pooling::Mean, TaskKind::Classification, 3, rng);
    Tape tape;
    const auto a = m.vocab().encode("a b"), b = m.vocab().encode("c d a");
    Var u = m.embed(tape, a), v = m.embed(tape, b);
    auto f1 = SiameseModel::pair_features(u, v).value();
    auto f2 = SiameseModel::pair_features(v, u).value();
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(f1[i] == f2[4 + i]);
        CHECK(f1[4 + i] == f2[i]);
        CHECK(f1[8 + i] == f2[8 + i]);
    }
}

TEST_CASE("both sentences share one encoder") {
    Rng rng(3);
    SiameseModel m(letters(), tiny(), Pooling::Mean, TaskKind::Classification, 3, rng);
    m.encoder().for_each_parameter([](const std::string& name, Tensor& t) {
        if (name == "layer0.ffn_in_weight") t[0] += 0.3;
    });
    Tape tape;
    const auto s = m.vocab().encode("a b c");
    auto f = SiameseModel::pair_features(m.embed(tape, s), m.embed(tape, s)).value();
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(f[i] == f[4 + i]);
        CHECK(f[8 + i] == 0.0);
    }
}

TEST_CASE("cross forward matches the hand computation") {
    Rng rng(4);
    CrossModel m(letters(), tiny(), TaskKind::Classification, 3, rng);
    hand_set(m);
    const auto in = build_cross_input(m.vocab().encode("a b"), m.vocab().encode("c a"), 12);
    const auto hidden = oracle::encode(m.encoder(), in);
    const auto logits = oracle::matmul({hidden[0]}, oracle::as_matrix(m.head()))[0];
    const auto want = oracle::softmax(logits);
    const auto got = cross_forward(m, pair("a b", "c a"));
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("cross forward is sensitive to the second sentence") {
    Rng rng(5);
    CrossModel m(letters(), tiny(), TaskKind::Classification, 3, rng);
    const auto p = cross_forward(m, pair("a b", "c"));
    const auto q = cross_forward(m, pair("a b", "d"));
    CHECK(std::fabs(p[0] + p[1] + p[2] - 1.0) < 1e-14);
    CHECK(p != q);
}

TEST_CASE("cross forward ignores masked second-sentence content") {
    Rng rng(6);
    CrossModel m(letters(), tiny(), TaskKind::Classification, 3, rng);
    auto masked = [&](std::int64_t filler) {
        TokenInput in = build_cross_input(ids({4, 5}), ids({filler, filler}), 12);
        in.attention_mask[4] = in.attention_mask[5] = 0;
        Tape tape;
        auto v = m.logits(tape, in).value();
        return std::vector<double>(v.begin(), v.end());
    };
    const auto x = masked(6), y = masked(7);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-12));
}

TEST_CASE("regression views") {
    Rng rng(7);
    SiameseModel s(letters(), tiny(), Pooling::Mean, TaskKind::Regression, 1, rng);
    CHECK_FALSE(s.head().has_value());
    Tape tape;
    const auto a = s.vocab().encode("a b"), b = s.vocab().encode("c");
    const double sim = s.similarity(tape, a, b, false, nullptr).item();
    CHECK(sim == doctest::Approx(cosine_score(siamese_embed(s, "a b"), siamese_embed(s, "c"))).epsilon(1e-12));

    CrossModel c(letters(), tiny(), TaskKind::Regression, 1, rng);
    const auto score = teacher_predict(c, pair("a", "b"));
    REQUIRE(score.size() == 1);
    CHECK(std::fabs(score[0]) < 1.0);

    CHECK(score_to_cosine(0.0) == -1.0);
    CHECK(score_to_cosine(5.0) == 1.0);
    CHECK(score_to_cosine(2.5) == 0.0);
}

TEST_CASE("cosine score") {
    CHECK(cosine_score(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    const std::vector<double> u{0.3, -1.2, 2.0};
    CHECK(cosine_score(u, std::vector<double>{0.9, -3.6, 6.0}) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> p{1, 2, 3}, q{4, 5, 6};
    CHECK(cosine_score(p, q) == doctest::Approx(32.0 / std::sqrt(14.0 * 77.0)).epsilon(1e-15));
    CHECK(cosine_score(p, q) == cosine_score(q, p));
    CHECK_THROWS_AS(cosine_score(std::vector<double>{0, 0, 0}, p), NumericalError);
    CHECK_THROWS_AS(cosine_score(std::vector<double>{1, 2}, p), DimensionError);
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> a(5), b(5);
        for (auto& x : a) x = rng.normal(0.0, 1.0);
        for (auto& x : b) x = rng.normal(0.0, 1.0);
        CHECK(cosine_score(a, b) == cosine_score(b, a));
        CHECK(std::fabs(cosine_score(a, b)) <= 1.0 + 1e-12);
    }
}
