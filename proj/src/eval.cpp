#include "dvsm/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"

#include "dvsm/error.hpp"
#include "dvsm/views.hpp"

namespace dvsm {

std::vector<double> average_ranks(std::span<const double> xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) {
        throw DimensionError("spearman: lengths " + std::to_string(xs.size()) + " and " + std::to_string(ys.size()) +
                             " differ");
    }
    if (xs.size() < 2) throw UsageError("spearman needs at least two observations");
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw NumericalError("spearman: non-finite input");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    const double mean = (n + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mean, dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw NumericalError("spearman: correlation undefined for constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> golds) {
    if (predictions.size() != golds.size()) throw DimensionError("accuracy: length mismatch");
    if (predictions.empty()) throw UsageError("accuracy of an empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) hits += predictions[i] == golds[i];
    return static_cast<double>(hits) / static_cast<double>(golds.size());
}

std::string EvalReport::to_json_line() const {
    nlohmann::ordered_json j;
    j["metric"] = metric;
    j["value"] = value;
    j["count"] = count;
    j["seed"] = seed;
    j["config_fingerprint"] = config_fingerprint;
    return j.dump();
}

void append_report(const std::filesystem::path& log, const EvalReport& report) {
    if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
    std::ofstream out(log, std::ios::app);
    if (!out) throw DataError("cannot append to " + log.string());
    out << report.to_json_line() << '\n';
}

EvalReport eval_sts(const EmbedFn& embed, const PairDataset& dataset, std::uint64_t seed,
                    std::string config_fingerprint) {
    if (dataset.task != TaskKind::Regression) {
        throw DataError("task-kind mismatch: STS evaluation needs a regression dataset");
    }
    std::map<std::string, std::vector<double>> embeddings;
    auto lookup = [&](const std::string& s) -> const std::vector<double>& {
        auto it = embeddings.find(s);
        if (it == embeddings.end()) it = embeddings.emplace(s, embed(s)).first;
        return it->second;
    };
    std::vector<double> predicted, gold;
    predicted.reserve(dataset.size());
    gold.reserve(dataset.size());
    for (const auto& pair : dataset.pairs) {
        const auto& u = lookup(pair.sentence_a);
        const auto& v = lookup(pair.sentence_b);
        predicted.push_back(cosine_score(u, v));
        gold.push_back(pair.score.value());
    }
    return EvalReport{"spearman", spearman(predicted, gold), dataset.size(), seed, std::move(config_fingerprint)};
}

SeedSummary summarize(std::span<const double> values) {
    if (values.empty()) throw UsageError("summarize: no values");
    SeedSummary s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

}  // namespace dvsm
