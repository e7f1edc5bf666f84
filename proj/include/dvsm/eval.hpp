#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dvsm/data.hpp"

namespace dvsm {

/// Fractional ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> xs);

/// Pearson correlation of the average ranks. Constant input is a NumericalError.
double spearman(std::span<const double> xs, std::span<const double> ys);

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> golds);

struct EvalReport {
    std::string metric;
    double value = 0.0;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string config_fingerprint;

    /// Single-line JSON object.
    std::string to_json_line() const;
};

/// Appends one JSON line to `log`, creating it if needed.
void append_report(const std::filesystem::path& log, const EvalReport& report);

using EmbedFn = std::function<std::vector<double>(const std::string& sentence)>;

/// Spearman between cos(embed(a), embed(b)) and the gold scores. Each distinct
/// sentence is embedded exactly once.
EvalReport eval_sts(const EmbedFn& embed, const PairDataset& dataset, std::uint64_t seed = 0,
                    std::string config_fingerprint = {});

struct SeedSummary {
    double mean = 0.0;
    /// Sample standard deviation (n - 1); 0 for a single value.
    double stddev = 0.0;
};

SeedSummary summarize(std::span<const double> values);

}  // namespace dvsm
