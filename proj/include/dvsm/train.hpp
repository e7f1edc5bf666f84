#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dvsm/checkpoint.hpp"
#include "dvsm/data.hpp"
#include "dvsm/distill.hpp"
#include "dvsm/eval.hpp"
#include "dvsm/optim.hpp"
#include "dvsm/views.hpp"

namespace dvsm {

/// Everything a training command needs besides its input files.
struct TrainPlan {
    TaskKind task = TaskKind::Classification;
    EncoderConfig encoder;
    Pooling pooling = Pooling::Mean;
    std::size_t num_classes = kNumNliClasses;
    std::size_t batch_size = 16;
    std::size_t epochs = 1;
    double base_lr = 1e-3;
    double warmup_ratio = 0.1;
    std::uint64_t seed = 0;
    ScheduleMode mode = ScheduleMode::Anneal;
    double alpha = 0.5;
    TeacherAggregation aggregation = TeacherAggregation::Sum;
    /// Upper end of the gold similarity scale; scores map to 2 s / max_score - 1.
    double max_score = kMaxStsScore;
    std::vector<std::string> teachers;
    std::string output_dir;

    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static TrainPlan from_json(const nlohmann::json& j);
    static TrainPlan load(const std::filesystem::path& path);
    /// Overrides one field from its command-line spelling (e.g. "epochs", "3").
    void set(std::string_view key, std::string_view value);
    /// Hash of the plan's JSON form, for reports.
    std::string fingerprint() const;
};

/// epochs * ceil(dataset_size / batch_size).
std::size_t planned_steps(const TrainPlan& plan, std::size_t dataset_size);

struct StepRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double lambda = 0.0;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Cross-encoder trained on gold targets only (cross-entropy, or MSE on tanh output for regression).
CrossModel train_teacher(const TrainPlan& plan, const PairDataset& data, const Vocab& vocab,
                         AdamState* final_state = nullptr, const StepCallback& on_step = {});

/// Runs each teacher once over every example in eval mode.
TeacherCache cache_teachers(std::span<const CrossModel* const> teachers, std::span<const std::string> teacher_ids,
                            const PairDataset& data);

/// Siamese student. HardOnly ignores `cache`; Anneal and Weight need one that
/// matches `data`. Lambda moves linearly from 0 at the first update to 1 at the last.
SiameseModel train_student(const TrainPlan& plan, const PairDataset& data, const Vocab& vocab,
                           const TeacherCache* cache, AdamState* final_state = nullptr,
                           const StepCallback& on_step = {});

/// The annealing weight used for optimizer update `step` of `total_steps`.
double lambda_for_update(std::size_t step, std::size_t total_steps);

std::vector<std::size_t> predict_labels(const SiameseModel& model, const PairDataset& data);
std::vector<std::size_t> predict_labels(const CrossModel& model, const PairDataset& data);

/// Accuracy for classification data, Spearman for regression data. A cross
/// model trained for classification cannot score regression pairs.
EvalReport evaluate(const SiameseModel& model, const PairDataset& data, std::uint64_t seed = 0,
                    std::string config_fingerprint = {});
EvalReport evaluate(const CrossModel& model, const PairDataset& data, std::uint64_t seed = 0,
                    std::string config_fingerprint = {});

// Gradient checking over whole loss paths.

struct LossPath {
    std::string name;
    std::function<Var(Tape&)> loss;
    std::vector<Tensor*> params;
    std::vector<std::string> param_names;
};

struct GradcheckEntry {
    std::string path;
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst;
    double flat_abs_error = 0.0;
    std::size_t flat_coordinates = 0;
    bool passed = false;
};

struct GradcheckReport {
    double eps = 1e-5;
    double threshold = 1e-4;
    /// Absolute tolerance for coordinates whose gradient is below the significance floor.
    double flat_tolerance = 1e-8;
    std::vector<GradcheckEntry> entries;

    bool passed() const;
};

GradcheckReport run_gradcheck(std::span<const LossPath> paths, double eps, double threshold, std::uint64_t seed,
                              std::size_t coords_per_tensor = 6);

/// Every training loss (siamese CE, teacher CE, distill at lambda 0 / 0.5 / 1,
/// weighted at alpha 0 / 0.5 / 1, cosine + MSE) on a small random batch.
GradcheckReport gradcheck(const EncoderConfig& config, std::uint64_t seed, double eps = 1e-5,
                          double threshold = 1e-4);

// Loss-weighting versus annealing comparison.

struct SweepRow {
    std::string label;
    /// Loss weight for weighted rows; negative for the annealing row.
    double alpha = -1.0;
    std::vector<double> per_seed;
    SeedSummary summary;
};

/// One weighted-loss student per (alpha, seed) plus one annealed student per
/// seed, each scored by Spearman on `eval_sts_data`.
std::vector<SweepRow> alpha_sweep(const TrainPlan& base, const PairDataset& train, const Vocab& vocab,
                                  const TeacherCache& cache, const PairDataset& eval_sts_data,
                                  std::span<const double> alphas, std::span<const std::uint64_t> seeds);

std::string format_sweep_table(std::span<const SweepRow> rows);

}  // namespace dvsm
