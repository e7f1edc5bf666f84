#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dvsm/data.hpp"
#include "dvsm/encoder.hpp"

namespace dvsm {

/// [CLS] tokens [SEP] in segment 0, truncated to fit max_len.
TokenInput build_single_input(std::span<const std::int64_t> tokens, std::size_t max_len);

/// [CLS] q [SEP] t [SEP]; segment 0 through the first [SEP], 1 afterwards.
/// Longest-first truncation (ties trim t) until the pair fits in max_len.
TokenInput build_cross_input(std::span<const std::int64_t> q_tokens, std::span<const std::int64_t> t_tokens,
                             std::size_t max_len);

/// Siamese view: one encoder shared by both sentences.
///
/// Classification uses softmax(W^T [u, v, |u - v|]) with W stored as [3d x n]
/// and no bias; regression scores pairs by cos(u, v).
class SiameseModel {
public:
    SiameseModel(Vocab vocab, EncoderConfig config, Pooling pooling, TaskKind task, std::size_t num_classes,
                 Rng& init_rng);
    /// Zero parameters, for checkpoint loading.
    SiameseModel(Vocab vocab, EncoderConfig config, Pooling pooling, TaskKind task, std::size_t num_classes);

    const Vocab& vocab() const noexcept { return vocab_; }
    const Encoder& encoder() const noexcept { return encoder_; }
    Encoder& encoder() noexcept { return encoder_; }
    Pooling pooling() const noexcept { return pooling_; }
    TaskKind task() const noexcept { return task_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::optional<Tensor>& head() const noexcept { return head_; }

    Var embed(Tape& tape, std::span<const std::int64_t> tokens, bool training, Rng* rng);
    Var embed(Tape& tape, std::span<const std::int64_t> tokens) const;
    /// The [u, v, |u - v|] feature row, shape [1 x 3d].
    static Var pair_features(Var u, Var v);
    /// Log-probabilities over classes, shape [1 x n].
    Var log_probs(Tape& tape, std::span<const std::int64_t> a, std::span<const std::int64_t> b, bool training,
                  Rng* rng);
    Var similarity(Tape& tape, std::span<const std::int64_t> a, std::span<const std::int64_t> b, bool training,
                   Rng* rng);

    void for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const;

private:
    Vocab vocab_;
    Encoder encoder_;
    Pooling pooling_;
    TaskKind task_;
    std::size_t num_classes_;
    std::optional<Tensor> head_;
};

/// Interaction view: the packed pair through one encoder, read out at [CLS].
///
/// Classification uses softmax(O^T z) with O stored as [d x n]; regression
/// predicts tanh(O^T z) with n = 1, in the cosine range.
class CrossModel {
public:
    CrossModel(Vocab vocab, EncoderConfig config, TaskKind task, std::size_t num_classes, Rng& init_rng);
    CrossModel(Vocab vocab, EncoderConfig config, TaskKind task, std::size_t num_classes);

    const Vocab& vocab() const noexcept { return vocab_; }
    const Encoder& encoder() const noexcept { return encoder_; }
    Encoder& encoder() noexcept { return encoder_; }
    TaskKind task() const noexcept { return task_; }
    std::size_t num_outputs() const noexcept { return head_.dim(1); }
    const Tensor& head() const noexcept { return head_; }

    /// Head pre-activation O^T z, shape [1 x n].
    Var logits(Tape& tape, const TokenInput& input, bool training, Rng* rng);
    Var logits(Tape& tape, const TokenInput& input) const;

    void for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const;

private:
    Vocab vocab_;
    Encoder encoder_;
    TaskKind task_;
    Tensor head_;
};

// Eval-mode entry points.

std::vector<double> siamese_embed(const SiameseModel& model, std::string_view sentence);
std::vector<double> siamese_forward(const SiameseModel& model, const LabeledPair& pair);
std::vector<double> cross_forward(const CrossModel& model, const LabeledPair& pair);
/// Teacher output for one pair: a distribution, or {score} for regression.
std::vector<double> teacher_predict(const CrossModel& model, const LabeledPair& pair);

/// u.v / (|u||v|); a zero vector is a NumericalError.
double cosine_score(std::span<const double> u, std::span<const double> v);

/// STS gold in [0, 5] to the cosine range: 2 * score / max_score - 1.
double score_to_cosine(double score, double max_score = kMaxStsScore);

}  // namespace dvsm
