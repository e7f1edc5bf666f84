#include "dvsm/views.hpp"

#include <cmath>

#include "dvsm/error.hpp"

namespace dvsm {

TokenInput build_single_input(std::span<const std::int64_t> tokens, std::size_t max_len) {
    if (tokens.empty()) throw DataError("cannot embed an empty sentence");
    if (max_len < 3) throw UsageError("max_len must be at least 3");
    const std::size_t keep = std::min(tokens.size(), max_len - 2);
    TokenInput in;
    in.token_ids.push_back(kClsId);
    in.token_ids.insert(in.token_ids.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(keep));
    in.token_ids.push_back(kSepId);
    in.segment_ids.assign(in.token_ids.size(), 0);
    in.attention_mask.assign(in.token_ids.size(), 1);
    return in;
}

TokenInput build_cross_input(std::span<const std::int64_t> q_tokens, std::span<const std::int64_t> t_tokens,
                             std::size_t max_len) {
    if (q_tokens.empty() || t_tokens.empty()) throw DataError("cross input needs two nonempty sentences");
    if (max_len < 5) throw DataError("max_len " + std::to_string(max_len) + " leaves no room for both sentences");
    const std::size_t budget = max_len - 3;
    std::size_t q_len = q_tokens.size(), t_len = t_tokens.size();
    while (q_len + t_len > budget) {
        if (q_len > t_len) {
            --q_len;
        } else {
            --t_len;
        }
    }
    if (q_len == 0 || t_len == 0) throw DataError("truncation emptied a sentence");
    TokenInput in;
    in.token_ids.reserve(q_len + t_len + 3);
    in.token_ids.push_back(kClsId);
    in.token_ids.insert(in.token_ids.end(), q_tokens.begin(), q_tokens.begin() + static_cast<std::ptrdiff_t>(q_len));
    in.token_ids.push_back(kSepId);
    in.segment_ids.assign(in.token_ids.size(), 0);
    in.token_ids.insert(in.token_ids.end(), t_tokens.begin(), t_tokens.begin() + static_cast<std::ptrdiff_t>(t_len));
    in.token_ids.push_back(kSepId);
    in.segment_ids.resize(in.token_ids.size(), 1);
    in.attention_mask.assign(in.token_ids.size(), 1);
    return in;
}

// ---------------------------------------------------------------------------
// SiameseModel

namespace {

std::optional<Tensor> siamese_head(const EncoderConfig& config, TaskKind task, std::size_t num_classes) {
    if (task == TaskKind::Regression) return std::nullopt;
    if (num_classes < 2) throw UsageError("classification head needs at least 2 classes");
    return Tensor({3 * config.hidden_dim, num_classes});
}

void init_normal(Tensor& t, double std, Rng& rng) {
    for (auto& v : t.values()) v = rng.normal(0.0, std);
}

}  // namespace

SiameseModel::SiameseModel(Vocab vocab, EncoderConfig config, Pooling pooling, TaskKind task,
                           std::size_t num_classes)
    : vocab_(std::move(vocab)),
      encoder_(config),
      pooling_(pooling),
      task_(task),
      num_classes_(task == TaskKind::Regression ? 1 : num_classes),
      head_(siamese_head(config, task, num_classes)) {
    if (vocab_.size() > config.vocab_size) throw UsageError("vocabulary larger than the encoder's vocab_size");
}

SiameseModel::SiameseModel(Vocab vocab, EncoderConfig config, Pooling pooling, TaskKind task,
                           std::size_t num_classes, Rng& init_rng)
    : vocab_(std::move(vocab)),
      encoder_(config, init_rng),
      pooling_(pooling),
      task_(task),
      num_classes_(task == TaskKind::Regression ? 1 : num_classes),
      head_(siamese_head(config, task, num_classes)) {
    if (vocab_.size() > config.vocab_size) throw UsageError("vocabulary larger than the encoder's vocab_size");
    if (head_) init_normal(*head_, config.init_std, init_rng);
}

Var SiameseModel::embed(Tape& tape, std::span<const std::int64_t> tokens, bool training, Rng* rng) {
    const TokenInput in = build_single_input(tokens, encoder_.config().max_seq_len);
    return pool(encoder_.encode(tape, in, training, rng), in.attention_mask, pooling_);
}

Var SiameseModel::embed(Tape& tape, std::span<const std::int64_t> tokens) const {
    const TokenInput in = build_single_input(tokens, encoder_.config().max_seq_len);
    return pool(encoder_.encode(tape, in), in.attention_mask, pooling_);
}

Var SiameseModel::pair_features(Var u, Var v) {
    const std::size_t d = numel(u.shape());
    const Var parts[] = {u, v, abs(sub(u, v))};
    return reshape(concat(parts, 0), {1, 3 * d});
}

Var SiameseModel::log_probs(Tape& tape, std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                            bool training, Rng* rng) {
    if (!head_) throw UsageError("regression model has no classification head");
    Var u = embed(tape, a, training, rng);
    Var v = embed(tape, b, training, rng);
    return log_softmax(matmul(pair_features(u, v), tape.param(*head_)), 1);
}

Var SiameseModel::similarity(Tape& tape, std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                             bool training, Rng* rng) {
    return cosine(embed(tape, a, training, rng), embed(tape, b, training, rng));
}

void SiameseModel::for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn) {
    encoder_.for_each_parameter(fn);
    if (head_) fn("head.pair_projection", *head_);
}

void SiameseModel::for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    encoder_.for_each_parameter(fn);
    if (head_) fn("head.pair_projection", *head_);
}

// ---------------------------------------------------------------------------
// CrossModel

namespace {

std::size_t cross_outputs(TaskKind task, std::size_t num_classes) {
    if (task == TaskKind::Regression) return 1;
    if (num_classes < 2) throw UsageError("classification head needs at least 2 classes");
    return num_classes;
}

}  // namespace

CrossModel::CrossModel(Vocab vocab, EncoderConfig config, TaskKind task, std::size_t num_classes)
    : vocab_(std::move(vocab)),
      encoder_(config),
      task_(task),
      head_({config.hidden_dim, cross_outputs(task, num_classes)}) {
    if (vocab_.size() > config.vocab_size) throw UsageError("vocabulary larger than the encoder's vocab_size");
}

CrossModel::CrossModel(Vocab vocab, EncoderConfig config, TaskKind task, std::size_t num_classes, Rng& init_rng)
    : vocab_(std::move(vocab)),
      encoder_(config, init_rng),
      task_(task),
      head_({config.hidden_dim, cross_outputs(task, num_classes)}) {
    if (vocab_.size() > config.vocab_size) throw UsageError("vocabulary larger than the encoder's vocab_size");
    init_normal(head_, config.init_std, init_rng);
}

Var CrossModel::logits(Tape& tape, const TokenInput& input, bool training, Rng* rng) {
    Var cls = narrow(encoder_.encode(tape, input, training, rng), 0, 0, 1);
    return matmul(cls, tape.param(head_));
}

Var CrossModel::logits(Tape& tape, const TokenInput& input) const {
    Var cls = narrow(encoder_.encode(tape, input), 0, 0, 1);
    return matmul(cls, tape.param(head_));
}

void CrossModel::for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn) {
    encoder_.for_each_parameter(fn);
    fn("head.cls_projection", head_);
}

void CrossModel::for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    encoder_.for_each_parameter(fn);
    fn("head.cls_projection", head_);
}

// ---------------------------------------------------------------------------
// eval-mode helpers

std::vector<double> siamese_embed(const SiameseModel& model, std::string_view sentence) {
    Tape tape;
    const auto ids = model.vocab().encode(sentence);
    auto v = model.embed(tape, ids).value();
    return {v.begin(), v.end()};
}

std::vector<double> siamese_forward(const SiameseModel& model, const LabeledPair& pair) {
    if (!model.head()) throw UsageError("siamese_forward needs a classification model");
    Tape tape;
    Var u = model.embed(tape, model.vocab().encode(pair.sentence_a));
    Var v = model.embed(tape, model.vocab().encode(pair.sentence_b));
    auto p = softmax(matmul(SiameseModel::pair_features(u, v), tape.param(*model.head())), 1).value();
    return {p.begin(), p.end()};
}

std::vector<double> cross_forward(const CrossModel& model, const LabeledPair& pair) {
    if (model.task() != TaskKind::Classification) throw UsageError("cross_forward needs a classification model");
    Tape tape;
    const auto in = build_cross_input(model.vocab().encode(pair.sentence_a), model.vocab().encode(pair.sentence_b),
                                      model.encoder().config().max_seq_len);
    auto p = softmax(model.logits(tape, in), 1).value();
    return {p.begin(), p.end()};
}

std::vector<double> teacher_predict(const CrossModel& model, const LabeledPair& pair) {
    if (model.task() == TaskKind::Classification) return cross_forward(model, pair);
    Tape tape;
    const auto in = build_cross_input(model.vocab().encode(pair.sentence_a), model.vocab().encode(pair.sentence_b),
                                      model.encoder().config().max_seq_len);
    return {tanh(model.logits(tape, in)).item()};
}

double cosine_score(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw DimensionError("cosine_score: vectors differ in length");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw NumericalError("cosine_score: zero vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

double score_to_cosine(double score, double max_score) { return 2.0 * score / max_score - 1.0; }

}  // namespace dvsm
