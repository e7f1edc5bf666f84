#include "dvsm/train.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dvsm/error.hpp"

namespace dvsm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TrainPlan

void TrainPlan::validate() const {
    encoder.validate();
    if (batch_size == 0) throw UsageError("batch_size must be at least 1");
    if (!(base_lr > 0.0)) throw UsageError("base_lr must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw UsageError("warmup_ratio must lie in [0, 1)");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
    if (task == TaskKind::Classification && num_classes < 2) throw UsageError("num_classes must be at least 2");
    if (!(max_score > 0.0)) throw UsageError("max_score must be positive");
}

json TrainPlan::to_json() const {
    return {{"task", std::string(dvsm::to_string(task))},
            {"encoder", dvsm::to_json(encoder)},
            {"pooling", std::string(dvsm::to_string(pooling))},
            {"num_classes", num_classes},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"base_lr", base_lr},
            {"warmup_ratio", warmup_ratio},
            {"seed", seed},
            {"mode", std::string(dvsm::to_string(mode))},
            {"alpha", alpha},
            {"teacher_aggregation", aggregation == TeacherAggregation::Sum ? "sum" : "mean"},
            {"max_score", max_score},
            {"teachers", teachers},
            {"output_dir", output_dir}};
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || p != text.data() + text.size()) {
        throw UsageError("invalid value '" + std::string(text) + "' for " + std::string(key));
    }
    return value;
}

std::vector<std::string> split_commas(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(',', start);
        if (end == std::string_view::npos) end = text.size();
        if (end > start) out.emplace_back(text.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

TeacherAggregation parse_aggregation(std::string_view s) {
    if (s == "sum") return TeacherAggregation::Sum;
    if (s == "mean") return TeacherAggregation::Mean;
    throw UsageError("teacher_aggregation must be sum or mean");
}

}  // namespace

TrainPlan TrainPlan::from_json(const json& j) {
    if (!j.is_object()) throw UsageError("plan must be a JSON object");
    TrainPlan p;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "task") p.task = parse_task_kind(value.get<std::string>());
            else if (key == "encoder") p.encoder = encoder_config_from_json(value, p.encoder);
            else if (key == "pooling") p.pooling = parse_pooling(value.get<std::string>());
            else if (key == "num_classes") p.num_classes = value.get<std::size_t>();
            else if (key == "batch_size") p.batch_size = value.get<std::size_t>();
            else if (key == "epochs") p.epochs = value.get<std::size_t>();
            else if (key == "base_lr") p.base_lr = value.get<double>();
            else if (key == "warmup_ratio") p.warmup_ratio = value.get<double>();
            else if (key == "seed") p.seed = value.get<std::uint64_t>();
            else if (key == "mode") p.mode = parse_schedule_mode(value.get<std::string>());
            else if (key == "alpha") p.alpha = value.get<double>();
            else if (key == "teacher_aggregation") p.aggregation = parse_aggregation(value.get<std::string>());
            else if (key == "max_score") p.max_score = value.get<double>();
            else if (key == "teachers") p.teachers = value.get<std::vector<std::string>>();
            else if (key == "output_dir") p.output_dir = value.get<std::string>();
            else throw UsageError("unknown plan key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("malformed plan: ") + e.what());
    }
    p.validate();
    return p;
}

TrainPlan TrainPlan::load(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    try {
        return from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
}

void TrainPlan::set(std::string_view key, std::string_view value) {
    if (key == "task") task = parse_task_kind(value);
    else if (key == "pooling") pooling = parse_pooling(value);
    else if (key == "num_classes") num_classes = parse_number<std::size_t>(key, value);
    else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
    else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
    else if (key == "base_lr") base_lr = parse_number<double>(key, value);
    else if (key == "warmup_ratio") warmup_ratio = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "mode") mode = parse_schedule_mode(value);
    else if (key == "alpha") alpha = parse_number<double>(key, value);
    else if (key == "teacher_aggregation") aggregation = parse_aggregation(value);
    else if (key == "max_score") max_score = parse_number<double>(key, value);
    else if (key == "teachers") teachers = split_commas(value);
    else if (key == "output_dir") output_dir = std::string(value);
    else if (key == "vocab_size") encoder.vocab_size = parse_number<std::size_t>(key, value);
    else if (key == "max_seq_len") encoder.max_seq_len = parse_number<std::size_t>(key, value);
    else if (key == "hidden_dim") encoder.hidden_dim = parse_number<std::size_t>(key, value);
    else if (key == "num_layers") encoder.num_layers = parse_number<std::size_t>(key, value);
    else if (key == "num_heads") encoder.num_heads = parse_number<std::size_t>(key, value);
    else if (key == "ffn_dim") encoder.ffn_dim = parse_number<std::size_t>(key, value);
    else if (key == "dropout_rate") encoder.dropout_rate = parse_number<double>(key, value);
    else throw UsageError("unknown plan key '" + std::string(key) + "'");
    validate();
}

std::string TrainPlan::fingerprint() const {
    json j = to_json();
    j.erase("output_dir");
    const std::string text = j.dump();
    return hex64(fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}));
}

std::size_t planned_steps(const TrainPlan& plan, std::size_t dataset_size) {
    if (plan.batch_size == 0) throw UsageError("batch_size must be at least 1");
    return plan.epochs * ((dataset_size + plan.batch_size - 1) / plan.batch_size);
}

double lambda_for_update(std::size_t step, std::size_t total_steps) {
    if (total_steps <= 1) return 0.0;
    return anneal_lambda(step, total_steps - 1);
}

// ---------------------------------------------------------------------------
// training loop

namespace {

struct EncodedPair {
    std::vector<std::int64_t> a;
    std::vector<std::int64_t> b;
};

std::vector<EncodedPair> encode_pairs(const PairDataset& data, const Vocab& vocab) {
    std::vector<EncodedPair> out;
    out.reserve(data.size());
    for (const auto& p : data.pairs) out.push_back({vocab.encode(p.sentence_a), vocab.encode(p.sentence_b)});
    return out;
}

void check_task(const PairDataset& data, TaskKind task) {
    if (data.task != task) {
        throw DataError(std::string("task-kind mismatch: plan expects ") + std::string(to_string(task)) +
                        " data, got " + std::string(to_string(data.task)));
    }
}

// Independent generator streams derived from the plan seed.
enum Stream : std::uint64_t { kInitStream = 1, kDropoutStream = 2, kShuffleStream = 3 };

template <typename Model, typename ExampleLoss>
void run_training(Model& model, const TrainPlan& plan, std::size_t dataset_size, ExampleLoss&& example_loss,
                  AdamState* final_state, const StepCallback& on_step) {
    std::vector<Tensor*> params;
    model.for_each_parameter([&](const std::string&, Tensor& t) {
        t.set_requires_grad(true);
        t.zero_grad();
        params.push_back(&t);
    });
    AdamState adam = make_adam_state(params);
    const std::size_t total = planned_steps(plan, dataset_size);
    Rng root(plan.seed);
    Rng dropout_rng = root.fork(kDropoutStream);
    const std::uint64_t shuffle_seed = root.fork(kShuffleStream).next();
    LrSchedule schedule{plan.base_lr, plan.warmup_ratio, std::max<std::size_t>(total, 1)};

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
        for (const auto& batch : batch_iter(dataset_size, plan.batch_size, true, shuffle_seed + epoch)) {
            const double lambda = lambda_for_update(step, total);
            Tape tape;
            std::optional<Var> batch_loss;
            for (std::size_t index : batch) {
                Var l = example_loss(tape, index, lambda, dropout_rng);
                batch_loss = batch_loss ? add(*batch_loss, l) : l;
            }
            Var loss = scale(*batch_loss, 1.0 / static_cast<double>(batch.size()));
            tape.backward(loss);
            const double lr = lr_at(schedule, step + 1);
            adam_step(params, adam, lr);
            for (Tensor* t : params) t->zero_grad();
            if (on_step) on_step({step, loss.item(), lr, lambda});
            ++step;
        }
    }
    for (Tensor* t : params) t->set_requires_grad(false);
    if (final_state) *final_state = std::move(adam);
}

}  // namespace

CrossModel train_teacher(const TrainPlan& plan, const PairDataset& data, const Vocab& vocab, AdamState* final_state,
                         const StepCallback& on_step) {
    plan.validate();
    check_task(data, plan.task);
    if (data.pairs.empty()) throw DataError("training set is empty");
    Rng init = Rng(plan.seed).fork(kInitStream);
    CrossModel model(vocab, plan.encoder, plan.task, plan.num_classes, init);
    const auto encoded = encode_pairs(data, vocab);
    std::vector<TokenInput> inputs;
    inputs.reserve(encoded.size());
    for (const auto& p : encoded) inputs.push_back(build_cross_input(p.a, p.b, plan.encoder.max_seq_len));

    run_training(
        model, plan, data.size(),
        [&](Tape& tape, std::size_t i, double, Rng& rng) {
            Var logits = model.logits(tape, inputs[i], true, &rng);
            if (plan.task == TaskKind::Classification) return cross_entropy(*data.pairs[i].label, log_softmax(logits, 1));
            return mse_loss(tanh(logits), score_to_cosine(*data.pairs[i].score, plan.max_score));
        },
        final_state, on_step);
    return model;
}

TeacherCache cache_teachers(std::span<const CrossModel* const> teachers, std::span<const std::string> teacher_ids,
                            const PairDataset& data) {
    if (teachers.empty()) throw UsageError("no teachers given");
    if (teacher_ids.size() != teachers.size()) throw UsageError("one id per teacher required");
    const std::size_t outputs = teachers[0]->num_outputs();
    for (const CrossModel* t : teachers) {
        if (t->num_outputs() != outputs || t->task() != teachers[0]->task()) {
            throw DataError("teachers disagree on task or number of outputs");
        }
        check_task(data, t->task());
    }
    TeacherCache cache;
    cache.fingerprint = data.fingerprint;
    cache.teacher_ids.assign(teacher_ids.begin(), teacher_ids.end());
    cache.num_outputs = outputs;
    cache.count = data.size();
    cache.values.reserve(cache.count * teachers.size() * outputs);
    for (const auto& pair : data.pairs)
        for (const CrossModel* t : teachers) {
            const auto pred = teacher_predict(*t, pair);
            cache.values.insert(cache.values.end(), pred.begin(), pred.end());
        }
    cache.validate();
    return cache;
}

SiameseModel train_student(const TrainPlan& plan, const PairDataset& data, const Vocab& vocab,
                           const TeacherCache* cache, AdamState* final_state, const StepCallback& on_step) {
    plan.validate();
    check_task(data, plan.task);
    if (data.pairs.empty()) throw DataError("training set is empty");
    const bool uses_teachers = plan.mode != ScheduleMode::HardOnly;
    const std::size_t outputs = plan.task == TaskKind::Classification ? plan.num_classes : 1;
    if (uses_teachers) {
        if (!cache) throw UsageError(std::string("mode '") + std::string(to_string(plan.mode)) + "' needs teacher caches");
        cache->check_matches(data);
        if (cache->num_outputs != outputs) {
            throw DataError("teacher cache has " + std::to_string(cache->num_outputs) + " outputs, student expects " +
                            std::to_string(outputs));
        }
    }

    Rng init = Rng(plan.seed).fork(kInitStream);
    SiameseModel model(vocab, plan.encoder, plan.pooling, plan.task, plan.num_classes, init);
    const auto encoded = encode_pairs(data, vocab);

    // Per-example teacher distributions, materialized once.
    std::vector<std::vector<Distribution>> soft;
    if (uses_teachers) {
        soft.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            for (std::size_t k = 0; k < cache->num_teachers(); ++k) {
                auto q = cache->prediction(i, k);
                soft[i].emplace_back(q.begin(), q.end());
            }
    }
    const double teacher_weight = plan.aggregation == TeacherAggregation::Mean && uses_teachers
                                      ? 1.0 / static_cast<double>(cache->num_teachers())
                                      : 1.0;

    run_training(
        model, plan, data.size(),
        [&](Tape& tape, std::size_t i, double lambda, Rng& rng) -> Var {
            const auto& pair = data.pairs[i];
            if (plan.task == TaskKind::Classification) {
                Var lp = model.log_probs(tape, encoded[i].a, encoded[i].b, true, &rng);
                switch (plan.mode) {
                    case ScheduleMode::HardOnly: return cross_entropy(*pair.label, lp);
                    case ScheduleMode::Anneal: return distill_loss(*pair.label, soft[i], lp, lambda, plan.aggregation);
                    case ScheduleMode::Weight: return weighted_loss(*pair.label, soft[i], lp, plan.alpha, plan.aggregation);
                }
            }
            Var cos = model.similarity(tape, encoded[i].a, encoded[i].b, true, &rng);
            const double gold = score_to_cosine(*pair.score, plan.max_score);
            if (plan.mode == ScheduleMode::HardOnly) return mse_loss(cos, gold);
            std::optional<Var> soft_loss;
            for (const auto& q : soft[i]) {
                const double target = plan.mode == ScheduleMode::Anneal ? regression_distill_target(gold, q[0], lambda)
                                                                        : q[0];
                Var term = mse_loss(cos, target);
                soft_loss = soft_loss ? add(*soft_loss, term) : term;
            }
            Var teachers_term = scale(*soft_loss, teacher_weight);
            if (plan.mode == ScheduleMode::Anneal) return teachers_term;
            return add(scale(teachers_term, plan.alpha), scale(mse_loss(cos, gold), 1.0 - plan.alpha));
        },
        final_state, on_step);
    return model;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

std::size_t argmax(std::span<const double> p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

std::vector<std::size_t> gold_labels(const PairDataset& data) {
    std::vector<std::size_t> out;
    out.reserve(data.size());
    for (const auto& p : data.pairs) out.push_back(p.label.value());
    return out;
}

}  // namespace

std::vector<std::size_t> predict_labels(const SiameseModel& model, const PairDataset& data) {
    std::vector<std::size_t> out;
    out.reserve(data.size());
    for (const auto& p : data.pairs) out.push_back(argmax(siamese_forward(model, p)));
    return out;
}

std::vector<std::size_t> predict_labels(const CrossModel& model, const PairDataset& data) {
    std::vector<std::size_t> out;
    out.reserve(data.size());
    for (const auto& p : data.pairs) out.push_back(argmax(cross_forward(model, p)));
    return out;
}

EvalReport evaluate(const SiameseModel& model, const PairDataset& data, std::uint64_t seed,
                    std::string config_fingerprint) {
    if (data.pairs.empty()) throw DataError("evaluation set is empty");
    if (data.task == TaskKind::Regression) {
        return eval_sts([&](const std::string& s) { return siamese_embed(model, s); }, data, seed,
                        std::move(config_fingerprint));
    }
    if (model.task() != TaskKind::Classification) {
        throw DataError("task-kind mismatch: regression model cannot be evaluated on classification data");
    }
    return EvalReport{"accuracy", accuracy(predict_labels(model, data), gold_labels(data)), data.size(), seed,
                      std::move(config_fingerprint)};
}

EvalReport evaluate(const CrossModel& model, const PairDataset& data, std::uint64_t seed,
                    std::string config_fingerprint) {
    if (data.pairs.empty()) throw DataError("evaluation set is empty");
    if (model.task() != data.task) {
        throw DataError(std::string("task-kind mismatch: ") + std::string(to_string(model.task())) +
                        " cross-encoder cannot be evaluated on " + std::string(to_string(data.task)) + " data");
    }
    if (data.task == TaskKind::Classification) {
        return EvalReport{"accuracy", accuracy(predict_labels(model, data), gold_labels(data)), data.size(), seed,
                          std::move(config_fingerprint)};
    }
    std::vector<double> predicted, gold;
    for (const auto& p : data.pairs) {
        predicted.push_back(teacher_predict(model, p)[0]);
        gold.push_back(*p.score);
    }
    return EvalReport{"spearman", spearman(predicted, gold), data.size(), seed, std::move(config_fingerprint)};
}

// ---------------------------------------------------------------------------
// gradient checking

bool GradcheckReport::passed() const {
    if (entries.empty()) return false;
    for (const auto& e : entries)
        if (!e.passed) return false;
    return true;
}

GradcheckReport run_gradcheck(std::span<const LossPath> paths, double eps, double threshold, std::uint64_t seed,
                              std::size_t coords_per_tensor) {
    GradcheckReport report;
    report.eps = eps;
    report.threshold = threshold;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const LossPath& path = paths[i];
        GradcheckEntry entry;
        entry.path = path.name;
        try {
            const auto r = grad_check_params(path.loss, path.params, path.param_names, eps, coords_per_tensor,
                                             seed * 1000003ULL + i);
            entry.max_rel_error = r.max_rel_error;
            entry.coordinates = r.coordinates;
            entry.worst = r.worst;
            entry.flat_abs_error = r.max_flat_abs_error;
            entry.flat_coordinates = r.flat_coordinates;
            entry.passed = r.coordinates > 0 && r.max_rel_error < threshold && r.max_flat_abs_error < report.flat_tolerance;
        } catch (const NumericalError& e) {
            entry.max_rel_error = INFINITY;
            entry.worst = e.what();
            entry.passed = false;
        }
        for (Tensor* t : path.params) t->set_requires_grad(false);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

namespace {

template <typename Model>
void collect(Model& model, std::vector<Tensor*>& params, std::vector<std::string>& names) {
    model.for_each_parameter([&](const std::string& name, Tensor& t) {
        params.push_back(&t);
        names.push_back(name);
    });
}

Distribution random_distribution(std::size_t n, Rng& rng) {
    Distribution d(n);
    double total = 0.0;
    for (auto& v : d) total += (v = 0.1 + rng.uniform());
    for (auto& v : d) v /= total;
    return d;
}

std::string format_weight(const char* prefix, double w) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%g", prefix, w);
    return buf;
}

}  // namespace

GradcheckReport gradcheck(const EncoderConfig& config, std::uint64_t seed, double eps, double threshold) {
    config.validate();
    Rng rng(seed);
    const std::size_t words = std::min<std::size_t>(config.vocab_size - 4, 40);
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < words; ++i) tokens.push_back("w" + std::to_string(i));
    const Vocab vocab = Vocab::from_tokens(tokens);

    // Two pairs with distinct sentences, so |u - v| stays away from its kink.
    struct Example {
        std::vector<std::int64_t> a, b;
        std::size_t label;
        double target;
        std::vector<Distribution> teachers;
    };
    std::vector<Example> batch(2);
    const std::size_t max_words = std::max<std::size_t>(1, std::min<std::size_t>(6, (config.max_seq_len - 3) / 2));
    for (auto& ex : batch) {
        const std::size_t la = 1 + rng.below(max_words), lb = 1 + rng.below(max_words);
        for (std::size_t i = 0; i < la; ++i) ex.a.push_back(4 + static_cast<std::int64_t>(rng.below(words)));
        for (std::size_t i = 0; i < lb; ++i) ex.b.push_back(4 + static_cast<std::int64_t>(rng.below(words)));
        if (ex.a == ex.b) ex.b.push_back(4);
        ex.label = rng.below(kNumNliClasses);
        ex.target = 2.0 * rng.uniform() - 1.0;
        ex.teachers = {random_distribution(kNumNliClasses, rng), random_distribution(kNumNliClasses, rng)};
    }

    Rng init = Rng(seed).fork(kInitStream);
    SiameseModel student(vocab, config, Pooling::Mean, TaskKind::Classification, kNumNliClasses, init);
    CrossModel teacher(vocab, config, TaskKind::Classification, kNumNliClasses, init);
    SiameseModel regressor(vocab, config, Pooling::Mean, TaskKind::Regression, 1, init);
    const std::uint64_t dropout_seed = init.next();

    std::vector<Tensor*> student_params, teacher_params, regressor_params;
    std::vector<std::string> student_names, teacher_names, regressor_names;
    collect(student, student_params, student_names);
    collect(teacher, teacher_params, teacher_names);
    collect(regressor, regressor_params, regressor_names);

    // Dropout stays on; the generator is re-seeded per evaluation so every
    // finite-difference probe sees the same masks.
    auto student_path = [&](std::string name, std::function<Var(const Example&, Var)> per_example) {
        return LossPath{std::move(name),
                        [&, per_example](Tape& tape) {
                            Rng drop(dropout_seed);
                            std::optional<Var> total;
                            for (const auto& ex : batch) {
                                Var l = per_example(ex, student.log_probs(tape, ex.a, ex.b, true, &drop));
                                total = total ? add(*total, l) : l;
                            }
                            return scale(*total, 1.0 / static_cast<double>(batch.size()));
                        },
                        student_params, student_names};
    };

    std::vector<LossPath> paths;
    paths.push_back(student_path("siamese_ce", [](const Example& ex, Var lp) { return cross_entropy(ex.label, lp); }));
    paths.push_back(LossPath{"teacher_ce",
                             [&](Tape& tape) {
                                 Rng drop(dropout_seed);
                                 std::optional<Var> total;
                                 for (const auto& ex : batch) {
                                     const auto in = build_cross_input(ex.a, ex.b, config.max_seq_len);
                                     Var l = cross_entropy(ex.label, log_softmax(teacher.logits(tape, in, true, &drop), 1));
                                     total = total ? add(*total, l) : l;
                                 }
                                 return scale(*total, 1.0 / static_cast<double>(batch.size()));
                             },
                             teacher_params, teacher_names});
    for (double lambda : {0.0, 0.5, 1.0}) {
        paths.push_back(student_path(format_weight("distill_lambda_", lambda), [lambda](const Example& ex, Var lp) {
            return distill_loss(ex.label, ex.teachers, lp, lambda);
        }));
    }
    for (double alpha : {0.0, 0.5, 1.0}) {
        paths.push_back(student_path(format_weight("weighted_alpha_", alpha), [alpha](const Example& ex, Var lp) {
            return weighted_loss(ex.label, ex.teachers, lp, alpha);
        }));
    }
    paths.push_back(LossPath{"cosine_mse",
                             [&](Tape& tape) {
                                 Rng drop(dropout_seed);
                                 std::optional<Var> total;
                                 for (const auto& ex : batch) {
                                     Var l = mse_loss(regressor.similarity(tape, ex.a, ex.b, true, &drop), ex.target);
                                     total = total ? add(*total, l) : l;
                                 }
                                 return scale(*total, 1.0 / static_cast<double>(batch.size()));
                             },
                             regressor_params, regressor_names});
    return run_gradcheck(paths, eps, threshold, seed);
}

// ---------------------------------------------------------------------------
// alpha sweep

std::vector<SweepRow> alpha_sweep(const TrainPlan& base, const PairDataset& train, const Vocab& vocab,
                                  const TeacherCache& cache, const PairDataset& eval_sts_data,
                                  std::span<const double> alphas, std::span<const std::uint64_t> seeds) {
    if (alphas.size() < 2) throw UsageError("alpha sweep needs at least two alpha values");
    if (seeds.empty()) throw UsageError("alpha sweep needs at least one seed");
    for (double a : alphas)
        if (!(a >= 0.0 && a <= 1.0)) throw UsageError("alpha values must lie in [0, 1]");
    if (eval_sts_data.task != TaskKind::Regression) {
        throw DataError("task-kind mismatch: alpha sweep scores students on regression (STS) data");
    }
    std::vector<SweepRow> rows;
    auto run_row = [&](SweepRow row, ScheduleMode mode, double alpha) {
        for (auto seed : seeds) {
            TrainPlan plan = base;
            plan.seed = seed;
            plan.mode = mode;
            plan.alpha = alpha;
            const SiameseModel student = train_student(plan, train, vocab, &cache);
            row.per_seed.push_back(evaluate(student, eval_sts_data, seed).value);
        }
        row.summary = summarize(row.per_seed);
        rows.push_back(std::move(row));
    };
    for (double a : alphas) run_row(SweepRow{format_weight("alpha=", a), a, {}, {}}, ScheduleMode::Weight, a);
    run_row(SweepRow{"anneal", -1.0, {}, {}}, ScheduleMode::Anneal, base.alpha);
    return rows;
}

std::string format_sweep_table(std::span<const SweepRow> rows) {
    std::string out = "strategy\tmean_spearman\tsd\tseeds\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%zu\n", r.label.c_str(), r.summary.mean, r.summary.stddev,
                      r.per_seed.size());
        out += buf;
    }
    return out;
}

}  // namespace dvsm
