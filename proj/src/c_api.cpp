#include "dvsm/dvsm.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "dvsm/checkpoint.hpp"
#include "dvsm/error.hpp"
#include "dvsm/train.hpp"

struct dvsm_plan {
    dvsm::TrainPlan plan;
};

struct dvsm_model {
    dvsm::Checkpoint checkpoint;
};

struct dvsm_gradcheck_report {
    dvsm::GradcheckReport report;
};

struct dvsm_sweep {
    std::vector<dvsm::SweepRow> rows;
};

namespace {

thread_local std::string last_error;

template <typename Fn>
dvsm_status guarded(Fn&& fn) {
    try {
        fn();
        last_error.clear();
        return DVSM_OK;
    } catch (const dvsm::DataError& e) {
        last_error = e.what();
        return DVSM_DATA_ERROR;
    } catch (const dvsm::NumericalError& e) {
        last_error = e.what();
        return DVSM_NUMERIC_ERROR;
    } catch (const dvsm::UsageError& e) {
        last_error = e.what();
        return DVSM_USAGE_ERROR;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return DVSM_USAGE_ERROR;
    } catch (const std::exception& e) {
        last_error = e.what();
        return DVSM_USAGE_ERROR;
    }
}

void require(const void* p, const char* what) {
    if (p == nullptr) throw dvsm::UsageError(std::string(what) + " must not be null");
}

char* copy_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

dvsm::StepCallback wrap(dvsm_step_fn fn, void* user) {
    if (!fn) return {};
    return [fn, user](const dvsm::StepRecord& r) { fn(user, r.step, r.loss, r.lr, r.lambda); };
}

// The vocabulary file decides the embedding table size.
dvsm::TrainPlan plan_for_vocab(const dvsm_plan* plan, const dvsm::Vocab& vocab) {
    dvsm::TrainPlan p = plan->plan;
    p.encoder.vocab_size = vocab.size();
    p.validate();
    return p;
}

dvsm::TeacherCache load_caches(const std::vector<std::string>& paths) {
    if (paths.empty()) throw dvsm::UsageError("no teacher caches given");
    std::vector<dvsm::TeacherCache> caches;
    for (const auto& p : paths) caches.push_back(dvsm::TeacherCache::load(p));
    return caches.size() == 1 ? std::move(caches[0]) : dvsm::TeacherCache::merge(caches);
}

void write_out(const std::vector<double>& values, double* out, std::size_t capacity, std::size_t* count) {
    if (count) *count = values.size();
    if (out) std::copy_n(values.begin(), std::min(capacity, values.size()), out);
}

}  // namespace

extern "C" {

const char* dvsm_last_error(void) { return last_error.c_str(); }

void dvsm_string_free(char* s) { delete[] s; }

dvsm_status dvsm_plan_new(dvsm_plan** out) {
    return guarded([&] {
        require(out, "out");
        *out = new dvsm_plan{};
    });
}

dvsm_status dvsm_plan_load(const char* path, dvsm_plan** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new dvsm_plan{dvsm::TrainPlan::load(path)};
    });
}

dvsm_status dvsm_plan_set(dvsm_plan* plan, const char* key, const char* value) {
    return guarded([&] {
        require(plan, "plan");
        require(key, "key");
        require(value, "value");
        dvsm::TrainPlan updated = plan->plan;
        updated.set(key, value);
        plan->plan = std::move(updated);
    });
}

dvsm_status dvsm_plan_get(const dvsm_plan* plan, const char* key, char** out) {
    return guarded([&] {
        require(plan, "plan");
        require(key, "key");
        require(out, "out");
        const nlohmann::json j = plan->plan.to_json();
        const nlohmann::json* field = nullptr;
        if (j.contains(key)) field = &j[key];
        else if (j["encoder"].contains(key)) field = &j["encoder"][key];
        else throw dvsm::UsageError(std::string("unknown plan key '") + key + "'");
        *out = copy_string(field->is_string() ? field->get<std::string>() : field->dump());
    });
}

dvsm_status dvsm_plan_to_json(const dvsm_plan* plan, char** out) {
    return guarded([&] {
        require(plan, "plan");
        require(out, "out");
        *out = copy_string(plan->plan.to_json().dump(2) + "\n");
    });
}

dvsm_status dvsm_plan_fingerprint(const dvsm_plan* plan, char** out) {
    return guarded([&] {
        require(plan, "plan");
        require(out, "out");
        *out = copy_string(plan->plan.fingerprint());
    });
}

void dvsm_plan_free(dvsm_plan* plan) { delete plan; }

dvsm_status dvsm_gen_synthetic(size_t num_pairs, size_t vocab_size, uint64_t seed, const char* task,
                               const char* out_path) {
    return guarded([&] {
        require(task, "task");
        require(out_path, "out_path");
        const auto pairs = dvsm::gen_synthetic(num_pairs, vocab_size, seed, dvsm::parse_task_kind(task));
        dvsm::write_pairs(out_path, pairs);
    });
}

dvsm_status dvsm_build_vocab(const char* const* corpus_paths, size_t num_paths, size_t min_freq,
                             const char* out_path) {
    return guarded([&] {
        require(out_path, "out_path");
        if (num_paths == 0) throw dvsm::UsageError("no corpus files given");
        require(corpus_paths, "corpus_paths");
        std::vector<std::filesystem::path> paths(corpus_paths, corpus_paths + num_paths);
        dvsm::Vocab::build(paths, min_freq).save(out_path);
    });
}

dvsm_status dvsm_train_teacher(const dvsm_plan* plan, const char* data_path, const char* vocab_path,
                               dvsm_step_fn on_step, void* user, dvsm_model** out) {
    return guarded([&] {
        require(plan, "plan");
        require(data_path, "data_path");
        require(vocab_path, "vocab_path");
        require(out, "out");
        const dvsm::Vocab vocab = dvsm::Vocab::load(vocab_path);
        const dvsm::TrainPlan p = plan_for_vocab(plan, vocab);
        const dvsm::PairDataset data = dvsm::load_pairs(data_path, p.task);
        dvsm::AdamState state;
        dvsm::CrossModel model = dvsm::train_teacher(p, data, vocab, &state, wrap(on_step, user));
        *out = new dvsm_model{dvsm::Checkpoint{std::move(model), std::move(state)}};
    });
}

dvsm_status dvsm_cache_teachers(const char* const* checkpoint_paths, size_t num_teachers, const char* data_path,
                                const char* out_path) {
    return guarded([&] {
        require(data_path, "data_path");
        require(out_path, "out_path");
        if (num_teachers == 0) throw dvsm::UsageError("no teacher checkpoints given");
        require(checkpoint_paths, "checkpoint_paths");
        std::vector<dvsm::Checkpoint> loaded;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < num_teachers; ++i) {
            loaded.push_back(dvsm::load_checkpoint(checkpoint_paths[i]));
            if (!loaded.back().is_cross()) {
                throw dvsm::DataError(std::string(checkpoint_paths[i]) + ": not a cross-encoder checkpoint");
            }
            ids.push_back(std::filesystem::path(checkpoint_paths[i]).stem().string());
        }
        std::vector<const dvsm::CrossModel*> teachers;
        for (const auto& c : loaded) teachers.push_back(&std::get<dvsm::CrossModel>(c.model));
        const dvsm::PairDataset data = dvsm::load_pairs(data_path, teachers[0]->task());
        dvsm::cache_teachers(teachers, ids, data).save(out_path);
    });
}

dvsm_status dvsm_train_student(const dvsm_plan* plan, const char* data_path, const char* vocab_path,
                               dvsm_step_fn on_step, void* user, dvsm_model** out) {
    return guarded([&] {
        require(plan, "plan");
        require(data_path, "data_path");
        require(vocab_path, "vocab_path");
        require(out, "out");
        const dvsm::Vocab vocab = dvsm::Vocab::load(vocab_path);
        const dvsm::TrainPlan p = plan_for_vocab(plan, vocab);
        const dvsm::PairDataset data = dvsm::load_pairs(data_path, p.task);
        std::optional<dvsm::TeacherCache> cache;
        if (p.mode != dvsm::ScheduleMode::HardOnly) cache = load_caches(p.teachers);
        dvsm::AdamState state;
        dvsm::SiameseModel model =
            dvsm::train_student(p, data, vocab, cache ? &*cache : nullptr, &state, wrap(on_step, user));
        *out = new dvsm_model{dvsm::Checkpoint{std::move(model), std::move(state)}};
    });
}

dvsm_status dvsm_model_load(const char* path, dvsm_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new dvsm_model{dvsm::load_checkpoint(path)};
    });
}

dvsm_status dvsm_model_save(const dvsm_model* model, const char* path) {
    return guarded([&] {
        require(model, "model");
        require(path, "path");
        const dvsm::AdamState* state = model->checkpoint.optimizer ? &*model->checkpoint.optimizer : nullptr;
        std::visit([&](const auto& m) { dvsm::save_checkpoint(path, m, state); }, model->checkpoint.model);
    });
}

void dvsm_model_free(dvsm_model* model) { delete model; }

int dvsm_model_is_cross(const dvsm_model* model) { return model && model->checkpoint.is_cross() ? 1 : 0; }

size_t dvsm_model_num_outputs(const dvsm_model* model) {
    if (!model) return 0;
    if (model->checkpoint.is_cross()) return std::get<dvsm::CrossModel>(model->checkpoint.model).num_outputs();
    const auto& s = std::get<dvsm::SiameseModel>(model->checkpoint.model);
    return s.task() == dvsm::TaskKind::Classification ? s.num_classes() : 1;
}

namespace {

const dvsm::SiameseModel& siamese_of(const dvsm_model* model, const char* op) {
    require(model, "model");
    if (model->checkpoint.is_cross()) throw dvsm::UsageError(std::string(op) + " needs a siamese model");
    return std::get<dvsm::SiameseModel>(model->checkpoint.model);
}

}  // namespace

dvsm_status dvsm_model_embed(const dvsm_model* model, const char* sentence, double* out, size_t capacity,
                             size_t* dim) {
    return guarded([&] {
        require(sentence, "sentence");
        write_out(dvsm::siamese_embed(siamese_of(model, "embed"), sentence), out, capacity, dim);
    });
}

dvsm_status dvsm_model_predict(const dvsm_model* model, const char* sentence_a, const char* sentence_b,
                               double* out, size_t capacity, size_t* count) {
    return guarded([&] {
        require(model, "model");
        require(sentence_a, "sentence_a");
        require(sentence_b, "sentence_b");
        dvsm::LabeledPair pair{sentence_a, sentence_b, std::nullopt, std::nullopt};
        std::vector<double> values;
        if (model->checkpoint.is_cross()) {
            values = dvsm::teacher_predict(std::get<dvsm::CrossModel>(model->checkpoint.model), pair);
        } else {
            const auto& s = std::get<dvsm::SiameseModel>(model->checkpoint.model);
            values = s.task() == dvsm::TaskKind::Classification
                         ? dvsm::siamese_forward(s, pair)
                         : std::vector<double>{dvsm::cosine_score(dvsm::siamese_embed(s, sentence_a),
                                                                  dvsm::siamese_embed(s, sentence_b))};
        }
        write_out(values, out, capacity, count);
    });
}

dvsm_status dvsm_model_similarity(const dvsm_model* model, const char* sentence_a, const char* sentence_b,
                                  double* out) {
    return guarded([&] {
        require(sentence_a, "sentence_a");
        require(sentence_b, "sentence_b");
        require(out, "out");
        const auto& s = siamese_of(model, "similarity");
        *out = dvsm::cosine_score(dvsm::siamese_embed(s, sentence_a), dvsm::siamese_embed(s, sentence_b));
    });
}

dvsm_status dvsm_evaluate(const dvsm_model* model, const char* data_path, const char* task, uint64_t seed,
                          const char* config_fingerprint, const char* log_path, double* value, char** report_json) {
    return guarded([&] {
        require(model, "model");
        require(data_path, "data_path");
        require(task, "task");
        const dvsm::PairDataset data = dvsm::load_pairs(data_path, dvsm::parse_task_kind(task));
        const std::string fp = config_fingerprint ? config_fingerprint : "";
        const dvsm::EvalReport report =
            std::visit([&](const auto& m) { return dvsm::evaluate(m, data, seed, fp); }, model->checkpoint.model);
        if (log_path) dvsm::append_report(log_path, report);
        if (value) *value = report.value;
        if (report_json) *report_json = copy_string(report.to_json_line());
    });
}

dvsm_status dvsm_gradcheck(const dvsm_plan* plan, uint64_t seed, double eps, double threshold,
                           dvsm_gradcheck_report** out) {
    return guarded([&] {
        require(plan, "plan");
        require(out, "out");
        *out = new dvsm_gradcheck_report{dvsm::gradcheck(plan->plan.encoder, seed, eps, threshold)};
    });
}

int dvsm_gradcheck_passed(const dvsm_gradcheck_report* report) { return report && report->report.passed() ? 1 : 0; }

size_t dvsm_gradcheck_count(const dvsm_gradcheck_report* report) { return report ? report->report.entries.size() : 0; }

const char* dvsm_gradcheck_path(const dvsm_gradcheck_report* report, size_t index) {
    if (!report || index >= report->report.entries.size()) return nullptr;
    return report->report.entries[index].path.c_str();
}

double dvsm_gradcheck_error(const dvsm_gradcheck_report* report, size_t index) {
    if (!report || index >= report->report.entries.size()) return -1.0;
    return report->report.entries[index].max_rel_error;
}

dvsm_status dvsm_gradcheck_to_json(const dvsm_gradcheck_report* report, char** out) {
    return guarded([&] {
        require(report, "report");
        require(out, "out");
        const auto& r = report->report;
        nlohmann::ordered_json j;
        j["passed"] = r.passed();
        j["eps"] = r.eps;
        j["threshold"] = r.threshold;
        j["flat_tolerance"] = r.flat_tolerance;
        j["entries"] = nlohmann::ordered_json::array();
        for (const auto& e : r.entries) {
            nlohmann::ordered_json row;
            row["path"] = e.path;
            row["passed"] = e.passed;
            row["max_rel_error"] = std::isfinite(e.max_rel_error) ? nlohmann::ordered_json(e.max_rel_error) : nullptr;
            row["coordinates"] = e.coordinates;
            row["worst"] = e.worst;
            row["flat_abs_error"] = e.flat_abs_error;
            row["flat_coordinates"] = e.flat_coordinates;
            j["entries"].push_back(std::move(row));
        }
        *out = copy_string(j.dump(2) + "\n");
    });
}

void dvsm_gradcheck_free(dvsm_gradcheck_report* report) { delete report; }

dvsm_status dvsm_alpha_sweep(const dvsm_plan* plan, const char* data_path, const char* vocab_path,
                             const char* eval_path, const double* alphas, size_t num_alphas, const uint64_t* seeds,
                             size_t num_seeds, dvsm_sweep** out) {
    return guarded([&] {
        require(plan, "plan");
        require(data_path, "data_path");
        require(vocab_path, "vocab_path");
        require(eval_path, "eval_path");
        require(out, "out");
        if (num_alphas > 0) require(alphas, "alphas");
        if (num_seeds > 0) require(seeds, "seeds");
        const dvsm::Vocab vocab = dvsm::Vocab::load(vocab_path);
        const dvsm::TrainPlan p = plan_for_vocab(plan, vocab);
        const dvsm::PairDataset train = dvsm::load_pairs(data_path, p.task);
        const dvsm::PairDataset eval = dvsm::load_pairs(eval_path, dvsm::TaskKind::Regression);
        const dvsm::TeacherCache cache = load_caches(p.teachers);
        *out = new dvsm_sweep{dvsm::alpha_sweep(p, train, vocab, cache, eval, {alphas, num_alphas},
                                                {seeds, num_seeds})};
    });
}

size_t dvsm_sweep_rows(const dvsm_sweep* sweep) { return sweep ? sweep->rows.size() : 0; }

const char* dvsm_sweep_label(const dvsm_sweep* sweep, size_t row) {
    if (!sweep || row >= sweep->rows.size()) return nullptr;
    return sweep->rows[row].label.c_str();
}

double dvsm_sweep_mean(const dvsm_sweep* sweep, size_t row) {
    if (!sweep || row >= sweep->rows.size()) return 0.0;
    return sweep->rows[row].summary.mean;
}

double dvsm_sweep_stddev(const dvsm_sweep* sweep, size_t row) {
    if (!sweep || row >= sweep->rows.size()) return 0.0;
    return sweep->rows[row].summary.stddev;
}

dvsm_status dvsm_sweep_table(const dvsm_sweep* sweep, char** out) {
    return guarded([&] {
        require(sweep, "sweep");
        require(out, "out");
        *out = copy_string(dvsm::format_sweep_table(sweep->rows));
    });
}

void dvsm_sweep_free(dvsm_sweep* sweep) { delete sweep; }

}  // extern "C"
