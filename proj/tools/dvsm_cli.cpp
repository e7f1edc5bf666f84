// Command-line front end. Talks to the library only through dvsm.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dvsm/dvsm.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
    dvsm_status status;
};

void check(dvsm_status s) {
    if (s != DVSM_OK) {
        std::fprintf(stderr, "error: %s\n", dvsm_last_error());
        throw Failure{s};
    }
}

[[noreturn]] void usage_error(const std::string& message) {
    std::fprintf(stderr, "error: %s\n", message.c_str());
    throw Failure{DVSM_USAGE_ERROR};
}

struct PlanDeleter {
    void operator()(dvsm_plan* p) const { dvsm_plan_free(p); }
};
struct ModelDeleter {
    void operator()(dvsm_model* m) const { dvsm_model_free(m); }
};
using PlanPtr = std::unique_ptr<dvsm_plan, PlanDeleter>;
using ModelPtr = std::unique_ptr<dvsm_model, ModelDeleter>;

std::string take(char* s) {
    std::string out = s ? s : "";
    dvsm_string_free(s);
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) usage_error("cannot write " + path.string());
}

void make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) usage_error("cannot create " + dir + ": " + ec.message());
}

// Flags shared by the training verbs. Plan file first, then explicit flags,
// then --set overrides.
struct PlanFlags {
    std::string plan_path;
    std::string mode;
    std::string alpha;
    std::string seed;
    std::vector<std::string> teachers;
    std::vector<std::string> overrides;

    void attach(CLI::App* cmd, bool with_student_flags) {
        cmd->add_option("--plan", plan_path, "training plan (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "seed for initialization, dropout and shuffling");
        cmd->add_option("--set", overrides, "plan override key=value (repeatable)");
        if (with_student_flags) {
            cmd->add_option("--mode", mode, "hard, anneal or weight")
                ->check(CLI::IsMember({"hard", "anneal", "weight"}));
            cmd->add_option("--alpha", alpha, "soft-target weight for --mode weight");
            cmd->add_option("--teachers", teachers, "teacher cache files")->delimiter(',');
        }
    }

    PlanPtr build() const {
        dvsm_plan* raw = nullptr;
        check(plan_path.empty() ? dvsm_plan_new(&raw) : dvsm_plan_load(plan_path.c_str(), &raw));
        PlanPtr plan(raw);
        auto set = [&](const std::string& key, const std::string& value) {
            check(dvsm_plan_set(plan.get(), key.c_str(), value.c_str()));
        };
        if (!seed.empty()) set("seed", seed);
        if (!mode.empty()) set("mode", mode);
        if (!alpha.empty()) set("alpha", alpha);
        if (!teachers.empty()) set("teachers", join(teachers));
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) usage_error("--set expects key=value, got '" + o + "'");
            set(o.substr(0, eq), o.substr(eq + 1));
        }
        return plan;
    }
};

class StepLog {
public:
    explicit StepLog(const fs::path& path) : out_(path, std::ios::binary) {
        if (!out_) usage_error("cannot write " + path.string());
        out_ << "step\tloss\tlr\tlambda\n";
    }

    static void record(void* self, size_t step, double loss, double lr, double lambda) {
        char line[128];
        std::snprintf(line, sizeof line, "%zu\t%.17g\t%.17g\t%.17g\n", step, loss, lr, lambda);
        static_cast<StepLog*>(self)->out_ << line;
    }

private:
    std::ofstream out_;
};

std::string plan_field(const dvsm_plan* plan, const char* key) {
    char* value = nullptr;
    check(dvsm_plan_get(plan, key, &value));
    return take(value);
}

void evaluate_into(const dvsm_model* model, const std::string& data, const std::string& task,
                   const dvsm_plan* plan, const fs::path& log) {
    char* fp = nullptr;
    check(dvsm_plan_fingerprint(plan, &fp));
    const std::string fingerprint = take(fp);
    const std::uint64_t seed = std::stoull(plan_field(plan, "seed"));
    char* report = nullptr;
    check(dvsm_evaluate(model, data.c_str(), task.c_str(), seed, fingerprint.c_str(), log.string().c_str(), nullptr,
                        &report));
    std::printf("%s\n", take(report).c_str());
}

// Writes the plan echo, per-step log, checkpoint and evaluation report for one training run.
template <typename TrainFn>
void run_training(TrainFn train, const PlanFlags& flags, const std::string& data, const std::string& vocab,
                  const std::string& out_dir, const std::string& eval_data, const std::string& eval_task) {
    PlanPtr plan = flags.build();
    check(dvsm_plan_set(plan.get(), "output_dir", out_dir.c_str()));
    make_dir(out_dir);
    char* json = nullptr;
    check(dvsm_plan_to_json(plan.get(), &json));
    write_text(fs::path(out_dir) / "plan.json", take(json));

    dvsm_model* raw = nullptr;
    {
        StepLog log(fs::path(out_dir) / "train_log.tsv");
        check(train(plan.get(), data.c_str(), vocab.c_str(), &StepLog::record, &log, &raw));
    }
    ModelPtr model(raw);
    const fs::path checkpoint = fs::path(out_dir) / "model.ckpt";
    check(dvsm_model_save(model.get(), checkpoint.string().c_str()));
    const std::string task = eval_task.empty() ? plan_field(plan.get(), "task") : eval_task;
    evaluate_into(model.get(), eval_data.empty() ? data : eval_data, task, plan.get(),
                  fs::path(out_dir) / "results.jsonl");
}

std::vector<double> parse_doubles(const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& s : items) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(s, &used));
            if (used != s.size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
            usage_error("not a number: '" + s + "'");
        }
    }
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::string>& items) {
    std::vector<std::uint64_t> out;
    for (const auto& s : items) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) usage_error("bad seed '" + s + "'");
        out.push_back(std::stoull(s));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-view distilled sentence matching"};
    app.require_subcommand(1);

    // gen-synthetic
    std::size_t num_pairs = 1000, vocab_size = 200;
    std::uint64_t gen_seed = 0;
    std::string task = "classification", out;
    auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic overlap-labeled pair file");
    gen->add_option("--num-pairs", num_pairs)->check(CLI::PositiveNumber);
    gen->add_option("--vocab-size", vocab_size);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--task", task)->check(CLI::IsMember({"classification", "regression", "nli", "sts"}));
    gen->add_option("--out", out, "output pair file")->required();

    // build-vocab
    std::vector<std::string> corpus;
    std::size_t min_freq = 1;
    auto* vocab_cmd = app.add_subcommand("build-vocab", "build a vocabulary from pair files");
    vocab_cmd->add_option("--data", corpus, "pair files")->required()->delimiter(',');
    vocab_cmd->add_option("--min-freq", min_freq);
    vocab_cmd->add_option("--out", out, "output vocabulary file")->required();

    // train-teacher / train-student
    PlanFlags teacher_flags, student_flags;
    std::string data, vocab, eval_data, eval_task;
    auto add_training = [&](const char* name, const char* help, PlanFlags& flags, bool student) {
        auto* cmd = app.add_subcommand(name, help);
        flags.attach(cmd, student);
        cmd->add_option("--data", data, "training pairs")->required()->check(CLI::ExistingFile);
        cmd->add_option("--vocab", vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out, "output directory")->required();
        cmd->add_option("--eval", eval_data, "pairs scored after training (default: training pairs)");
        cmd->add_option("--eval-task", eval_task, "task kind of --eval (default: the plan's)");
        return cmd;
    };
    auto* teacher_cmd = add_training("train-teacher", "train a cross-encoder on gold labels", teacher_flags, false);
    auto* student_cmd = add_training("train-student", "train a siamese student", student_flags, true);

    // cache-teachers
    std::vector<std::string> checkpoints;
    auto* cache_cmd = app.add_subcommand("cache-teachers", "run teachers over a data file once and cache outputs");
    cache_cmd->add_option("--checkpoint", checkpoints, "teacher checkpoints")->required()->delimiter(',');
    cache_cmd->add_option("--data", data, "pairs to label")->required();
    cache_cmd->add_option("--out", out, "output cache file")->required();

    // alpha-sweep
    PlanFlags sweep_flags;
    std::vector<std::string> alphas = {"0", "0.25", "0.5", "0.75", "1"}, seeds = {"0", "1", "2", "3", "4"};
    auto* sweep_cmd = app.add_subcommand("alpha-sweep", "compare loss weighting against annealing");
    sweep_flags.attach(sweep_cmd, true);
    sweep_cmd->add_option("--data", data, "training pairs")->required();
    sweep_cmd->add_option("--vocab", vocab, "vocabulary file")->required();
    sweep_cmd->add_option("--eval", eval_data, "regression pairs for Spearman")->required();
    sweep_cmd->add_option("--alphas", alphas)->delimiter(',');
    sweep_cmd->add_option("--seeds", seeds)->delimiter(',');
    sweep_cmd->add_option("--out", out, "output directory")->required();

    // evaluate
    std::string checkpoint;
    std::uint64_t eval_seed = 0;
    auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a pair file");
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--data", data)->required();
    eval_cmd->add_option("--task", task)->check(CLI::IsMember({"classification", "regression", "nli", "sts"}));
    eval_cmd->add_option("--seed", eval_seed);
    eval_cmd->add_option("--out", out, "directory whose results.jsonl receives the report");

    // gradcheck
    PlanFlags grad_flags;
    double eps = 1e-5, threshold = 1e-4;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss path");
    grad_flags.attach(grad_cmd, false);
    grad_cmd->add_option("--eps", eps);
    grad_cmd->add_option("--threshold", threshold);
    grad_cmd->add_option("--out", out, "directory for gradcheck.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return DVSM_USAGE_ERROR;
    }

    try {
        if (*gen) {
            check(dvsm_gen_synthetic(num_pairs, vocab_size, gen_seed, task.c_str(), out.c_str()));
        } else if (*vocab_cmd) {
            std::vector<const char*> paths;
            for (const auto& p : corpus) paths.push_back(p.c_str());
            check(dvsm_build_vocab(paths.data(), paths.size(), min_freq, out.c_str()));
        } else if (*teacher_cmd) {
            run_training(dvsm_train_teacher, teacher_flags, data, vocab, out, eval_data, eval_task);
        } else if (*student_cmd) {
            run_training(dvsm_train_student, student_flags, data, vocab, out, eval_data, eval_task);
        } else if (*cache_cmd) {
            std::vector<const char*> paths;
            for (const auto& p : checkpoints) paths.push_back(p.c_str());
            check(dvsm_cache_teachers(paths.data(), paths.size(), data.c_str(), out.c_str()));
        } else if (*sweep_cmd) {
            PlanPtr plan = sweep_flags.build();
            check(dvsm_plan_set(plan.get(), "output_dir", out.c_str()));
            make_dir(out);
            char* json = nullptr;
            check(dvsm_plan_to_json(plan.get(), &json));
            write_text(fs::path(out) / "plan.json", take(json));
            const auto a = parse_doubles(alphas);
            const auto s = parse_seeds(seeds);
            dvsm_sweep* sweep = nullptr;
            check(dvsm_alpha_sweep(plan.get(), data.c_str(), vocab.c_str(), eval_data.c_str(), a.data(), a.size(),
                                   s.data(), s.size(), &sweep));
            char* table = nullptr;
            const dvsm_status st = dvsm_sweep_table(sweep, &table);
            dvsm_sweep_free(sweep);
            check(st);
            const std::string text = take(table);
            write_text(fs::path(out) / "sweep.tsv", text);
            std::fputs(text.c_str(), stdout);
        } else if (*eval_cmd) {
            dvsm_model* raw = nullptr;
            check(dvsm_model_load(checkpoint.c_str(), &raw));
            ModelPtr model(raw);
            std::string log;
            if (!out.empty()) {
                make_dir(out);
                log = (fs::path(out) / "results.jsonl").string();
            }
            char* report = nullptr;
            check(dvsm_evaluate(model.get(), data.c_str(), task.c_str(), eval_seed, nullptr,
                                log.empty() ? nullptr : log.c_str(), nullptr, &report));
            std::printf("%s\n", take(report).c_str());
        } else if (*grad_cmd) {
            PlanPtr plan = grad_flags.build();
            dvsm_gradcheck_report* report = nullptr;
            check(dvsm_gradcheck(plan.get(), std::stoull(plan_field(plan.get(), "seed")), eps, threshold, &report));
            const bool passed = dvsm_gradcheck_passed(report) != 0;
            for (std::size_t i = 0; i < dvsm_gradcheck_count(report); ++i) {
                std::printf("%-20s %.3e\n", dvsm_gradcheck_path(report, i), dvsm_gradcheck_error(report, i));
            }
            char* json = nullptr;
            const dvsm_status st = dvsm_gradcheck_to_json(report, &json);
            dvsm_gradcheck_free(report);
            check(st);
            const std::string text = take(json);
            if (!out.empty()) {
                make_dir(out);
                write_text(fs::path(out) / "gradcheck.json", text);
            }
            std::printf("gradcheck %s\n", passed ? "passed" : "FAILED");
            if (!passed) return DVSM_NUMERIC_ERROR;
        }
    } catch (const Failure& f) {
        return f.status;
    }
    return DVSM_OK;
}
