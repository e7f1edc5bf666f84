// Drives the dvsm binary end to end and pokes the C API directly.
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "doctest.h"
#include "dvsm/dvsm.h"
#include "tempdir.hpp"

namespace {

const std::string kTiny =
    " --set hidden_dim=8 --set num_layers=1 --set num_heads=2 --set ffn_dim=16 --set max_seq_len=24"
    " --set batch_size=8 --set epochs=1";

int run(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = std::string(DVSM_CLI) + " " + args + " >" + log + " 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Corpus {
    TempDir dir;
    std::string train = (dir / "train.tsv").string();
    std::string sts = (dir / "sts.tsv").string();
    std::string vocab = (dir / "vocab.txt").string();

    Corpus() {
        REQUIRE(run("gen-synthetic --num-pairs 60 --vocab-size 30 --seed 1 --out " + train) == 0);
        REQUIRE(run("gen-synthetic --num-pairs 30 --vocab-size 30 --seed 2 --task regression --out " + sts) == 0);
        REQUIRE(run("build-vocab --data " + train + "," + sts + " --out " + vocab) == 0);
    }

    std::string teacher(const std::string& name, int seed) {
        const std::string out = (dir / name).string();
        REQUIRE(run("train-teacher --data " + train + " --vocab " + vocab + " --out " + out + " --seed " +
                    std::to_string(seed) + kTiny) == 0);
        return out + "/model.ckpt";
    }
};

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run("") == 1);
    CHECK(run("no-such-verb") == 1);
    CHECK(run("gen-synthetic --num-pairs 10") == 1);
    Corpus c;
    CHECK(run("train-student --data " + c.train + " --vocab " + c.vocab + " --out " + (c.dir / "x").string() +
              " --set epochz=2") == 1);
    CHECK(run("train-student --data " + c.train + " --vocab " + c.vocab + " --out " + (c.dir / "x").string() +
              " --set epochs") == 1);
}

TEST_CASE("teacher, cache and annealed student pipeline") {
    Corpus c;
    const std::string t0 = c.teacher("t0", 0), t1 = c.teacher("t1", 1);
    const std::string cache = (c.dir / "teachers.cache").string();
    REQUIRE(run("cache-teachers --checkpoint " + t0 + "," + t1 + " --data " + c.train + " --out " + cache) == 0);

    const std::string student = " --data " + c.train + " --vocab " + c.vocab + " --mode anneal --teachers " + cache +
                                " --eval " + c.sts + " --eval-task regression" + kTiny;
    const auto a = c.dir / "a", b = c.dir / "b";
    REQUIRE(run("train-student --out " + a.string() + student) == 0);
    REQUIRE(run("train-student --out " + b.string() + student) == 0);

    CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
    CHECK(slurp(a / "results.jsonl") == slurp(b / "results.jsonl"));
    CHECK(slurp(a / "train_log.tsv") == slurp(b / "train_log.tsv"));
    CHECK(slurp(a / "plan.json").find("\"anneal\"") != std::string::npos);
    CHECK(slurp(a / "results.jsonl").find("\"spearman\"") != std::string::npos);

    const std::string eval = "evaluate --checkpoint " + (a / "model.ckpt").string() + " --data " + c.sts +
                             " --task regression --seed 4";
    REQUIRE(run(eval, (c.dir / "e1.txt").string()) == 0);
    REQUIRE(run(eval, (c.dir / "e2.txt").string()) == 0);
    CHECK(slurp(c.dir / "e1.txt") == slurp(c.dir / "e2.txt"));

    SUBCASE("regression scoring on classification data is a data error") {
        CHECK(run("evaluate --checkpoint " + (a / "model.ckpt").string() + " --data " + c.train +
                  " --task regression") == 2);
    }
    SUBCASE("editing the data after caching is rejected") {
        std::ofstream(c.train, std::ios::app) << "w1 w2\tw3 w4\tcontradiction\n";
        CHECK(run("train-student --out " + (c.dir / "stale").string() + student) == 2);
    }
    SUBCASE("a teacher checkpoint is not a cache") {
        CHECK(run("train-student --out " + (c.dir / "wrong").string() + " --data " + c.train + " --vocab " +
                  c.vocab + " --mode anneal --teachers " + t0 + kTiny) == 2);
    }
}

TEST_CASE("gradcheck verb passes and writes its report") {
    TempDir dir;
    CHECK(run("gradcheck --seed 2 --out " + dir.path.string()) == 0);
    const std::string json = slurp(dir / "gradcheck.json");
    CHECK(json.find("siamese_ce") != std::string::npos);
}

TEST_CASE("C API plans, models and errors") {
    dvsm_plan* plan = nullptr;
    REQUIRE(dvsm_plan_new(&plan) == DVSM_OK);
    CHECK(dvsm_plan_set(plan, "epochs", "7") == DVSM_OK);
    char* value = nullptr;
    REQUIRE(dvsm_plan_get(plan, "epochs", &value) == DVSM_OK);
    CHECK(std::string(value) == "7");
    dvsm_string_free(value);
    CHECK(dvsm_plan_set(plan, "epochs", "seven") == DVSM_USAGE_ERROR);
    CHECK(std::string(dvsm_last_error()).find("epochs") != std::string::npos);

    char* fp1 = nullptr;
    char* fp2 = nullptr;
    REQUIRE(dvsm_plan_fingerprint(plan, &fp1) == DVSM_OK);
    dvsm_plan_set(plan, "seed", "99");
    REQUIRE(dvsm_plan_fingerprint(plan, &fp2) == DVSM_OK);
    CHECK(std::string(fp1) != std::string(fp2));
    dvsm_string_free(fp1);
    dvsm_string_free(fp2);
    dvsm_plan_free(plan);

    dvsm_model* model = nullptr;
    CHECK(dvsm_model_load("/nonexistent/model.ckpt", &model) == DVSM_DATA_ERROR);
    CHECK(model == nullptr);
    CHECK(dvsm_plan_new(nullptr) == DVSM_USAGE_ERROR);

    Corpus c;
    const std::string t = c.teacher("t", 3);
    REQUIRE(dvsm_model_load(t.c_str(), &model) == DVSM_OK);
    CHECK(dvsm_model_is_cross(model) == 1);
    CHECK(dvsm_model_num_outputs(model) == 3);
    TempDir other;
    const std::string copy = (other / "copy.ckpt").string();
    REQUIRE(dvsm_model_save(model, copy.c_str()) == DVSM_OK);
    CHECK(slurp(copy) == slurp(t));
    dvsm_model_free(model);
}
