#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#ifndef MLDIST_CLI_PATH
#define MLDIST_CLI_PATH "mldist"
#endif
#ifndef MLDIST_FIXTURE_DIR
#define MLDIST_FIXTURE_DIR "tests/fixtures/mock60"
#endif

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MLDIST_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mldist_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

const fs::path kFixture = MLDIST_FIXTURE_DIR;

std::string common_args() {
    return " --corpus " + (kFixture / "corpus.jsonl").string() + " --label-space " +
           (kFixture / "label_space.json").string();
}

}  // namespace

TEST_CASE("trace resumes over existing output with zero new requests") {
    TempDir tmp;
    const auto out = tmp.path / "traces.jsonl";
    const std::string cmd = "trace" + common_args() + " --demos " +
                            (kFixture / "demos.jsonl").string() + " --replay " +
                            (kFixture / "scenario.jsonl").string() +
                            " --model mock-1 --k 10 --ratio 0.5 --seed 42 --out " + out.string();
    REQUIRE(run_cli(cmd) == 0);
    const std::string first = slurp(out);
    REQUIRE(run_cli(cmd) == 0);  // resume: nothing to collect
    CHECK(slurp(out) == first);
}

TEST_CASE("align resumes over existing output without duplicating rows") {
    TempDir tmp;
    const auto out = tmp.path / "dists.jsonl";
    const std::string cmd = "align --traces " + (kFixture / "golden" / "traces.jsonl").string() +
                            common_args() + " --replay " +
                            (kFixture / "scenario.jsonl").string() +
                            " --model mock-1 --methods hard,max,binary,binary_outcome --out " +
                            out.string();
    REQUIRE(run_cli(cmd) == 0);
    const std::string first = slurp(out);
    REQUIRE(run_cli(cmd) == 0);
    CHECK(slurp(out) == first);
}

TEST_CASE("trace over an empty scenario reports transport failure (exit 3)") {
    TempDir tmp;
    const auto empty_scenario = tmp.path / "empty.jsonl";
    std::ofstream(empty_scenario).close();
    const int code = run_cli("trace" + common_args() + " --demos " +
                             (kFixture / "demos.jsonl").string() + " --replay " +
                             empty_scenario.string() + " --model mock-1 --k 10 --seed 42 --out " +
                             (tmp.path / "traces.jsonl").string());
    CHECK(code == 3);
}

TEST_CASE("missing label-space file is a config error (exit 2)") {
    TempDir tmp;
    const int code = run_cli("trace --corpus " + (kFixture / "corpus.jsonl").string() +
                             " --label-space " + (tmp.path / "nope.json").string() +
                             " --replay " + (kFixture / "scenario.jsonl").string() +
                             " --out " + (tmp.path / "t.jsonl").string());
    CHECK(code == 2);
}

TEST_CASE("gateway methods without a gateway name the method (exit 2)") {
    TempDir tmp;
    const int code =
        run_cli("align" + common_args() + " --methods unary --out " +
                (tmp.path / "d.jsonl").string());
    CHECK(code == 2);
}

TEST_CASE("unknown align method is a config error") {
    TempDir tmp;
    // traces exist but the method name is bogus
    const auto traces = kFixture / "golden" / "traces.jsonl";
    const int code = run_cli("align --traces " + traces.string() + common_args() +
                             " --methods sideways --out " + (tmp.path / "d.jsonl").string());
    CHECK(code == 2);
}

TEST_CASE("eval with no joinable rows exits with the join code (exit 4)") {
    TempDir tmp;
    const auto dists = tmp.path / "dists.jsonl";
    {
        std::ofstream out(dists);
        nlohmann::json j;
        j["schema_version"] = 1;
        j["method_id"] = "fixed";
        j["doc_id"] = "not-a-real-doc";
        j["probs"] = {{"anger", 0.1}, {"fear", 0.1}, {"joy", 0.1}, {"sadness", 0.1}};
        out << j.dump() << "\n";
    }
    const int code = run_cli("eval --dists " + dists.string() + common_args() + " --out-dir " +
                             (tmp.path / "eval").string());
    CHECK(code == 4);
}

TEST_CASE("dynamics reruns are byte-identical") {
    TempDir tmp;
    const auto traces = kFixture / "golden" / "traces.jsonl";
    const std::string base = "dynamics --traces " + traces.string() + common_args();
    REQUIRE(run_cli(base + " --out-dir " + (tmp.path / "a").string()) == 0);
    REQUIRE(run_cli(base + " --out-dir " + (tmp.path / "b").string()) == 0);
    for (const auto* f :
         {"summary.json", "step_probs.tsv", "consistency_samples.tsv", "spikiness.tsv"}) {
        CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
    }
    // empty trace file is an error
    const auto empty = tmp.path / "empty.jsonl";
    std::ofstream(empty).close();
    CHECK(run_cli("dynamics --traces " + empty.string() + common_args() + " --out-dir " +
                  (tmp.path / "c").string()) == 1);
}

TEST_CASE("probe command emits a report over the fixture sidecar") {
    TempDir tmp;
    const auto report = tmp.path / "probe.json";
    const int code = run_cli("probe --embeddings " + (kFixture / "embeddings.jsonl").string() +
                             " --traces " + (kFixture / "golden" / "traces.jsonl").string() +
                             common_args() + " --train-ids " +
                             (kFixture / "train_ids.txt").string() + " --eval-ids " +
                             (kFixture / "eval_ids.txt").string() + " --out " + report.string());
    REQUIRE(code == 0);
    const auto j = nlohmann::json::parse(slurp(report));
    CHECK(j.at("modes").contains("gold"));
    CHECK(j.at("modes").contains("pred"));
    CHECK(j.at("modes").contains("pred2plus"));
    CHECK(j.contains("perf"));
    for (const auto& [_, entry] : j.at("modes").items()) {
        const double f1 = entry.at("micro_f1").get<double>();
        CHECK(f1 >= 0.0);
        CHECK(f1 <= 1.0);
    }
    // rerun is byte-identical
    const auto report2 = tmp.path / "probe2.json";
    REQUIRE(run_cli("probe --embeddings " + (kFixture / "embeddings.jsonl").string() +
                    " --traces " + (kFixture / "golden" / "traces.jsonl").string() +
                    common_args() + " --train-ids " + (kFixture / "train_ids.txt").string() +
                    " --eval-ids " + (kFixture / "eval_ids.txt").string() + " --out " +
                    report2.string()) == 0);
    CHECK(slurp(report) == slurp(report2));
    // missing sidecar is an error
    CHECK(run_cli("probe --embeddings " + (tmp.path / "none.jsonl").string() + " --traces " +
                  (kFixture / "golden" / "traces.jsonl").string() + common_args() +
                  " --train-ids " + (kFixture / "train_ids.txt").string() + " --eval-ids " +
                  (kFixture / "eval_ids.txt").string() + " --out " +
                  (tmp.path / "r.json").string()) == 2);
}

TEST_CASE("split is deterministic and honors n") {
    TempDir tmp;
    const std::string base = "split" + common_args() + " --n 30 --seed 9 --out ";
    REQUIRE(run_cli(base + (tmp.path / "a.txt").string()) == 0);
    REQUIRE(run_cli(base + (tmp.path / "b.txt").string()) == 0);
    CHECK(slurp(tmp.path / "a.txt") == slurp(tmp.path / "b.txt"));
    std::ifstream in(tmp.path / "a.txt");
    std::string line;
    int ids = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') ++ids;
    }
    CHECK(ids == 30);
}

TEST_CASE("stats reports corpus statistics to a file") {
    TempDir tmp;
    const auto out = tmp.path / "stats.json";
    REQUIRE(run_cli("stats" + common_args() + " --out " + out.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    CHECK(j.at("total_annotators").get<int>() == 3);
    CHECK(j.at("mean_annotators_per_doc").get<double>() == 3.0);
    CHECK(j.contains("mean_cohens_kappa"));
    CHECK(j.at("kappa_pooling").is_string());
}

TEST_CASE("config file values override flags") {
    TempDir tmp;
    // config forces n=12 even though the flag says 30
    const auto cfg = tmp.path / "conf.json";
    {
        std::ofstream out(cfg);
        out << R"({"n": 12})";
    }
    REQUIRE(run_cli("split" + common_args() + " --n 30 --seed 9 --config " + cfg.string() +
                    " --out " + (tmp.path / "a.txt").string()) == 0);
    std::ifstream in(tmp.path / "a.txt");
    std::string line;
    int ids = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') ++ids;
    }
    CHECK(ids == 12);
}
