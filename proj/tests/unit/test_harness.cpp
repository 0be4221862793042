#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

#include "basil/errors.hpp"
#include "basil/experiment.hpp"

using namespace basil;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = BASIL_SOURCE_DIR;

json small_config() {
    return json::parse(R"({
      "schema_version": 1,
      "name": "small",
      "scheme": "basil",
      "dataset": {"kind": "synthetic", "dim": 5, "classes": 3, "train_samples": 240, "test_samples": 60},
      "task": {"kind": "softmax-regression"},
      "nodes": 8, "byzantine": 2, "connectivity": 3,
      "attack": {"kind": "gaussian"},
      "rounds": 4, "batch_size": 8, "seed": 3,
      "lr": {"schedule": "constant", "base": 0.1},
      "output": {"directory": "small"}
    })");
}

std::string error_of(const json& j) {
    try {
        ExperimentConfig::from_json(j, kSource / "configs").validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

bool has(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("basil-test-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

struct Shell {
    int status = -1;
    std::string out;
};

Shell sh(const std::string& args) {
    Shell r;
    std::string cmd = std::string("\"") + BASIL_CLI + "\" " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    int st = ::pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

}  // namespace

TEST_CASE("config errors name the offending field") {
    CHECK(error_of(small_config()).empty());

    json j = small_config();
    j["dataset"] = {{"kind", "idx"}, {"train_images", "missing.idx"}, {"train_labels", "missing-labels.idx"}};
    CHECK(has(error_of(j), "field 'dataset.train_images'"));
    CHECK(has(error_of(j), "file not found"));

    j = small_config();
    j["nodes"] = -3;
    CHECK(has(error_of(j), "field 'nodes'"));
    j = small_config();
    j["scheme"] = "krum";
    CHECK(has(error_of(j), "field 'scheme'"));
    j = small_config();
    j["attack"]["kind"] = "label-flip";
    CHECK(has(error_of(j), "field 'attack.kind'"));
    j = small_config();
    j["lr"]["schedule"] = "cosine";
    CHECK(has(error_of(j), "field 'lr.schedule'"));
    j = small_config();
    j["byzantine"] = 8;
    CHECK(has(error_of(j), "field 'byzantine'"));
    j = small_config();
    j["scheme"] = "basil-plus";
    j["groups"] = 3;
    CHECK(has(error_of(j), "field 'groups'"));
    j = small_config();
    j["schema_version"] = 2;
    CHECK(has(error_of(j), "field 'schema_version'"));
    j = small_config();
    j["task"]["kind"] = "quadratic-convex";
    CHECK(has(error_of(j), "field 'task.kind'"));
    j = small_config();
    j["dataset"] = 4;
    CHECK(has(error_of(j), "field 'dataset'"));
}

TEST_CASE("config round-trips through json and manifests load back") {
    ExperimentConfig a = ExperimentConfig::from_json(small_config());
    ExperimentConfig b = ExperimentConfig::from_json(a.to_json());
    CHECK(a.to_json() == b.to_json());
    CHECK_THROWS_AS(load_config(kSource / "configs" / "no-such.json"), ConfigError);

    TempDir tmp("bad-json");
    std::ofstream(tmp.path / "broken.json") << "{ \"nodes\": ";
    CHECK_THROWS_AS(load_config(tmp.path / "broken.json"), ConfigError);
}

TEST_CASE("desk run: one history row per benign node per round") {
    ExperimentConfig c = load_config(kSource / "configs" / "fig4b-desk.json");
    c.rounds = 5;
    ExperimentResult r = simulate(c);
    std::map<NodeId, std::size_t> rows;
    for (const auto& rec : r.history.records) ++rows[rec.node];
    CHECK(rows.size() == c.nodes - c.byzantine);
    for (const auto& [node, n] : rows) CHECK(n == c.rounds);
    auto byz = r.manifest["config"]["byzantine_ids"].get<std::vector<NodeId>>();
    CHECK(byz.size() == c.byzantine);
    for (NodeId id : byz) CHECK(rows.count(id) == 0);
    CHECK(r.metric_name == "worst_test_acc");
    CHECK(r.final_metric > 0.0);
}

TEST_CASE("runs write their files and replays are byte-identical") {
    TempDir tmp("replay");
    ExperimentConfig c = ExperimentConfig::from_json(small_config());
    ExperimentResult first = run_experiment(c, tmp.path);
    fs::path dir = tmp.path / "small";
    for (const char* f : {"manifest.json", "history.csv", "accuracy.csv", "audit.csv"}) CHECK(fs::exists(dir / f));
    std::string history = slurp(dir / "history.csv");
    std::size_t lines = static_cast<std::size_t>(std::count(history.begin(), history.end(), '\n'));
    CHECK(lines == 1 + 4 * 6);
    CHECK(history.rfind("round,node,selected_sender,train_loss,test_acc\n", 0) == 0);

    ExperimentConfig again = load_config(dir / "manifest.json");
    again.output_directory = "replay";
    run_experiment(again, tmp.path);
    for (const char* f : {"history.csv", "accuracy.csv", "audit.csv"})
        CHECK(slurp(dir / f) == slurp(tmp.path / "replay" / f));

    json m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m["schema_version"] == 1);
    CHECK(m["outputs"] == json({"history.csv", "accuracy.csv", "audit.csv"}));
    CHECK(m["summary"]["records"] == 24);
}

TEST_CASE("each scheme runs on a tiny config") {
    for (const char* scheme : {"basil", "r-plain", "g-plain", "ubar", "basil-plus", "r-plain-plus"}) {
        json j = small_config();
        j["scheme"] = scheme;
        j["groups"] = 2;
        j["connectivity"] = 0;
        j["rounds"] = 2;
        ExperimentConfig c = ExperimentConfig::from_json(j);
        ExperimentResult r;
        REQUIRE_NOTHROW(r = simulate(c));
        CHECK(r.history.records.size() == 2 * 6 * (c.tau));
        CHECK(std::isfinite(r.final_metric));
    }
}

TEST_CASE("a failed write removes what was written") {
    TempDir tmp("partial");
    ExperimentConfig c = ExperimentConfig::from_json(small_config());
    // a directory where manifest.json should go makes the last write fail
    fs::create_directories(tmp.path / "small" / "manifest.json");
    CHECK_THROWS(run_experiment(c, tmp.path));
    CHECK_FALSE(fs::exists(tmp.path / "small" / "history.csv"));
    CHECK_FALSE(fs::exists(tmp.path / "small" / "accuracy.csv"));
    CHECK(fs::exists(tmp.path / "small" / "manifest.json"));  // not ours to delete

    // a simulation failure creates nothing
    json j = small_config();
    j["dataset"] = {{"kind", "idx"}, {"train_images", (tmp.path / "x").string()},
                    {"train_labels", (tmp.path / "y").string()}};
    std::ofstream(tmp.path / "x") << "not idx";
    std::ofstream(tmp.path / "y") << "not idx";
    j["output"]["directory"] = "never";
    CHECK_THROWS(run_experiment(ExperimentConfig::from_json(j), tmp.path));
    CHECK_FALSE(fs::exists(tmp.path / "never"));
}

TEST_CASE("command line exit codes and analytics output") {
    CHECK(sh("bogus").status == 2);
    CHECK(sh("").status == 2);
    CHECK(sh("analyze failure --N 100").status == 2);

    Shell f = sh("analyze failure --N 100 --b 33 --S 10");
    REQUIRE(f.status == 0);
    json jf = json::parse(f.out);
    CHECK(jf["analytic"].get<double>() == doctest::Approx(5.347e-4).epsilon(1e-3));
    CHECK(jf["trials"] == 0);

    Shell c = sh("analyze cost --alpha 0.05 --D 500 --I 24500 --H 5 --n 25 --G 4");
    REQUIRE(c.status == 0);
    CHECK(json::parse(c.out)["analytic"].get<double>() == 76'685'000.0);

    Shell t = sh("analyze time --scheme basil-plus --tau 1 --n 25 --G 16 --S 6 --perf 1 --comm 1 --sgd 1");
    REQUIRE(t.status == 0);
    CHECK(json::parse(t.out)["analytic"].get<double>() == 187.0);

    Shell mc = sh("analyze failure --N 20 --b 6 --S 2 --trials 20000 --seed 4");
    REQUIRE(mc.status == 0);
    json jm = json::parse(mc.out);
    CHECK(jm["monte_carlo"].get<double>() <= jm["raw_bound"].get<double>());

    TempDir tmp("cli");
    std::ofstream(tmp.path / "bad.json") << R"({"nodes": 0})";
    Shell bad = sh("run --output-root \"" + tmp.path.string() + "\" \"" + (tmp.path / "bad.json").string() + "\"");
    CHECK(bad.status == 1);
    CHECK(has(bad.out, "field 'nodes'"));

    std::ofstream(tmp.path / "ok.json") << small_config().dump();
    Shell ok = sh("run --output-root \"" + tmp.path.string() + "\" \"" + (tmp.path / "ok.json").string() + "\"");
    CHECK(ok.status == 0);
    CHECK(fs::exists(tmp.path / "small" / "manifest.json"));
}
