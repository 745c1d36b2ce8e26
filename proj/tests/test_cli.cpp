#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "evogate/config.hpp"

using namespace evogate;
namespace fs = std::filesystem;

namespace {

std::string cli_bin() {
    const char* env = std::getenv("EVOGATE_BIN");
    REQUIRE_MESSAGE(env != nullptr, "EVOGATE_BIN must point at the evogate binary");
    return env;
}

int run_cmd(const std::string& cmd) {
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("evogate-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

nlohmann::json toy_config(std::uint64_t seed, const std::string& mode = "vanilla") {
    nlohmann::json cfg;
    cfg["problem"] = {{"benchmark", "synthetic-toy-v1"}};
    cfg["mode"] = mode;
    cfg["seed"] = seed;
    cfg["threads"] = 1;
    cfg["engine"] = {{"initial_population", 24}, {"reference_rank", 6}, {"n_add", 3},
                     {"max_iterations", 12},     {"top_m", 6},          {"max_gate_queries_per_iteration", 300}};
    cfg["train"] = {{"epochs_per_update", 2}, {"pretrain_epochs", 2}};
    return cfg;
}

std::string write_config(const TempDir& dir, const nlohmann::json& cfg) {
    std::string path = (dir.path / "config.json").string();
    write_text_file(path, cfg.dump(2));
    return path;
}

}  // namespace

TEST_CASE("cli run is deterministic and artifacts re-parse") {
    TempDir dir;
    std::string cfg_path = write_config(dir, toy_config(5));
    std::string out_a = (dir.path / "a").string();
    std::string out_b = (dir.path / "b").string();

    int code_a = run_cmd(cli_bin() + " run --config " + cfg_path + " --out " + out_a +
                         " > /dev/null");
    int code_b = run_cmd(cli_bin() + " run --config " + cfg_path + " --out " + out_b +
                         " > /dev/null");
    CHECK(code_a == code_b);
    CHECK((code_a == 0 || code_a == 4));

    std::string hist_a = read_text_file(out_a + "/history.tsv");
    std::string hist_b = read_text_file(out_b + "/history.tsv");
    CHECK(hist_a == hist_b);
    CHECK(!hist_a.empty());

    // every artifact re-parses
    nlohmann::json manifest = read_json_file(out_a + "/manifest.json");
    CHECK(manifest["format"] == "evogate-manifest");
    CHECK(manifest["resolved"]["seed"] == 5);
    nlohmann::json summary = read_json_file(out_a + "/summary.json");
    CHECK(summary["format"] == "evogate-summary");
    nlohmann::json ckpt = read_json_file(out_a + "/checkpoint.json");
    CHECK(ckpt["format"] == "evogate-checkpoint");

    // summary counters reconcile with the history's last row
    auto hist = read_text_file(out_a + "/history.tsv");
    CHECK(summary["simulations"].get<std::uint64_t>() > 0);
}

TEST_CASE("cli reports a missing required field with exit code 2") {
    TempDir dir;
    nlohmann::json cfg = toy_config(1);
    cfg.erase("problem");
    std::string cfg_path = write_config(dir, cfg);
    std::string err_file = (dir.path / "err.txt").string();
    int code = run_cmd(cli_bin() + " run --config " + cfg_path + " 2> " + err_file +
                       " > /dev/null");
    CHECK(code == 2);
    std::string err = read_text_file(err_file);
    CHECK(err.find("problem") != std::string::npos);
}

TEST_CASE("cli rejects unknown config fields with exit code 2") {
    TempDir dir;
    nlohmann::json cfg = toy_config(1);
    cfg["engine"]["n_ad"] = 5;  // typo
    std::string cfg_path = write_config(dir, cfg);
    std::string err_file = (dir.path / "err.txt").string();
    int code = run_cmd(cli_bin() + " run --config " + cfg_path + " 2> " + err_file +
                       " > /dev/null");
    CHECK(code == 2);
    CHECK(read_text_file(err_file).find("n_ad") != std::string::npos);
}

TEST_CASE("cli validate prints cardinality and resolved config") {
    TempDir dir;
    std::string cfg_path = write_config(dir, toy_config(1));
    std::string out_file = (dir.path / "out.txt").string();
    int code = run_cmd(cli_bin() + " validate --config " + cfg_path + " > " + out_file);
    CHECK(code == 0);
    std::string out = read_text_file(out_file);
    CHECK(out.find("cardinality") != std::string::npos);
    CHECK(out.find("resolved config") != std::string::npos);
    CHECK(out.find("evaluator probe: ok") != std::string::npos);
}

TEST_CASE("cli validate lists zero-weight specs as findings") {
    TempDir dir;
    nlohmann::json cfg = toy_config(1);
    cfg["problem"]["weights"] = {{"m_speed", 0.0}};
    std::string cfg_path = write_config(dir, cfg);
    std::string out_file = (dir.path / "out.txt").string();
    int code = run_cmd(cli_bin() + " validate --config " + cfg_path + " > " + out_file);
    CHECK(code == 0);
    CHECK(read_text_file(out_file).find("zero weight") != std::string::npos);
}

TEST_CASE("cli compare refuses a single run and merges several") {
    TempDir dir;
    std::string cfg_path = write_config(dir, toy_config(6));
    std::string out_a = (dir.path / "a").string();
    std::string out_b = (dir.path / "b").string();
    run_cmd(cli_bin() + " run --config " + cfg_path + " --out " + out_a + " > /dev/null");
    run_cmd(cli_bin() + " run --config " + cfg_path + " --seed 7 --out " + out_b +
            " > /dev/null");

    CHECK(run_cmd(cli_bin() + " compare " + out_a + " > /dev/null 2>&1") == 2);

    std::string table = (dir.path / "table.tsv").string();
    int code = run_cmd(cli_bin() + " compare " + out_a + " " + out_b + " --out " + table);
    CHECK(code == 0);
    std::string out = read_text_file(table);
    CHECK(out.find("## by_iteration") != std::string::npos);
    CHECK(out.find("## by_simulations") != std::string::npos);
    CHECK(out.find("## summary") != std::string::npos);
    CHECK(out.find("vanilla-s6") != std::string::npos);
    CHECK(out.find("vanilla-s7") != std::string::npos);  // tagged by seed
}

TEST_CASE("cli compare refuses runs on different problems") {
    TempDir dir;
    std::string cfg_toy = write_config(dir, toy_config(2));
    nlohmann::json other = toy_config(2);
    other["problem"]["weights"] = {{"m_speed", 2.0}};  // different problem hash
    std::string cfg_other = (dir.path / "other.json").string();
    write_text_file(cfg_other, other.dump(2));

    std::string out_a = (dir.path / "a").string();
    std::string out_b = (dir.path / "b").string();
    run_cmd(cli_bin() + " run --config " + cfg_toy + " --out " + out_a + " > /dev/null");
    run_cmd(cli_bin() + " run --config " + cfg_other + " --out " + out_b + " > /dev/null");
    std::string err_file = (dir.path / "err.txt").string();
    int code = run_cmd(cli_bin() + " compare " + out_a + " " + out_b + " 2> " + err_file +
                       " > /dev/null");
    CHECK(code == 2);
    CHECK(read_text_file(err_file).find("different problems") != std::string::npos);
}

TEST_CASE("cli exits 3 when the evaluator is unusable") {
    TempDir dir;
    nlohmann::json cfg;
    cfg["problem"] = {
        {"name", "broken"},
        {"space", {{"params", {{{"name", "x"}, {"int_min", 0}, {"int_max", 9}}}}}},
        {"specs", {{{"name", "m"}, {"direction", "at_least"}, {"threshold", 0.0}}}},
        {"evaluator",
         {{"type", "external"}, {"command", "false"}, {"timeout_ms", 500}, {"max_retries", 1}}}};
    cfg["mode"] = "vanilla";
    cfg["engine"] = {{"initial_population", 4}, {"reference_rank", 2}, {"max_iterations", 2}};
    std::string cfg_path = write_config(dir, cfg);
    std::string err_file = (dir.path / "err.txt").string();
    int code = run_cmd(cli_bin() + " run --config " + cfg_path + " --out " +
                       (dir.path / "out").string() + " 2> " + err_file + " > /dev/null");
    CHECK(code == 3);
    CHECK(read_text_file(err_file).find("evaluator error") != std::string::npos);
}

TEST_CASE("cli resume continues from a checkpoint and rejects a mode switch") {
    TempDir dir;
    nlohmann::json cfg = toy_config(9, "dnn");
    cfg["engine"]["max_iterations"] = 4;
    std::string cfg_path = write_config(dir, cfg);
    std::string out_a = (dir.path / "a").string();
    int code = run_cmd(cli_bin() + " run --config " + cfg_path + " --out " + out_a +
                       " > /dev/null");
    CHECK((code == 0 || code == 4));

    // same config resumes cleanly
    std::string out_b = (dir.path / "b").string();
    int resumed = run_cmd(cli_bin() + " run --config " + cfg_path + " --resume " + out_a +
                          "/checkpoint.json --out " + out_b + " > /dev/null");
    CHECK((resumed == 0 || resumed == 4));

    // a different mode must be rejected
    std::string err_file = (dir.path / "err.txt").string();
    int rejected = run_cmd(cli_bin() + " run --config " + cfg_path + " --mode vanilla --resume " +
                           out_a + "/checkpoint.json --out " + out_b + " 2> " + err_file +
                           " > /dev/null");
    CHECK(rejected == 2);
}
