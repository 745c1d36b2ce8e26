#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evogate/config.hpp"

namespace fs = std::filesystem;
using namespace evogate;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitEvaluator = 3;
constexpr int kExitUnsolved = 4;

struct RunOptions {
    std::string config_path;
    std::string mode;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string resume_path;
    std::optional<int> threads;
};

std::string artifact_root() {
    if (const char* env = std::getenv("EVOGATE_ARTIFACT_ROOT")) return env;
    return "runs";
}

nlohmann::json manifest_json(const RunSetup& setup, const std::string& config_path) {
    nlohmann::json j;
    j["format"] = "evogate-manifest";
    j["version"] = 1;
    j["run_id"] = setup.run_id;
    j["config_path"] = config_path;
    j["problem_name"] = setup.problem.name;
    j["problem_hash"] = setup.problem.hash();
    j["space_cardinality_approx"] = setup.problem.space.cardinality_approx();
    j["resolved"] = setup.resolved;
    return j;
}

void print_counter_summary(const RunResult& result) {
    std::cout << "status:       " << to_string(result.status) << "\n"
              << "iterations:   " << result.iterations() << "\n"
              << "nn_queries:   " << result.gate_queries << "\n"
              << "retrainings:  " << result.retrainings << "\n"
              << "simulations:  " << result.simulations << "\n"
              << "best_cost:    " << format_double(result.best_cost) << "\n";
    if (result.solved)
        std::cout << "sims_to_first_solve: " << result.sims_to_first_solve << "\n";
}

int cmd_run(const RunOptions& opt) {
    RunSetup setup;
    nlohmann::json config;
    try {
        config = read_json_file(opt.config_path);
        if (!opt.mode.empty()) config["mode"] = opt.mode;  // flags beat the file
        if (opt.seed) config["seed"] = *opt.seed;
        if (opt.threads) config["threads"] = *opt.threads;
        setup = load_run_setup(config);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    fs::path out = opt.out_dir.empty() ? fs::path(artifact_root()) / setup.run_id
                                       : fs::path(opt.out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        std::cerr << "config error: cannot create output directory " << out << "\n";
        return kExitConfig;
    }

    write_text_file((out / "manifest.json").string(),
                    manifest_json(setup, opt.config_path).dump(2) + "\n");

    CheckpointSink sink = [&](const nlohmann::json& ckpt, int) {
        write_text_file((out / "checkpoint.json").string(), ckpt.dump() + "\n");
    };

    RunResult result;
    try {
        if (!opt.resume_path.empty()) {
            nlohmann::json ckpt = read_json_file(opt.resume_path);
            result = resume(ckpt, setup.problem, *setup.evaluator, sink, &setup.engine);
        } else {
            result = run(setup.engine, setup.problem, *setup.evaluator, sink);
        }
    } catch (const CheckpointError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EvalError& e) {
        std::cerr << "evaluator error: " << e.what() << "\n";
        std::cerr << "last completed iteration remains in " << (out / "checkpoint.json")
                  << "\n";
        return kExitEvaluator;
    }

    write_text_file((out / "history.tsv").string(), history_tsv(result, setup.engine.top_m));
    write_text_file((out / "summary.json").string(),
                    summary_json(setup.engine, result).dump(2) + "\n");

    print_counter_summary(result);
    std::cout << "artifacts: " << out.string() << "\n";
    return result.solved ? kExitOk : kExitUnsolved;
}

// --- compare -----------------------------------------------------------------

struct LoadedRun {
    std::string label;
    std::string dir;
    std::uint64_t problem_hash = 0;
    std::uint64_t seed = 0;
    std::string mode;
    nlohmann::json summary;
    std::vector<IterationRecord> records;
};

std::vector<IterationRecord> parse_history(const std::string& text) {
    std::vector<IterationRecord> records;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty() || line[0] == '#' || line.rfind("iteration\t", 0) == 0) continue;
        std::vector<std::string> cols;
        std::size_t c = 0;
        while (true) {
            std::size_t tab = line.find('\t', c);
            cols.push_back(line.substr(c, tab == std::string::npos ? tab : tab - c));
            if (tab == std::string::npos) break;
            c = tab + 1;
        }
        if (cols.size() < 7) throw ConfigError("history line " + std::to_string(line_no) +
                                               ": expected at least 7 columns");
        IterationRecord r;
        r.iteration = std::stoi(cols[0]);
        r.best_cost = std::stod(cols[1]);
        r.avg_top_m = std::stod(cols[2]);
        r.simulations = std::stoull(cols[3]);
        r.gate_queries = std::stoull(cols[4]);
        r.retrainings = std::stoull(cols[5]);
        r.fallback_used = cols[6] == "1";
        records.push_back(r);
    }
    return records;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_path) {
    if (dirs.size() < 2) {
        std::cerr << "config error: compare needs at least two completed runs\n";
        return kExitConfig;
    }
    std::vector<LoadedRun> runs;
    try {
        for (const auto& dir : dirs) {
            LoadedRun r;
            r.dir = dir;
            nlohmann::json manifest = read_json_file((fs::path(dir) / "manifest.json").string());
            r.problem_hash = manifest.at("problem_hash").get<std::uint64_t>();
            r.seed = manifest.at("resolved").at("seed").get<std::uint64_t>();
            r.mode = manifest.at("resolved").at("mode").get<std::string>();
            r.summary = read_json_file((fs::path(dir) / "summary.json").string());
            r.records = parse_history(read_text_file((fs::path(dir) / "history.tsv").string()));
            r.label = r.mode + "-s" + std::to_string(r.seed);
            runs.push_back(std::move(r));
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: malformed run artifacts: " << e.what() << "\n";
        return kExitConfig;
    }
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].problem_hash != runs[0].problem_hash) {
            std::cerr << "config error: runs cover different problems (" << runs[i].dir
                      << " vs " << runs[0].dir << "); refusing to compare\n";
            return kExitConfig;
        }
    }
    // Disambiguate repeated labels.
    std::map<std::string, int> seen;
    for (auto& r : runs) {
        int n = seen[r.label]++;
        if (n > 0) r.label += "#" + std::to_string(n);
    }

    std::string out = "# evogate-compare v1\n";
    for (const auto& r : runs)
        out += "# run " + r.label + ": mode=" + r.mode + " seed=" + std::to_string(r.seed) +
               " dir=" + r.dir + "\n";

    // Cost (avg of top-m) against the iteration axis.
    out += "## by_iteration\niteration";
    for (const auto& r : runs) out += "\t" + r.label;
    out += "\n";
    int max_iter = 0;
    for (const auto& r : runs)
        if (!r.records.empty()) max_iter = std::max(max_iter, r.records.back().iteration);
    for (int it = 0; it <= max_iter; ++it) {
        out += std::to_string(it);
        for (const auto& r : runs) {
            out += '\t';
            for (const auto& rec : r.records)
                if (rec.iteration == it) {
                    out += format_double(rec.avg_top_m);
                    break;
                }
        }
        out += '\n';
    }

    // Same cost against the simulation-count axis (step-aligned).
    out += "## by_simulations\nsimulations";
    for (const auto& r : runs) out += "\t" + r.label;
    out += "\n";
    std::vector<std::uint64_t> sims;
    for (const auto& r : runs)
        for (const auto& rec : r.records) sims.push_back(rec.simulations);
    std::sort(sims.begin(), sims.end());
    sims.erase(std::unique(sims.begin(), sims.end()), sims.end());
    for (std::uint64_t s : sims) {
        out += std::to_string(s);
        for (const auto& r : runs) {
            out += '\t';
            const IterationRecord* last = nullptr;
            for (const auto& rec : r.records) {
                if (rec.simulations <= s) last = &rec;
                else break;
            }
            if (last) out += format_double(last->avg_top_m);
        }
        out += '\n';
    }

    out += "## summary\nrun\tmode\tseed\tstatus\tsimulations\tgate_queries\tretrainings\t"
           "sims_to_first_solve\tbest_cost\n";
    for (const auto& r : runs) {
        out += r.label + "\t" + r.mode + "\t" + std::to_string(r.seed) + "\t" +
               r.summary.at("status").get<std::string>() + "\t" +
               std::to_string(r.summary.at("simulations").get<std::uint64_t>()) + "\t" +
               std::to_string(r.summary.at("gate_queries").get<std::uint64_t>()) + "\t" +
               std::to_string(r.summary.at("retrainings").get<std::uint64_t>()) + "\t";
        if (r.summary.at("sims_to_first_solve").is_null())
            out += "-";
        else
            out += std::to_string(r.summary.at("sims_to_first_solve").get<std::uint64_t>());
        out += "\t" + format_double(r.summary.at("best_cost").get<double>()) + "\n";
    }

    if (out_path.empty())
        std::cout << out;
    else
        write_text_file(out_path, out);
    return kExitOk;
}

// --- validate ------------------------------------------------------------------

int cmd_validate(const std::string& config_path) {
    nlohmann::json config;
    try {
        config = read_json_file(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    std::vector<std::string> findings;
    RunSetup setup;
    bool loaded = false;
    try {
        setup = load_run_setup(config);
        loaded = true;
    } catch (const ConfigError& e) {
        findings.push_back(e.what());
    }

    if (loaded) {
        std::cout << "resolved config:\n" << setup.resolved.dump(2) << "\n";
        double cells = setup.problem.space.cardinality_approx();
        std::cout << "space: " << setup.problem.space.params.size()
                  << " parameters, cardinality ~" << format_double(cells) << "\n";
        std::cout << "specs:\n";
        for (const auto& s : setup.problem.specs) {
            std::cout << "  " << s.name << " " << (s.direction == Direction::AtLeast ? ">=" : "<=")
                      << " " << format_double(s.threshold) << " (weight "
                      << format_double(s.weight) << ")\n";
            if (s.weight == 0.0)
                findings.push_back("spec '" + s.name + "' has zero weight: it cannot drive the search");
        }
        // One probe evaluation to confirm the evaluator is reachable.
        DesignPoint probe;
        probe.indices.assign(setup.problem.space.params.size(), 0);
        try {
            Measurement m = setup.evaluator->evaluate(probe);
            std::cout << "evaluator probe: ok (" << m.values.size() << " metrics)\n";
        } catch (const std::exception& e) {
            findings.push_back(std::string("evaluator probe failed: ") + e.what());
        }
    }

    if (findings.empty()) {
        std::cout << "ok\n";
    } else {
        std::cout << "findings:\n";
        for (const auto& f : findings) std::cout << "  - " << f << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"surrogate-gated evolutionary design optimizer"};
    app.require_subcommand(1);

    RunOptions run_opt;
    CLI::App* run_cmd = app.add_subcommand("run", "execute an optimization run");
    run_cmd->add_option("--config", run_opt.config_path, "config file (JSON)")->required();
    run_cmd->add_option("--mode", run_opt.mode, "override mode: dnn|oracle|vanilla");
    std::uint64_t seed_val = 0;
    bool seed_set = false;
    run_cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed_val = v; seed_set = true; }, "override rng seed");
    run_cmd->add_option("--out", run_opt.out_dir, "artifact directory");
    run_cmd->add_option("--resume", run_opt.resume_path, "checkpoint file to continue from");
    int threads_val = 0;
    bool threads_set = false;
    run_cmd->add_option_function<int>(
        "--threads", [&](int v) { threads_val = v; threads_set = true; },
        "worker threads (0 = hardware)");

    std::vector<std::string> compare_dirs;
    std::string compare_out;
    CLI::App* compare_cmd = app.add_subcommand("compare", "merge run histories into one table");
    compare_cmd->add_option("dirs", compare_dirs, "run directories")->expected(-1);
    compare_cmd->add_option("--out", compare_out, "write the table to a file instead of stdout");

    std::string validate_config;
    CLI::App* validate_cmd = app.add_subcommand("validate", "dry-run a config file");
    validate_cmd->add_option("--config", validate_config, "config file (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (run_cmd->parsed()) {
            if (seed_set) run_opt.seed = seed_val;
            if (threads_set) run_opt.threads = threads_val;
            return cmd_run(run_opt);
        }
        if (compare_cmd->parsed()) return cmd_compare(compare_dirs, compare_out);
        if (validate_cmd->parsed()) return cmd_validate(validate_config);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EvalError& e) {
        std::cerr << "evaluator error: " << e.what() << "\n";
        return kExitEvaluator;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitConfig;
}
