#include "evogate/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace evogate {

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("file is not valid JSON: " + path);
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::vector<double> grid_from_json(const nlohmann::json& p, const std::string& where) {
    if (p.contains("grid")) return p["grid"].get<std::vector<double>>();
    if (p.contains("int_min") && p.contains("int_max"))
        return integer_grid(p["int_min"].get<int>(), p["int_max"].get<int>());
    if (p.contains("min") && p.contains("max") && p.contains("step"))
        return step_grid(p["min"].get<double>(), p["max"].get<double>(),
                         p["step"].get<double>());
    throw ConfigError(where + ": expected 'grid', 'int_min'/'int_max' or 'min'/'max'/'step'");
}

DesignSpace space_from_json(const nlohmann::json& j) {
    if (!j.contains("params") || !j["params"].is_array())
        throw ConfigError("problem.space.params: required array");
    DesignSpace space;
    for (const auto& p : j["params"]) {
        if (!p.contains("name")) throw ConfigError("problem.space.params[].name: required");
        ParamSpec ps;
        ps.name = p["name"].get<std::string>();
        ps.grid = grid_from_json(p, "problem.space.params['" + ps.name + "']");
        space.params.push_back(std::move(ps));
    }
    return space;
}

SpecList specs_from_json(const nlohmann::json& j) {
    SpecList specs;
    for (const auto& s : j) {
        SpecDef def;
        if (!s.contains("name")) throw ConfigError("problem.specs[].name: required");
        def.name = s["name"].get<std::string>();
        if (!s.contains("direction"))
            throw ConfigError("problem.specs['" + def.name + "'].direction: required");
        def.direction = direction_from_string(s["direction"].get<std::string>());
        if (!s.contains("threshold"))
            throw ConfigError("problem.specs['" + def.name + "'].threshold: required");
        def.threshold = s["threshold"].get<double>();
        def.weight = s.value("weight", 1.0);
        specs.push_back(std::move(def));
    }
    return specs;
}

void apply_weight_overrides(SpecList& specs, const nlohmann::json& weights) {
    for (auto it = weights.begin(); it != weights.end(); ++it) {
        bool found = false;
        for (auto& s : specs) {
            if (s.name == it.key()) {
                s.weight = it.value().get<double>();
                found = true;
            }
        }
        if (!found) throw ConfigError("problem.weights: unknown spec '" + it.key() + "'");
    }
}

}  // namespace

Problem problem_from_json(const nlohmann::json& j, std::unique_ptr<Evaluator>* evaluator_out) {
    if (!j.is_object()) throw ConfigError("problem: required object");

    Problem problem;
    std::unique_ptr<Evaluator> evaluator;

    if (j.contains("benchmark")) {
        auto bench = make_benchmark(j["benchmark"].get<std::string>());
        problem.name = bench->name();
        problem.space = bench->space();
        problem.specs = bench->specs();
        if (j.contains("weights")) apply_weight_overrides(problem.specs, j["weights"]);
        if (j.contains("latency_ms")) bench->set_latency_ms(j["latency_ms"].get<int>());
        evaluator = std::move(bench);
    } else {
        if (!j.contains("space")) throw ConfigError("problem.space: required");
        if (!j.contains("specs")) throw ConfigError("problem.specs: required");
        problem.name = j.value("name", "custom");
        problem.space = space_from_json(j["space"]);
        problem.specs = specs_from_json(j["specs"]);
        if (j.contains("weights")) apply_weight_overrides(problem.specs, j["weights"]);

        if (!j.contains("evaluator"))
            throw ConfigError("problem.evaluator: required for a custom problem");
        const auto& ev = j["evaluator"];
        std::string type = ev.value("type", "");
        if (type == "external") {
            ExternalEvaluatorSpec spec;
            if (!ev.contains("command")) throw ConfigError("problem.evaluator.command: required");
            spec.command = ev["command"].get<std::string>();
            spec.schema_version = ev.value("schema_version", spec.schema_version);
            spec.timeout_ms = ev.value("timeout_ms", spec.timeout_ms);
            spec.max_retries = ev.value("max_retries", spec.max_retries);
            spec.max_inflight = ev.value("max_inflight", spec.max_inflight);
            std::vector<std::string> metric_names;
            for (const auto& s : problem.specs) metric_names.push_back(s.name);
            evaluator = std::make_unique<ExternalEvaluator>(spec, problem.space, metric_names);
        } else {
            throw ConfigError("problem.evaluator.type: expected 'external'");
        }
    }

    problem.validate();
    if (evaluator_out) *evaluator_out = std::move(evaluator);
    return problem;
}

RunSetup load_run_setup(const nlohmann::json& config) {
    if (!config.is_object()) throw ConfigError("config: expected a JSON object");
    if (!config.contains("problem")) throw ConfigError("problem: required field");

    RunSetup setup;
    setup.engine = engine_config_from_json(config);
    setup.problem = problem_from_json(config["problem"], &setup.evaluator);
    setup.engine.validate();

    setup.resolved = engine_config_to_json(setup.engine);
    setup.resolved["problem"] = config["problem"];

    std::string canonical = setup.resolved.dump();
    std::uint64_t h = fnv1a(canonical.data(), canonical.size());
    h = fnv1a(&setup.engine.seed, sizeof setup.engine.seed, h);
    std::uint64_t ph = setup.problem.hash();
    h = fnv1a(&ph, sizeof ph, h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    setup.run_id = buf;
    return setup;
}

RunSetup load_run_setup_file(const std::string& path) {
    return load_run_setup(read_json_file(path));
}

}  // namespace evogate
