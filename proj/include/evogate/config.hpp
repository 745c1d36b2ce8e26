#pragma once

#include <memory>
#include <string>

#include "evogate/engine.hpp"
#include "evogate/evaluators.hpp"
#include "json.hpp"

namespace evogate {

// A fully resolved run setup: problem + evaluator + engine configuration.
struct RunSetup {
    EngineConfig engine;
    Problem problem;
    std::unique_ptr<Evaluator> evaluator;
    nlohmann::json resolved;  // full config with every default materialized
    std::string run_id;       // hash of resolved config + problem
};

// Parses a config document:
//   {
//     "problem": {"benchmark": "synthetic-opamp-v1"}
//              | {"space": {...}, "specs": [...], "evaluator": {...}},
//     "mode": "dnn" | "oracle" | "vanilla",
//     "seed": 1, "threads": 0,
//     "engine": {...}, "train": {...}, "evo": {...}
//   }
// Missing sections fall back to defaults; "problem" is required. Throws
// ConfigError with a field-level message on any problem.
RunSetup load_run_setup(const nlohmann::json& config);
RunSetup load_run_setup_file(const std::string& path);

// Weight overrides and explicit problem parsing, exposed for validate/tests.
Problem problem_from_json(const nlohmann::json& j, std::unique_ptr<Evaluator>* evaluator_out);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace evogate
