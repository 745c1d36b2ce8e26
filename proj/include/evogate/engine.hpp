#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evogate/comparator.hpp"
#include "evogate/critical.hpp"
#include "evogate/evaluators.hpp"
#include "evogate/evolution.hpp"
#include "json.hpp"

namespace evogate {

enum class Mode { Dnn, Oracle, Vanilla };

const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct EngineConfig {
    Mode mode = Mode::Dnn;
    int initial_population = 100;
    int reference_rank = 20;  // k: reference is the rank-k design (0-based)
    int n_add = 5;            // approvals per iteration
    int max_iterations = 200;
    int max_gate_queries_per_iteration = 20000;
    int top_m = 20;  // reporting: average cost of the top-m designs
    int mu = 0;      // survivor count; 0 = initial_population
    double approval_threshold = 0.5;
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware
    TrainConfig train;
    EvoConfig evo;

    int resolved_mu() const { return mu > 0 ? mu : initial_population; }
    void validate() const;
};

struct Problem {
    std::string name;
    DesignSpace space;
    SpecList specs;

    void validate() const;
    std::uint64_t hash() const;  // identifies the problem for compare/resume
};

struct IterationRecord {
    int iteration = 0;  // 0 = state right after initialization
    double best_cost = 0.0;
    double avg_top_m = 0.0;
    std::uint64_t simulations = 0;
    std::uint64_t gate_queries = 0;
    std::uint64_t retrainings = 0;
    std::vector<std::string> critical;
    bool fallback_used = false;

    bool operator==(const IterationRecord&) const = default;
};

enum class RunStatus { Solved, MaxIterations, GateExhausted };

const char* to_string(RunStatus s);

struct RunResult {
    RunStatus status = RunStatus::MaxIterations;
    bool solved = false;
    std::vector<IterationRecord> history;
    std::uint64_t simulations = 0;
    std::uint64_t gate_queries = 0;
    std::uint64_t retrainings = 0;
    std::uint64_t sims_to_first_solve = 0;  // valid when solved
    std::uint64_t fallback_iterations = 0;
    std::vector<std::string> incidents;  // skipped candidates etc.
    double best_cost = 0.0;
    std::optional<EvaluatedDesign> best_design;
    int iterations() const { return history.empty() ? 0 : history.back().iteration; }
};

// Called after every completed iteration with a full state checkpoint.
using CheckpointSink = std::function<void(const nlohmann::json&, int iteration)>;

// `size` distinct uniform-random designs, evaluated and committed in draw
// order. Throws when the space cannot supply enough distinct points or the
// evaluator fails (the offending point is named).
Buffer init_population(const DesignSpace& space, const SpecList& specs, Evaluator& evaluator,
                       std::size_t size, Rng& rng, std::uint64_t* simulations,
                       std::uint64_t* sims_to_first_solve);

// The approval gate on a candidate that is already simulated (oracle mode)
// or scored (dnn mode) is engine-internal; this helper covers the dnn path:
// approved iff the MC-averaged probability beats the threshold on every
// critical spec. An empty cs approves unconditionally.
bool gate_dnn(const ComparatorNet& net, const std::vector<double>& candidate_enc,
              const std::vector<double>& ref_enc, const CriticalSpecList& cs,
              const SpecList& specs, const EngineConfig& cfg, Rng& rng,
              std::vector<double>* probs_out = nullptr);

// Full Algorithm-2 style loop in the configured mode. Deterministic given
// the seed and a deterministic evaluator.
RunResult run(const EngineConfig& cfg, const Problem& problem, Evaluator& evaluator,
              const CheckpointSink& sink = nullptr);

// Continues a checkpointed run to completion; the returned result includes
// the pre-checkpoint history. Throws CheckpointError on any incompatibility,
// including an `expected` configuration (mode, seed, ...) that differs from
// the one the checkpoint was taken with.
RunResult resume(const nlohmann::json& checkpoint, const Problem& problem,
                 Evaluator& evaluator, const CheckpointSink& sink = nullptr,
                 const EngineConfig* expected = nullptr);

// Serialization used by checkpoints and the CLI.
nlohmann::json engine_config_to_json(const EngineConfig& cfg);
EngineConfig engine_config_from_json(const nlohmann::json& j);
nlohmann::json net_to_json(const ComparatorNet& net, std::uint64_t rng_seed = 0);
ComparatorNet net_from_json(const nlohmann::json& j);

// Delimited per-iteration table (the data behind cost-vs-iteration and
// cost-vs-simulations curves). Stable byte-for-byte for equal runs.
std::string history_tsv(const RunResult& result, int top_m);
nlohmann::json summary_json(const EngineConfig& cfg, const RunResult& result);

// Shortest round-trip decimal form; all text artifacts use it.
std::string format_double(double v);

}  // namespace evogate
