#include "evogate/engine.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <set>

#include "evogate/parallel.hpp"

namespace evogate {

const char* to_string(Mode m) {
    switch (m) {
        case Mode::Dnn: return "dnn";
        case Mode::Oracle: return "oracle";
        case Mode::Vanilla: return "vanilla";
    }
    return "dnn";
}

Mode mode_from_string(const std::string& s) {
    if (s == "dnn") return Mode::Dnn;
    if (s == "oracle") return Mode::Oracle;
    if (s == "vanilla") return Mode::Vanilla;
    throw ConfigError("unknown mode '" + s + "' (expected dnn, oracle or vanilla)");
}

const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Solved: return "solved";
        case RunStatus::MaxIterations: return "max-iterations";
        case RunStatus::GateExhausted: return "gate-exhausted";
    }
    return "max-iterations";
}

void EngineConfig::validate() const {
    if (initial_population < 2) throw ConfigError("engine.initial_population must be >= 2");
    if (reference_rank < 1) throw ConfigError("engine.reference_rank must be >= 1");
    if (resolved_mu() <= reference_rank)
        throw ConfigError("engine.reference_rank must be smaller than the surviving population");
    if (initial_population <= reference_rank)
        throw ConfigError("engine.reference_rank must be smaller than initial_population");
    if (n_add < 1) throw ConfigError("engine.n_add must be >= 1");
    if (max_iterations < 0) throw ConfigError("engine.max_iterations must be >= 0");
    if (max_gate_queries_per_iteration < 1)
        throw ConfigError("engine.max_gate_queries_per_iteration must be >= 1");
    if (top_m < 1) throw ConfigError("engine.top_m must be >= 1");
    if (resolved_mu() < 2) throw ConfigError("engine.mu must be >= 2");
    if (!(approval_threshold > 0.0 && approval_threshold < 1.0))
        throw ConfigError("engine.approval_threshold must be in (0, 1)");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    train.validate();
    evo.validate();
}

void Problem::validate() const {
    space.validate();
    if (specs.empty()) throw ConfigError("problem: no specs");
    std::set<std::string> names;
    for (const auto& s : specs) {
        s.validate();
        if (!names.insert(s.name).second)
            throw ConfigError("problem: duplicate spec name '" + s.name + "'");
    }
}

std::uint64_t Problem::hash() const {
    std::uint64_t h = fnv1a(name.data(), name.size());
    for (const auto& p : space.params) {
        h = fnv1a(p.name.data(), p.name.size(), h);
        h = fnv1a(p.grid.data(), p.grid.size() * sizeof(double), h);
    }
    for (const auto& s : specs) {
        h = fnv1a(s.name.data(), s.name.size(), h);
        int dir = s.direction == Direction::AtLeast ? 0 : 1;
        h = fnv1a(&dir, sizeof dir, h);
        h = fnv1a(&s.threshold, sizeof s.threshold, h);
        h = fnv1a(&s.weight, sizeof s.weight, h);
    }
    return h;
}

// --- text formatting -----------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

namespace {

std::string double_hex(double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[bits & 0xF];
        bits >>= 4;
    }
    return out;
}

double hex_double(const std::string& s) {
    if (s.size() != 16) throw CheckpointError("bad hex double '" + s + "'");
    std::uint64_t bits = 0;
    for (char c : s) {
        bits <<= 4;
        if (c >= '0' && c <= '9')
            bits |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f')
            bits |= static_cast<std::uint64_t>(c - 'a' + 10);
        else
            throw CheckpointError("bad hex double '" + s + "'");
    }
    return std::bit_cast<double>(bits);
}

std::string doubles_hex(const std::vector<double>& v) {
    std::string out;
    out.reserve(v.size() * 16);
    for (double d : v) out += double_hex(d);
    return out;
}

std::vector<double> hex_doubles(const std::string& s) {
    if (s.size() % 16 != 0) throw CheckpointError("bad tensor dump length");
    std::vector<double> v(s.size() / 16);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = hex_double(s.substr(i * 16, 16));
    return v;
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown field '" + section + "." + it.key() + "'");
}

}  // namespace

// --- config serde ----------------------------------------------------------

nlohmann::json engine_config_to_json(const EngineConfig& cfg) {
    nlohmann::json j;
    j["mode"] = to_string(cfg.mode);
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["engine"] = {{"initial_population", cfg.initial_population},
                   {"reference_rank", cfg.reference_rank},
                   {"n_add", cfg.n_add},
                   {"max_iterations", cfg.max_iterations},
                   {"max_gate_queries_per_iteration", cfg.max_gate_queries_per_iteration},
                   {"top_m", cfg.top_m},
                   {"mu", cfg.mu},
                   {"approval_threshold", cfg.approval_threshold}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"epochs_per_update", cfg.train.epochs_per_update},
                  {"pretrain_epochs", cfg.train.pretrain_epochs},
                  {"minibatch", cfg.train.minibatch},
                  {"dropout_rate", cfg.train.dropout_rate},
                  {"mc_samples", cfg.train.mc_samples},
                  {"max_pairs_per_update", cfg.train.max_pairs_per_update}};
    j["evo"] = {{"parent_pool_fraction", cfg.evo.parent_pool_fraction},
                {"tournament_size", cfg.evo.tournament_size},
                {"crossover_probability", cfg.evo.crossover_probability},
                {"blend_alpha", cfg.evo.blend_alpha},
                {"mutation_probability", cfg.evo.mutation_probability},
                {"mutation_sigma", cfg.evo.mutation_sigma}};
    return j;
}

EngineConfig engine_config_from_json(const nlohmann::json& j) {
    EngineConfig cfg;
    reject_unknown_keys(j, {"mode", "seed", "threads", "engine", "train", "evo", "problem"},
                        "config");
    if (j.contains("mode")) cfg.mode = mode_from_string(j["mode"].get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("engine")) {
        const auto& e = j["engine"];
        reject_unknown_keys(e,
                            {"initial_population", "reference_rank", "n_add", "max_iterations",
                             "max_gate_queries_per_iteration", "top_m", "mu",
                             "approval_threshold"},
                            "engine");
        cfg.initial_population = e.value("initial_population", cfg.initial_population);
        cfg.reference_rank = e.value("reference_rank", cfg.reference_rank);
        cfg.n_add = e.value("n_add", cfg.n_add);
        cfg.max_iterations = e.value("max_iterations", cfg.max_iterations);
        cfg.max_gate_queries_per_iteration =
            e.value("max_gate_queries_per_iteration", cfg.max_gate_queries_per_iteration);
        cfg.top_m = e.value("top_m", cfg.top_m);
        cfg.mu = e.value("mu", cfg.mu);
        cfg.approval_threshold = e.value("approval_threshold", cfg.approval_threshold);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown_keys(t,
                            {"learning_rate", "epochs_per_update", "pretrain_epochs", "minibatch",
                             "dropout_rate", "mc_samples", "max_pairs_per_update"},
                            "train");
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.epochs_per_update = t.value("epochs_per_update", cfg.train.epochs_per_update);
        cfg.train.pretrain_epochs = t.value("pretrain_epochs", cfg.train.pretrain_epochs);
        cfg.train.minibatch = t.value("minibatch", cfg.train.minibatch);
        cfg.train.dropout_rate = t.value("dropout_rate", cfg.train.dropout_rate);
        cfg.train.mc_samples = t.value("mc_samples", cfg.train.mc_samples);
        cfg.train.max_pairs_per_update =
            t.value("max_pairs_per_update", cfg.train.max_pairs_per_update);
    }
    if (j.contains("evo")) {
        const auto& e = j["evo"];
        reject_unknown_keys(e,
                            {"parent_pool_fraction", "tournament_size", "crossover_probability",
                             "blend_alpha", "mutation_probability", "mutation_sigma"},
                            "evo");
        cfg.evo.parent_pool_fraction = e.value("parent_pool_fraction", cfg.evo.parent_pool_fraction);
        cfg.evo.tournament_size = e.value("tournament_size", cfg.evo.tournament_size);
        cfg.evo.crossover_probability =
            e.value("crossover_probability", cfg.evo.crossover_probability);
        cfg.evo.blend_alpha = e.value("blend_alpha", cfg.evo.blend_alpha);
        cfg.evo.mutation_probability =
            e.value("mutation_probability", cfg.evo.mutation_probability);
        cfg.evo.mutation_sigma = e.value("mutation_sigma", cfg.evo.mutation_sigma);
    }
    return cfg;
}

// --- net serde ---------------------------------------------------------------

nlohmann::json net_to_json(const ComparatorNet& net, std::uint64_t rng_seed) {
    const NetShape& shape = net.shape();
    nlohmann::json j;
    j["format"] = "evogate-net";
    j["version"] = 1;
    j["shape"] = {{"input_dim", shape.input_dim},
                  {"feature_widths", shape.feature_widths},
                  {"head_hidden", shape.head_hidden},
                  {"num_heads", shape.num_heads}};
    j["dropout_rate"] = double_hex(net.dropout_rate());
    j["rng_seed"] = rng_seed;
    nlohmann::json layers = nlohmann::json::array();
    int in = shape.input_dim;
    for (std::size_t l = 0; l < shape.feature_widths.size(); ++l) {
        layers.push_back({{"name", "feature." + std::to_string(l)},
                          {"rows", shape.feature_widths[l]},
                          {"cols", in}});
        in = shape.feature_widths[l];
    }
    for (int h = 0; h < shape.num_heads; ++h) {
        layers.push_back({{"name", "head." + std::to_string(h) + ".hidden"},
                          {"rows", shape.head_hidden / 2},
                          {"cols", 2 * shape.feature_dim()}});
        layers.push_back({{"name", "head." + std::to_string(h) + ".out"},
                          {"rows", 1},
                          {"cols", shape.head_hidden}});
    }
    j["layers"] = layers;
    j["param_count"] = net.param_count();
    j["data"] = doubles_hex(net.params());
    return j;
}

ComparatorNet net_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", "") != "evogate-net")
            throw CheckpointError("not an evogate-net artifact");
        if (j.value("version", 0) != 1)
            throw CheckpointError("unsupported evogate-net version");
        NetShape shape;
        shape.input_dim = j["shape"]["input_dim"].get<int>();
        shape.feature_widths = j["shape"]["feature_widths"].get<std::vector<int>>();
        shape.head_hidden = j["shape"]["head_hidden"].get<int>();
        shape.num_heads = j["shape"]["num_heads"].get<int>();
        double rate = hex_double(j["dropout_rate"].get<std::string>());
        Rng dummy(0);
        ComparatorNet net = ComparatorNet::init(shape, rate, dummy);
        std::vector<double> params = hex_doubles(j["data"].get<std::string>());
        if (params.size() != net.param_count())
            throw CheckpointError("tensor dump does not match the declared shape");
        net.params() = std::move(params);
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed net artifact: ") + e.what());
    }
}

// --- history / summary -------------------------------------------------------

std::string history_tsv(const RunResult& result, int top_m) {
    std::string out = "# evogate-history v1 top_m=" + std::to_string(top_m) + "\n";
    out +=
        "iteration\tbest_cost\tavg_top_m_cost\tsimulations\tgate_queries\tretrainings\t"
        "fallback\tcritical_specs\n";
    for (const auto& r : result.history) {
        out += std::to_string(r.iteration);
        out += '\t';
        out += format_double(r.best_cost);
        out += '\t';
        out += format_double(r.avg_top_m);
        out += '\t';
        out += std::to_string(r.simulations);
        out += '\t';
        out += std::to_string(r.gate_queries);
        out += '\t';
        out += std::to_string(r.retrainings);
        out += '\t';
        out += r.fallback_used ? '1' : '0';
        out += '\t';
        for (std::size_t i = 0; i < r.critical.size(); ++i) {
            if (i) out += ';';
            out += r.critical[i];
        }
        out += '\n';
    }
    return out;
}

nlohmann::json summary_json(const EngineConfig& cfg, const RunResult& result) {
    nlohmann::json j;
    j["format"] = "evogate-summary";
    j["version"] = 1;
    j["mode"] = to_string(cfg.mode);
    j["status"] = to_string(result.status);
    j["solved"] = result.solved;
    j["iterations"] = result.iterations();
    j["simulations"] = result.simulations;
    j["gate_queries"] = result.gate_queries;
    j["retrainings"] = result.retrainings;
    if (result.solved)
        j["sims_to_first_solve"] = result.sims_to_first_solve;
    else
        j["sims_to_first_solve"] = nullptr;
    j["fallback_iterations"] = result.fallback_iterations;
    j["best_cost"] = result.best_cost;
    j["incidents"] = result.incidents;
    return j;
}

// --- engine state -----------------------------------------------------------

namespace {

struct EngineState {
    EngineConfig cfg;
    std::uint64_t problem_hash = 0;
    int iteration = 0;  // last completed iteration
    Buffer buffer;
    CriticalSpecList cs;
    std::optional<ComparatorNet> net;
    Rng rng_evo, rng_train, rng_gate;
    std::uint64_t simulations = 0, gate_queries = 0, retrainings = 0;
    std::uint64_t sims_to_first_solve = 0;  // 0 = no cost-0 design simulated yet
    std::uint64_t fallback_iterations = 0;
    std::vector<IterationRecord> history;
    std::vector<std::string> incidents;
};

double best_cost_of(const Buffer& buffer) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& d : buffer.designs()) best = std::min(best, d.cost);
    return best;
}

const EvaluatedDesign* best_design_of(const Buffer& buffer) {
    const EvaluatedDesign* best = nullptr;
    for (const auto& d : buffer.designs())
        if (!best || d.cost < best->cost) best = &d;
    return best;
}

double avg_top_m_cost(const Buffer& buffer, int top_m) {
    std::vector<double> costs;
    costs.reserve(buffer.size());
    for (const auto& d : buffer.designs()) costs.push_back(d.cost);
    std::stable_sort(costs.begin(), costs.end());
    std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(top_m), costs.size());
    if (m == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += costs[i];
    return sum / static_cast<double>(m);
}

// Commits one simulated design: counts it and tracks the first solution.
EvaluatedDesign commit_measurement(EngineState& st, const SpecList& specs, DesignPoint point,
                                   Measurement m) {
    EvaluatedDesign d = make_evaluated(std::move(point), std::move(m), specs);
    st.simulations += 1;
    if (d.cost == 0.0 && st.sims_to_first_solve == 0)
        st.sims_to_first_solve = st.simulations;
    return d;
}

void push_record(EngineState& st) {
    IterationRecord r;
    r.iteration = st.iteration;
    r.best_cost = best_cost_of(st.buffer);
    r.avg_top_m = avg_top_m_cost(st.buffer, st.cfg.top_m);
    r.simulations = st.simulations;
    r.gate_queries = st.gate_queries;
    r.retrainings = st.retrainings;
    r.critical = st.cs.names();
    st.history.push_back(std::move(r));
}

nlohmann::json checkpoint_json(const EngineState& st) {
    nlohmann::json j;
    j["format"] = "evogate-checkpoint";
    j["version"] = 1;
    j["config"] = engine_config_to_json(st.cfg);
    j["problem_hash"] = st.problem_hash;
    j["iteration"] = st.iteration;
    j["sims_to_first_solve"] = st.sims_to_first_solve;
    j["counters"] = {{"simulations", st.simulations},
                     {"gate_queries", st.gate_queries},
                     {"retrainings", st.retrainings},
                     {"fallback_iterations", st.fallback_iterations}};
    j["cs"] = st.cs.names();
    j["rng"] = {{"evo", st.rng_evo.state()},
                {"train", st.rng_train.state()},
                {"gate", st.rng_gate.state()}};
    nlohmann::json buffer = nlohmann::json::array();
    for (const auto& d : st.buffer.designs()) {
        nlohmann::json metrics;
        for (const auto& [name, value] : d.measurement.values) metrics[name] = double_hex(value);
        buffer.push_back({{"indices", d.point.indices}, {"metrics", metrics}});
    }
    j["buffer"] = buffer;
    j["net"] = st.net ? net_to_json(*st.net, st.cfg.seed) : nlohmann::json(nullptr);
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& r : st.history)
        hist.push_back({{"iteration", r.iteration},
                        {"best_cost", double_hex(r.best_cost)},
                        {"avg_top_m", double_hex(r.avg_top_m)},
                        {"simulations", r.simulations},
                        {"gate_queries", r.gate_queries},
                        {"retrainings", r.retrainings},
                        {"critical", r.critical},
                        {"fallback", r.fallback_used}});
    j["history"] = hist;
    j["incidents"] = st.incidents;
    return j;
}

EngineState state_from_checkpoint(const nlohmann::json& j, const Problem& problem) {
    try {
        if (j.value("format", "") != "evogate-checkpoint")
            throw CheckpointError("not an evogate checkpoint");
        if (j.value("version", 0) != 1)
            throw CheckpointError("unsupported checkpoint version");
        EngineState st;
        st.cfg = engine_config_from_json(j.at("config"));
        st.cfg.validate();
        st.problem_hash = j.at("problem_hash").get<std::uint64_t>();
        if (st.problem_hash != problem.hash())
            throw CheckpointError("checkpoint was taken on a different problem");
        st.iteration = j.at("iteration").get<int>();
        st.sims_to_first_solve = j.at("sims_to_first_solve").get<std::uint64_t>();
        st.simulations = j.at("counters").at("simulations").get<std::uint64_t>();
        st.gate_queries = j.at("counters").at("gate_queries").get<std::uint64_t>();
        st.retrainings = j.at("counters").at("retrainings").get<std::uint64_t>();
        st.fallback_iterations = j.at("counters").at("fallback_iterations").get<std::uint64_t>();
        for (const auto& name : j.at("cs")) {
            std::string n = name.get<std::string>();
            bool known = false;
            for (const auto& s : problem.specs) known = known || s.name == n;
            if (!known) throw CheckpointError("critical spec '" + n + "' unknown to the problem");
            st.cs.append(n);
        }
        st.rng_evo.set_state(j.at("rng").at("evo").get<std::uint64_t>());
        st.rng_train.set_state(j.at("rng").at("train").get<std::uint64_t>());
        st.rng_gate.set_state(j.at("rng").at("gate").get<std::uint64_t>());
        for (const auto& entry : j.at("buffer")) {
            DesignPoint p{entry.at("indices").get<std::vector<int>>()};
            check_point(p, problem.space);
            Measurement m;
            for (auto it = entry.at("metrics").begin(); it != entry.at("metrics").end(); ++it)
                m.values[it.key()] = hex_double(it.value().get<std::string>());
            if (!st.buffer.insert(make_evaluated(std::move(p), std::move(m), problem.specs)))
                throw CheckpointError("duplicate design in checkpoint buffer");
        }
        if (!j.at("net").is_null()) st.net = net_from_json(j.at("net"));
        if (st.cfg.mode == Mode::Dnn && !st.net && best_cost_of(st.buffer) != 0.0)
            throw CheckpointError("dnn checkpoint lacks network parameters");
        for (const auto& rec : j.at("history")) {
            IterationRecord r;
            r.iteration = rec.at("iteration").get<int>();
            r.best_cost = hex_double(rec.at("best_cost").get<std::string>());
            r.avg_top_m = hex_double(rec.at("avg_top_m").get<std::string>());
            r.simulations = rec.at("simulations").get<std::uint64_t>();
            r.gate_queries = rec.at("gate_queries").get<std::uint64_t>();
            r.retrainings = rec.at("retrainings").get<std::uint64_t>();
            r.critical = rec.at("critical").get<std::vector<std::string>>();
            r.fallback_used = rec.at("fallback").get<bool>();
            st.history.push_back(std::move(r));
        }
        st.incidents = j.at("incidents").get<std::vector<std::string>>();
        return st;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ContractError& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace

// --- population / gating ------------------------------------------------------

Buffer init_population(const DesignSpace& space, const SpecList& specs, Evaluator& evaluator,
                       std::size_t size, Rng& rng, std::uint64_t* simulations,
                       std::uint64_t* sims_to_first_solve) {
    if (size < 2) throw ContractError("init_population: size must be >= 2");

    std::set<std::vector<int>> seen;
    std::vector<DesignPoint> points;
    std::size_t attempts = 0;
    std::size_t max_attempts = size * 100 + 1000;
    while (points.size() < size) {
        if (++attempts > max_attempts)
            throw ContractError(
                "init_population: could not draw enough distinct designs (space too small?)");
        DesignPoint p;
        p.indices.resize(space.params.size());
        for (std::size_t j = 0; j < space.params.size(); ++j)
            p.indices[j] = static_cast<int>(rng.uniform_index(space.params[j].grid.size()));
        if (seen.insert(p.indices).second) points.push_back(std::move(p));
    }

    auto outcomes = evaluator.evaluate_batch(points);
    Buffer buffer;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!outcomes[i].ok())
            throw EvalError("init_population: evaluation failed for design #" +
                            std::to_string(i) + ": " + outcomes[i].error);
        EvaluatedDesign d = make_evaluated(points[i], std::move(*outcomes[i].measurement), specs);
        if (simulations) {
            *simulations += 1;
            if (d.cost == 0.0 && sims_to_first_solve && *sims_to_first_solve == 0)
                *sims_to_first_solve = *simulations;
        }
        buffer.insert(std::move(d));
    }
    return buffer;
}

bool gate_dnn(const ComparatorNet& net, const std::vector<double>& candidate_enc,
              const std::vector<double>& ref_enc, const CriticalSpecList& cs,
              const SpecList& specs, const EngineConfig& cfg, Rng& rng,
              std::vector<double>* probs_out) {
    if (cs.empty()) return true;  // pre-critical phase
    std::vector<double> probs = net.mc_predict(candidate_enc, ref_enc, cfg.train.mc_samples, rng);
    if (probs_out) *probs_out = probs;
    for (std::size_t idx : cs.indices_in(specs))
        if (!(probs[idx] > cfg.approval_threshold)) return false;
    return true;
}

namespace {

bool beats_reference(const Measurement& cand, const EvaluatedDesign& ref,
                     const CriticalSpecList& cs, const SpecList& specs) {
    for (std::size_t idx : cs.indices_in(specs)) {
        double cv = cand.at(specs[idx].name);
        double rv = ref.measurement.at(specs[idx].name);
        bool better = specs[idx].direction == Direction::AtLeast ? cv > rv : cv < rv;
        if (!better) return false;
    }
    return true;
}

void retrain(EngineState& st, const Problem& problem, int epochs) {
    TrainConfig tc = st.cfg.train;
    tc.epochs_per_update = epochs;
    auto pairs = make_pairs_capped(st.buffer, problem.specs, problem.space,
                                   tc.max_pairs_per_update, st.rng_train);
    st.net->train(pairs, tc, st.rng_train);
    st.retrainings += 1;
}

RunResult run_loop(EngineState& st, const Problem& problem, Evaluator& evaluator,
                   const CheckpointSink& sink) {
    const EngineConfig& cfg = st.cfg;
    const SpecList& specs = problem.specs;
    RunStatus status = RunStatus::MaxIterations;

    for (;;) {
        if (best_cost_of(st.buffer) == 0.0) {
            status = RunStatus::Solved;
            break;
        }
        if (st.iteration >= cfg.max_iterations) {
            status = RunStatus::MaxIterations;
            break;
        }
        int iteration = st.iteration + 1;

        st.cs = update_critical(st.buffer, specs, st.cs, static_cast<std::size_t>(cfg.reference_rank));
        EvaluatedDesign ref = select_reference(st.buffer, specs, st.cs,
                                               static_cast<std::size_t>(cfg.reference_rank));
        std::vector<double> ref_enc = encode(ref.point, problem.space);
        auto cs_idx = st.cs.indices_in(specs);

        // Candidate gathering. Approved points are simulated afterwards in
        // generation order (oracle mode simulates inside the gate instead).
        std::vector<DesignPoint> approved;
        std::vector<EvaluatedDesign> offspring;  // oracle mode only
        struct Scored {
            double min_prob;
            std::size_t order;
            DesignPoint point;
        };
        std::vector<Scored> scored;
        std::set<std::vector<int>> pending;
        int iter_queries = 0;
        std::size_t duplicate_streak = 0;
        std::size_t generated = 0;
        bool exhausted = false;
        bool no_novel_candidates = false;
        bool fallback_used = false;

        std::size_t want = static_cast<std::size_t>(cfg.n_add);
        while ((cfg.mode == Mode::Oracle ? offspring.size() : approved.size()) < want) {
            if (iter_queries >= cfg.max_gate_queries_per_iteration) {
                exhausted = true;
                break;
            }
            DesignPoint cand = generate(st.buffer, problem.space, cfg.evo, st.rng_evo);
            if (st.buffer.contains(cand) || pending.count(cand.indices)) {
                if (++duplicate_streak > 2000) {
                    no_novel_candidates = true;  // nothing novel left to propose
                    break;
                }
                continue;
            }
            duplicate_streak = 0;
            std::size_t order = generated++;

            switch (cfg.mode) {
                case Mode::Vanilla:
                    approved.push_back(cand);
                    pending.insert(cand.indices);
                    break;
                case Mode::Dnn: {
                    std::vector<double> probs;
                    std::vector<double> cand_enc = encode(cand, problem.space);
                    bool ok;
                    if (st.cs.empty()) {
                        ok = true;
                    } else {
                        ok = gate_dnn(*st.net, cand_enc, ref_enc, st.cs, specs, cfg, st.rng_gate,
                                      &probs);
                        st.gate_queries += 1;
                        ++iter_queries;
                    }
                    if (ok) {
                        approved.push_back(cand);
                        pending.insert(cand.indices);
                    } else {
                        double min_prob = 1.0;
                        for (std::size_t idx : cs_idx) min_prob = std::min(min_prob, probs[idx]);
                        scored.push_back({min_prob, order, std::move(cand)});
                    }
                    break;
                }
                case Mode::Oracle: {
                    st.gate_queries += 1;
                    ++iter_queries;
                    Measurement m;
                    try {
                        m = evaluator.evaluate(cand);
                    } catch (const EvalError& e) {
                        st.incidents.push_back("iteration " + std::to_string(iteration) +
                                               ": candidate evaluation failed: " + e.what());
                        continue;
                    }
                    EvaluatedDesign d = commit_measurement(st, specs, cand, std::move(m));
                    if (st.cs.empty() || beats_reference(d.measurement, ref, st.cs, specs)) {
                        pending.insert(d.point.indices);
                        offspring.push_back(std::move(d));
                    }
                    break;
                }
            }
        }

        // Budget ran out mid-iteration: in dnn mode fall back to the rejected
        // candidates the gate liked most, so the run never stalls.
        if (exhausted && cfg.mode == Mode::Dnn && approved.size() < want && !scored.empty()) {
            std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
                if (a.min_prob != b.min_prob) return a.min_prob > b.min_prob;
                return a.order < b.order;
            });
            for (const auto& s : scored) {
                if (approved.size() >= want) break;
                if (pending.count(s.point.indices)) continue;
                pending.insert(s.point.indices);
                approved.push_back(s.point);
                fallback_used = true;
            }
        }

        if (cfg.mode != Mode::Oracle && !approved.empty()) {
            auto outcomes = evaluator.evaluate_batch(approved);
            for (std::size_t i = 0; i < approved.size(); ++i) {
                if (!outcomes[i].ok()) {
                    st.incidents.push_back("iteration " + std::to_string(iteration) +
                                           ": candidate evaluation failed: " + outcomes[i].error);
                    continue;
                }
                offspring.push_back(commit_measurement(st, specs, approved[i],
                                                       std::move(*outcomes[i].measurement)));
            }
            if (!approved.empty() && offspring.empty()) {
                // Every simulation of this batch failed; checkpointed state
                // from the previous iteration remains valid for resume.
                throw EvalError("engine: evaluator failed for the entire batch of iteration " +
                                std::to_string(iteration));
            }
        }

        st.buffer = select(st.buffer, offspring, static_cast<std::size_t>(cfg.resolved_mu()));
        if (cfg.mode == Mode::Dnn && !offspring.empty())
            retrain(st, problem, cfg.train.epochs_per_update);
        if (fallback_used) st.fallback_iterations += 1;

        st.iteration = iteration;
        push_record(st);
        st.history.back().fallback_used = fallback_used;
        if (sink) sink(checkpoint_json(st), st.iteration);

        // A budget-exhausted iteration is not terminal: the next one draws
        // fresh candidates. Only a dried-up candidate stream is.
        if (offspring.empty() && no_novel_candidates) {
            status = RunStatus::GateExhausted;
            break;
        }
    }

    RunResult result;
    result.status = status;
    result.solved = status == RunStatus::Solved;
    result.history = st.history;
    result.simulations = st.simulations;
    result.gate_queries = st.gate_queries;
    result.retrainings = st.retrainings;
    result.sims_to_first_solve = st.sims_to_first_solve;
    result.fallback_iterations = st.fallback_iterations;
    result.incidents = st.incidents;
    result.best_cost = best_cost_of(st.buffer);
    if (const EvaluatedDesign* best = best_design_of(st.buffer)) result.best_design = *best;
    return result;
}

}  // namespace

RunResult run(const EngineConfig& cfg, const Problem& problem, Evaluator& evaluator,
              const CheckpointSink& sink) {
    cfg.validate();
    problem.validate();
    parallel::set_threads(cfg.threads);

    EngineState st;
    st.cfg = cfg;
    st.problem_hash = problem.hash();
    st.rng_evo = Rng::derive(cfg.seed, "evolution");
    st.rng_train = Rng::derive(cfg.seed, "training");
    st.rng_gate = Rng::derive(cfg.seed, "gating");

    Rng rng_init = Rng::derive(cfg.seed, "population");
    st.buffer = init_population(problem.space, problem.specs, evaluator,
                                static_cast<std::size_t>(cfg.initial_population), rng_init,
                                &st.simulations, &st.sims_to_first_solve);

    if (cfg.mode == Mode::Dnn && best_cost_of(st.buffer) != 0.0) {
        NetShape shape;
        shape.input_dim = static_cast<int>(problem.space.params.size());
        shape.num_heads = static_cast<int>(problem.specs.size());
        Rng rng_init_net = Rng::derive(cfg.seed, "net-init");
        st.net = ComparatorNet::init(shape, cfg.train.dropout_rate, rng_init_net);
        retrain(st, problem, cfg.train.pretrain_epochs);
    }

    push_record(st);  // iteration 0: state after initialization (and pretraining)
    if (sink) sink(checkpoint_json(st), 0);

    return run_loop(st, problem, evaluator, sink);
}

RunResult resume(const nlohmann::json& checkpoint, const Problem& problem, Evaluator& evaluator,
                 const CheckpointSink& sink, const EngineConfig* expected) {
    EngineState st = state_from_checkpoint(checkpoint, problem);
    if (expected && engine_config_to_json(*expected) != engine_config_to_json(st.cfg))
        throw CheckpointError(
            "checkpoint configuration does not match the requested one (mode/seed/parameters)");
    parallel::set_threads(st.cfg.threads);
    return run_loop(st, problem, evaluator, sink);
}

}  // namespace evogate
