#include <cmath>
#include <cstring>
#include <map>

#include "doctest.h"
#include "evogate/config.hpp"
#include "evogate/engine.hpp"

using namespace evogate;

namespace {

// Synthetic problem whose evaluator we fully control.
struct FixedEvaluator : Evaluator {
    double gain_offset = 0.0;
    Measurement evaluate(const DesignPoint& point) override {
        Measurement m;
        m.values["gain"] = gain_offset + point.indices[0];
        m.values["power"] = point.indices[1];
        return m;
    }
    std::string describe() const override { return "fixed"; }
};

Problem two_metric_problem(double gain_threshold, double power_threshold) {
    Problem p;
    p.name = "unit";
    p.space.params.push_back({"x", integer_grid(0, 99)});
    p.space.params.push_back({"y", integer_grid(0, 99)});
    p.specs = {{"gain", Direction::AtLeast, gain_threshold, 1.0},
               {"power", Direction::AtMost, power_threshold, 1.0}};
    return p;
}

EngineConfig small_cfg(Mode mode, std::uint64_t seed = 1) {
    EngineConfig cfg;
    cfg.mode = mode;
    cfg.seed = seed;
    cfg.initial_population = 20;
    cfg.reference_rank = 5;
    cfg.n_add = 3;
    cfg.max_iterations = 40;
    cfg.max_gate_queries_per_iteration = 400;
    cfg.top_m = 5;
    cfg.threads = 1;
    cfg.train.epochs_per_update = 3;
    cfg.train.pretrain_epochs = 3;
    return cfg;
}

std::uint64_t hex_u64(const std::string& s) {
    std::uint64_t bits = 0;
    for (char c : s) {
        bits <<= 4;
        bits |= static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
    }
    return bits;
}

double hex_to_double(const std::string& s) {
    std::uint64_t bits = hex_u64(s);
    double d;
    static_assert(sizeof d == sizeof bits);
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

}  // namespace

TEST_CASE("an evaluator satisfying every spec solves at initialization") {
    Problem p = two_metric_problem(-1000.0, 1e6);  // everything satisfies
    FixedEvaluator eval;
    RunResult r = run(small_cfg(Mode::Dnn), p, eval);
    CHECK(r.status == RunStatus::Solved);
    CHECK(r.solved);
    CHECK(r.history.size() == 1);  // only the iteration-0 record
    CHECK(r.simulations == 20);
    CHECK(r.sims_to_first_solve == 1);
    CHECK(r.retrainings == 0);  // pretraining skipped: nothing to gate
    CHECK(r.best_cost == 0.0);
}

TEST_CASE("vanilla accounting: simulations = initial + n_add * iterations, no queries") {
    Problem p = two_metric_problem(95.0, 3.0);  // hard corner
    FixedEvaluator eval;
    EngineConfig cfg = small_cfg(Mode::Vanilla, 7);
    RunResult r = run(cfg, p, eval);
    CHECK(r.gate_queries == 0);
    CHECK(r.retrainings == 0);
    CHECK(r.simulations ==
          static_cast<std::uint64_t>(cfg.initial_population) +
              static_cast<std::uint64_t>(cfg.n_add) * static_cast<std::uint64_t>(r.iterations()));
}

TEST_CASE("dnn accounting: simulations bounded by queries plus the initial population") {
    Problem p = two_metric_problem(95.0, 3.0);
    FixedEvaluator eval;
    RunResult r = run(small_cfg(Mode::Dnn, 3), p, eval);
    CHECK(r.simulations <= r.gate_queries + 20);
    CHECK(r.retrainings >= 1);  // pretrain at minimum
    // counters are monotone across records
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        CHECK(r.history[i].simulations >= r.history[i - 1].simulations);
        CHECK(r.history[i].gate_queries >= r.history[i - 1].gate_queries);
        CHECK(r.history[i].retrainings >= r.history[i - 1].retrainings);
        // cs list is append-only
        const auto& prev = r.history[i - 1].critical;
        const auto& cur = r.history[i].critical;
        REQUIRE(cur.size() >= prev.size());
        for (std::size_t s = 0; s < prev.size(); ++s) CHECK(cur[s] == prev[s]);
    }
    // best cost is monotone nonincreasing (elitism)
    for (std::size_t i = 1; i < r.history.size(); ++i)
        CHECK(r.history[i].best_cost <= r.history[i - 1].best_cost);
}

TEST_CASE("oracle mode: every inserted design strictly beats the iteration reference") {
    Problem p = two_metric_problem(90.0, 8.0);
    FixedEvaluator eval;
    EngineConfig cfg = small_cfg(Mode::Oracle, 11);

    // Reconstruct each iteration from its checkpoint and check insertions.
    std::map<int, nlohmann::json> checkpoints;
    RunResult r = run(cfg, p, eval, [&](const nlohmann::json& j, int it) {
        checkpoints[it] = j;
    });
    REQUIRE(r.iterations() >= 1);

    auto buffer_points = [&](const nlohmann::json& ckpt) {
        std::map<std::vector<int>, std::map<std::string, double>> designs;
        for (const auto& entry : ckpt.at("buffer")) {
            std::map<std::string, double> metrics;
            for (auto it = entry.at("metrics").begin(); it != entry.at("metrics").end(); ++it)
                metrics[it.key()] = hex_to_double(it.value().get<std::string>());
            designs[entry.at("indices").get<std::vector<int>>()] = metrics;
        }
        return designs;
    };

    int checked = 0;
    for (int it = 1; it <= r.iterations(); ++it) {
        REQUIRE(checkpoints.count(it - 1));
        REQUIRE(checkpoints.count(it));
        auto prev = buffer_points(checkpoints[it - 1]);
        auto cur = buffer_points(checkpoints[it]);
        // rebuild the reference: previous buffer sorted under this iteration's cs
        Buffer prev_buffer;
        for (const auto& entry : checkpoints[it - 1].at("buffer")) {
            Measurement m;
            for (auto mit = entry.at("metrics").begin(); mit != entry.at("metrics").end(); ++mit)
                m.values[mit.key()] = hex_to_double(mit.value().get<std::string>());
            prev_buffer.insert(make_evaluated(
                DesignPoint{entry.at("indices").get<std::vector<int>>()}, m, p.specs));
        }
        CriticalSpecList cs;
        for (const auto& name : r.history[static_cast<std::size_t>(it)].critical)
            cs.append(name);
        const EvaluatedDesign& ref = select_reference(prev_buffer, p.specs, cs,
                                                      static_cast<std::size_t>(cfg.reference_rank));
        for (const auto& [indices, metrics] : cur) {
            if (prev.count(indices)) continue;  // survivor, not an insertion
            ++checked;
            for (const auto& name : cs.names()) {
                const SpecDef* spec = nullptr;
                for (const auto& s : p.specs)
                    if (s.name == name) spec = &s;
                REQUIRE(spec != nullptr);
                double cand = metrics.at(name);
                double rv = ref.measurement.at(name);
                if (spec->direction == Direction::AtLeast)
                    CHECK(cand > rv);
                else
                    CHECK(cand < rv);
            }
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("identical seeds reproduce the history byte for byte") {
    Problem p = two_metric_problem(92.0, 5.0);
    FixedEvaluator e1, e2;
    EngineConfig cfg = small_cfg(Mode::Dnn, 21);
    cfg.max_iterations = 8;
    RunResult a = run(cfg, p, e1);
    RunResult b = run(cfg, p, e2);
    CHECK(history_tsv(a, cfg.top_m) == history_tsv(b, cfg.top_m));
    CHECK(a.simulations == b.simulations);
    CHECK(a.gate_queries == b.gate_queries);

    // thread budget must not change results either
    EngineConfig threaded = cfg;
    threaded.threads = 2;
    FixedEvaluator e3;
    RunResult c = run(threaded, p, e3);
    CHECK(history_tsv(a, cfg.top_m) == history_tsv(c, cfg.top_m));
}

TEST_CASE("checkpoint and resume reproduce the uninterrupted run exactly") {
    Problem p = two_metric_problem(92.0, 5.0);
    EngineConfig cfg = small_cfg(Mode::Dnn, 33);
    cfg.max_iterations = 9;

    FixedEvaluator e1;
    nlohmann::json mid;
    RunResult full = run(cfg, p, e1, [&](const nlohmann::json& j, int it) {
        if (it == 4) mid = j;
    });
    REQUIRE_FALSE(mid.is_null());

    FixedEvaluator e2;
    RunResult resumed = resume(mid, p, e2, nullptr, &cfg);
    CHECK(history_tsv(full, cfg.top_m) == history_tsv(resumed, cfg.top_m));
    CHECK(full.simulations == resumed.simulations);
    CHECK(full.gate_queries == resumed.gate_queries);
    CHECK(full.retrainings == resumed.retrainings);
    CHECK(full.status == resumed.status);

    SUBCASE("resume into a different mode is rejected") {
        EngineConfig other = cfg;
        other.mode = Mode::Vanilla;
        FixedEvaluator e3;
        CHECK_THROWS_AS(resume(mid, p, e3, nullptr, &other), CheckpointError);
    }

    SUBCASE("resume onto a different problem is rejected") {
        Problem q = two_metric_problem(50.0, 5.0);
        FixedEvaluator e3;
        CHECK_THROWS_AS(resume(mid, q, e3), CheckpointError);
    }

    SUBCASE("corrupt artifacts are parse errors") {
        FixedEvaluator e3;
        nlohmann::json bad = mid;
        bad["buffer"][0]["metrics"]["gain"] = "zz";
        CHECK_THROWS_AS(resume(bad, p, e3), CheckpointError);
        nlohmann::json not_ckpt = {{"format", "something-else"}};
        CHECK_THROWS_AS(resume(not_ckpt, p, e3), CheckpointError);
        nlohmann::json missing = mid;
        missing.erase("rng");
        CHECK_THROWS_AS(resume(missing, p, e3), CheckpointError);
    }
}

TEST_CASE("init_population draws distinct designs and errors on tiny spaces") {
    Problem p = two_metric_problem(50.0, 50.0);
    FixedEvaluator eval;
    Rng rng(5);
    std::uint64_t sims = 0, first = 0;
    Buffer b = init_population(p.space, p.specs, eval, 100, rng, &sims, &first);
    CHECK(b.size() == 100);
    CHECK(sims == 100);

    Rng rng2(5);
    std::uint64_t sims2 = 0, first2 = 0;
    Buffer b2 = init_population(p.space, p.specs, eval, 100, rng2, &sims2, &first2);
    for (std::size_t i = 0; i < b.size(); ++i)
        CHECK(b.at(i).point.indices == b2.at(i).point.indices);

    DesignSpace one_cell;
    one_cell.params.push_back({"x", {1.0}});
    SpecList specs = {{"gain", Direction::AtLeast, 0.0, 1.0}};
    struct OneEval : Evaluator {
        Measurement evaluate(const DesignPoint&) override {
            Measurement m;
            m.values["gain"] = 1.0;
            return m;
        }
        std::string describe() const override { return "one"; }
    } one_eval;
    Rng rng3(1);
    CHECK_THROWS_AS(init_population(one_cell, specs, one_eval, 2, rng3, nullptr, nullptr),
                    ContractError);
}

TEST_CASE("gate approves on empty cs and applies the forall rule otherwise") {
    Problem p = two_metric_problem(50.0, 50.0);
    NetShape shape;
    shape.input_dim = 2;
    shape.num_heads = 2;
    Rng nrng(4);
    ComparatorNet net = ComparatorNet::init(shape, 0.0, nrng);
    std::fill(net.params().begin(), net.params().end(), 0.0);  // all probs 0.5

    EngineConfig cfg = small_cfg(Mode::Dnn);
    std::vector<double> enc_a = {0.1, 0.2}, enc_b = {0.3, 0.4};

    CriticalSpecList empty;
    Rng grng(1);
    CHECK(gate_dnn(net, enc_a, enc_b, empty, p.specs, cfg, grng));

    CriticalSpecList cs;
    cs.append("gain");
    cfg.approval_threshold = 0.5;  // 0.5 > 0.5 fails the strict rule
    CHECK_FALSE(gate_dnn(net, enc_a, enc_b, cs, p.specs, cfg, grng));
    cfg.approval_threshold = 0.4;
    CHECK(gate_dnn(net, enc_a, enc_b, cs, p.specs, cfg, grng));
    cs.append("power");  // both heads sit at 0.5: forall still passes at 0.4
    CHECK(gate_dnn(net, enc_a, enc_b, cs, p.specs, cfg, grng));
}

TEST_CASE("run result summary serializes the counters") {
    Problem p = two_metric_problem(92.0, 5.0);
    FixedEvaluator eval;
    EngineConfig cfg = small_cfg(Mode::Vanilla, 9);
    cfg.max_iterations = 5;
    RunResult r = run(cfg, p, eval);
    nlohmann::json s = summary_json(cfg, r);
    CHECK(s["mode"] == "vanilla");
    CHECK(s["simulations"].get<std::uint64_t>() == r.simulations);
    CHECK(s["iterations"].get<int>() == r.iterations());
    std::string tsv = history_tsv(r, cfg.top_m);
    CHECK(tsv.find("# evogate-history v1") == 0);
    CHECK(tsv.find("iteration\tbest_cost") != std::string::npos);
}
