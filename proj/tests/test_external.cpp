#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "evogate/evaluators.hpp"

using namespace evogate;
namespace fs = std::filesystem;

namespace {

std::string mock_bin() {
    const char* env = std::getenv("EVOGATE_MOCK_BIN");
    REQUIRE_MESSAGE(env != nullptr, "EVOGATE_MOCK_BIN must point at evogate_mock_evaluator");
    return env;
}

DesignSpace ab_space() {
    DesignSpace space;
    space.params.push_back({"a", integer_grid(1, 10)});
    space.params.push_back({"b", step_grid(0.5, 5.0, 0.5)});
    return space;
}

ExternalEvaluatorSpec spec_for(const std::string& extra, int timeout_ms = 5000,
                               int max_retries = 2, int max_inflight = 1) {
    ExternalEvaluatorSpec spec;
    spec.command = mock_bin() + (extra.empty() ? "" : " " + extra);
    spec.timeout_ms = timeout_ms;
    spec.max_retries = max_retries;
    spec.max_inflight = max_inflight;
    return spec;
}

}  // namespace

TEST_CASE("echo mock round-trips parameter values as metrics") {
    ExternalEvaluator eval(spec_for(""), ab_space(), {"a", "b"});
    Measurement m = eval.evaluate(DesignPoint{{2, 3}});
    CHECK(m.values.at("a") == 3.0);   // grid value of index 2
    CHECK(m.values.at("b") == 2.0);   // 0.5 + 3*0.5
}

TEST_CASE("a mock that times out once answers after one retry") {
    fs::path marker = fs::temp_directory_path() /
                      ("evogate-sleep-marker-" + std::to_string(::getpid()) + ".tmp");
    fs::remove(marker);
    ExternalEvaluator eval(
        spec_for("--sleep-once-marker " + marker.string() + " --sleep-ms 2000",
                 /*timeout_ms=*/250, /*max_retries=*/2),
        ab_space(), {"a", "b"});
    Measurement m = eval.evaluate(DesignPoint{{0, 0}});
    CHECK(m.values.at("a") == 1.0);
    CHECK(fs::exists(marker));  // the first (timed-out) attempt did run
    fs::remove(marker);
}

TEST_CASE("a missing metric is a schema error") {
    ExternalEvaluator eval(spec_for("--drop-metric b", 2000, 1), ab_space(), {"a", "b"});
    try {
        eval.evaluate(DesignPoint{{0, 0}});
        FAIL("expected ExternalEvalError");
    } catch (const ExternalEvalError& e) {
        CHECK(e.fault() == ExternalFault::MalformedResponse);
        CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
}

TEST_CASE("a declared evaluator failure is reported and not retried") {
    ExternalEvaluator eval(spec_for("--error-id 1"), ab_space(), {"a", "b"});
    CHECK_THROWS_WITH_AS(eval.evaluate(DesignPoint{{0, 0}}),
                         doctest::Contains("declared failure"), EvalError);
    // the process is still healthy; the next request uses id 2
    Measurement m = eval.evaluate(DesignPoint{{1, 1}});
    CHECK(m.values.at("a") == 2.0);
}

TEST_CASE("an exiting process surfaces as a process fault after retries") {
    ExternalEvaluator eval(spec_for("--exit-after 0", 2000, 1), ab_space(), {"a", "b"});
    try {
        eval.evaluate(DesignPoint{{0, 0}});
        FAIL("expected ExternalEvalError");
    } catch (const ExternalEvalError& e) {
        CHECK(e.fault() == ExternalFault::ProcessExit);
    }
}

TEST_CASE("a process that exits mid-stream recovers by restart") {
    // exits after each response; every request needs a fresh process
    ExternalEvaluator eval(spec_for("--exit-after 1", 2000, 3), ab_space(), {"a", "b"});
    for (int i = 0; i < 3; ++i) {
        Measurement m = eval.evaluate(DesignPoint{{i, i}});
        CHECK(m.values.at("a") == 1.0 + i);
    }
}

TEST_CASE("pipelined batch preserves request order in its outcomes") {
    ExternalEvaluator eval(spec_for("", 5000, 2, /*max_inflight=*/4), ab_space(), {"a", "b"});
    std::vector<DesignPoint> points;
    for (int i = 0; i < 10; ++i) points.push_back(DesignPoint{{i % 10, i % 10}});
    auto outcomes = eval.evaluate_batch(points);
    REQUIRE(outcomes.size() == points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        REQUIRE(outcomes[i].ok());
        CHECK(outcomes[i].measurement->values.at("a") == 1.0 + (i % 10));
    }
}

TEST_CASE("batch with a declared failure keeps the other outcomes") {
    ExternalEvaluator eval(spec_for("--error-id 2", 5000, 2, 4), ab_space(), {"a", "b"});
    std::vector<DesignPoint> points = {DesignPoint{{0, 0}}, DesignPoint{{1, 1}},
                                       DesignPoint{{2, 2}}};
    auto outcomes = eval.evaluate_batch(points);
    int failed = 0;
    for (const auto& o : outcomes)
        if (!o.ok()) ++failed;
    CHECK(failed == 1);
}
