#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "evogate/domain.hpp"
#include "evogate/rng.hpp"
#include "json.hpp"

namespace evogate {

// One evaluation outcome: a measurement or an error description.
struct EvalOutcome {
    std::optional<Measurement> measurement;
    std::string error;  // set when measurement is empty

    bool ok() const { return measurement.has_value(); }
};

class Evaluator {
public:
    virtual ~Evaluator() = default;

    virtual Measurement evaluate(const DesignPoint& point) = 0;

    // Per-point outcomes; never throws for per-point failures. The base
    // implementation evaluates sequentially and captures EvalErrors.
    virtual std::vector<EvalOutcome> evaluate_batch(const std::vector<DesignPoint>& points);

    virtual std::string describe() const = 0;
};

// --- synthetic benchmark ---------------------------------------------------

// Closed-form "circuit-like" metric: a sum of signed terms, each a
// coefficient times a product of integer powers of the normalized parameters
// (u_j = 0.5 + normalized grid value, u in [0.5, 1.5]). Smooth, finite over
// the whole grid, and deterministic from the table seed alone.
struct MetricTerm {
    double coef = 0.0;
    std::vector<std::pair<int, int>> factors;  // (param index, exponent != 0)
};

struct MetricDef {
    std::string name;
    Direction direction = Direction::AtLeast;
    std::vector<MetricTerm> terms;
};

struct CalibrationInfo {
    std::uint64_t sample_seed = 0;
    std::size_t samples = 0;
    double target = 0.0;
    double achieved = 0.0;  // measured joint feasibility
};

class SyntheticBenchmark : public Evaluator {
public:
    // Generates the coefficient/exponent table from `table_seed`; thresholds
    // start unset (0) until calibrated or pinned.
    SyntheticBenchmark(std::string name, std::uint64_t table_seed, DesignSpace space,
                       std::vector<std::pair<std::string, Direction>> metric_names);

    Measurement evaluate(const DesignPoint& point) override;
    std::vector<EvalOutcome> evaluate_batch(const std::vector<DesignPoint>& points) override;
    std::string describe() const override;

    double metric_value(std::size_t metric, const DesignPoint& point) const;

    const std::string& name() const { return name_; }
    const DesignSpace& space() const { return space_; }
    const SpecList& specs() const { return specs_; }
    const std::vector<MetricDef>& metrics() const { return metrics_; }

    void set_thresholds(const std::vector<double>& thresholds, const CalibrationInfo& info);
    void set_latency_ms(int ms) { latency_ms_ = ms; }
    const CalibrationInfo& calibration() const { return calibration_; }

    // Per-metric marginal satisfaction at calibration scale 1; calibrate()
    // raises all of them to a common power. Values in (0, 1); biased profiles
    // concentrate the feasible set into a corner of the space.
    void set_marginal_bias(std::vector<double> bias);
    const std::vector<double>& marginal_bias() const { return marginal_bias_; }

    nlohmann::json manifest() const;

private:
    std::string name_;
    std::uint64_t table_seed_ = 0;
    DesignSpace space_;
    std::vector<MetricDef> metrics_;
    SpecList specs_;
    CalibrationInfo calibration_;
    std::vector<double> marginal_bias_;
    int latency_ms_ = 0;

    void value_row(const DesignPoint& point, double* out) const;
};

// Sets thresholds to per-metric quantiles of `sample_budget` uniform samples,
// bisecting the shared marginal quantile until the measured joint feasibility
// is as close to `target` as the sampling allows. Throws CalibrationError
// when the achieved rate is off by more than a factor of two.
CalibrationInfo calibrate(SyntheticBenchmark& bench, double feasibility_target,
                          std::size_t sample_budget);

// Measured fraction of `samples` uniform designs satisfying every spec.
double measure_feasibility(const SyntheticBenchmark& bench, std::size_t samples,
                           std::uint64_t sample_seed);

// Shipped benchmarks with pinned tables and thresholds.
std::unique_ptr<SyntheticBenchmark> make_benchmark(const std::string& name);
std::vector<std::string> builtin_benchmarks();

// --- BER / eye-height utility ----------------------------------------------

// Inverse complementary error function on (0, 2); erfc_inv(1) == 0 exactly.
double erfc_inv(double y);

// Minimum eye height for a target bit error rate:
//   eye = residual_offset + sensitivity + sqrt(2) * sigma_noise * erfc_inv(2 * ber)
double required_eye_height(double ber, double sigma_noise, double residual_offset,
                           double sensitivity);

// --- external evaluator ------------------------------------------------------

// Subprocess evaluator speaking a line-delimited JSON protocol (one request
// and one response object per line; see README for the schema).
struct ExternalEvaluatorSpec {
    std::string command;  // launched via /bin/sh -c
    int schema_version = 1;
    int timeout_ms = 10000;
    int max_retries = 2;
    int max_inflight = 4;

    void validate() const;
};

class ExternalEvaluator : public Evaluator {
public:
    ExternalEvaluator(ExternalEvaluatorSpec spec, DesignSpace space,
                      std::vector<std::string> metric_names);
    ~ExternalEvaluator() override;

    ExternalEvaluator(const ExternalEvaluator&) = delete;
    ExternalEvaluator& operator=(const ExternalEvaluator&) = delete;

    Measurement evaluate(const DesignPoint& point) override;
    std::vector<EvalOutcome> evaluate_batch(const std::vector<DesignPoint>& points) override;
    std::string describe() const override;

private:
    struct Process;

    ExternalEvaluatorSpec spec_;
    DesignSpace space_;
    std::vector<std::string> metric_names_;
    std::unique_ptr<Process> proc_;
    std::uint64_t next_id_ = 1;

    void ensure_process();
    void restart_process();
    nlohmann::json request_json(std::uint64_t id, const DesignPoint& point) const;
    Measurement parse_response(const nlohmann::json& resp) const;
    Measurement roundtrip(const DesignPoint& point);
};

}  // namespace evogate
