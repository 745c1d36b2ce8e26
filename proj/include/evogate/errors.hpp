#pragma once

#include <stdexcept>
#include <string>

namespace evogate {

// Precondition / API misuse. Callers are expected not to trigger these.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Problem with user-supplied configuration (bad field, missing key, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime evaluation failure (non-finite metric, evaluator fault, ...).
class EvalError : public std::runtime_error {
public:
    explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

// Loss became non-finite during training.
class TrainingDivergence : public std::runtime_error {
public:
    explicit TrainingDivergence(const std::string& what) : std::runtime_error(what) {}
};

// Benchmark threshold calibration could not hit its target.
class CalibrationError : public std::runtime_error {
public:
    explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint artifact unreadable or incompatible.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// External evaluator failures, kept distinct so callers can react per kind.
enum class ExternalFault { Timeout, MalformedResponse, ProcessExit };

class ExternalEvalError : public EvalError {
public:
    ExternalEvalError(ExternalFault fault, const std::string& what)
        : EvalError(what), fault_(fault) {}
    ExternalFault fault() const { return fault_; }

private:
    ExternalFault fault_;
};

}  // namespace evogate
