#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <unordered_map>

#include "evogate/evaluators.hpp"

namespace evogate {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t ms_until(Clock::time_point deadline) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now())
        .count();
}

}  // namespace

void ExternalEvaluatorSpec::validate() const {
    if (command.empty()) throw ConfigError("evaluator.command must not be empty");
    if (schema_version != 1) throw ConfigError("evaluator.schema_version: only 1 is supported");
    if (timeout_ms < 1) throw ConfigError("evaluator.timeout_ms must be >= 1");
    if (max_retries < 0) throw ConfigError("evaluator.max_retries must be >= 0");
    if (max_inflight < 1) throw ConfigError("evaluator.max_inflight must be >= 1");
}

struct ExternalEvaluator::Process {
    pid_t pid = -1;
    int to_child = -1;    // we write requests here
    int from_child = -1;  // we read responses here
    std::string rx;       // partial line buffer

    explicit Process(const std::string& command) {
        int in_pipe[2];
        int out_pipe[2];
        if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
            throw ExternalEvalError(ExternalFault::ProcessExit, "pipe() failed");
        pid = fork();
        if (pid < 0) throw ExternalEvalError(ExternalFault::ProcessExit, "fork() failed");
        if (pid == 0) {
            dup2(in_pipe[0], STDIN_FILENO);
            dup2(out_pipe[1], STDOUT_FILENO);
            close(in_pipe[0]);
            close(in_pipe[1]);
            close(out_pipe[0]);
            close(out_pipe[1]);
            execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(in_pipe[0]);
        close(out_pipe[1]);
        to_child = in_pipe[1];
        from_child = out_pipe[0];
    }

    ~Process() { shutdown(); }

    void shutdown() {
        if (to_child >= 0) close(to_child);
        if (from_child >= 0) close(from_child);
        to_child = from_child = -1;
        if (pid > 0) {
            kill(pid, SIGKILL);
            int status = 0;
            waitpid(pid, &status, 0);
            pid = -1;
        }
    }

    void send_line(const std::string& line) {
        std::string buf = line + "\n";
        std::size_t off = 0;
        while (off < buf.size()) {
            ssize_t n = write(to_child, buf.data() + off, buf.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ExternalEvalError(ExternalFault::ProcessExit,
                                        "write to evaluator failed: " + std::string(strerror(errno)));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    // One complete line, or throws Timeout / ProcessExit.
    std::string read_line(Clock::time_point deadline) {
        for (;;) {
            auto nl = rx.find('\n');
            if (nl != std::string::npos) {
                std::string line = rx.substr(0, nl);
                rx.erase(0, nl + 1);
                return line;
            }
            std::int64_t wait_ms = ms_until(deadline);
            if (wait_ms <= 0)
                throw ExternalEvalError(ExternalFault::Timeout, "evaluator response timed out");
            pollfd pfd{from_child, POLLIN, 0};
            int pr = poll(&pfd, 1, static_cast<int>(wait_ms));
            if (pr < 0) {
                if (errno == EINTR) continue;
                throw ExternalEvalError(ExternalFault::ProcessExit, "poll() failed");
            }
            if (pr == 0)
                throw ExternalEvalError(ExternalFault::Timeout, "evaluator response timed out");
            char chunk[4096];
            ssize_t n = read(from_child, chunk, sizeof chunk);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ExternalEvalError(ExternalFault::ProcessExit, "read from evaluator failed");
            }
            if (n == 0)
                throw ExternalEvalError(ExternalFault::ProcessExit, "evaluator process exited");
            rx.append(chunk, static_cast<std::size_t>(n));
        }
    }
};

ExternalEvaluator::ExternalEvaluator(ExternalEvaluatorSpec spec, DesignSpace space,
                                     std::vector<std::string> metric_names)
    : spec_(std::move(spec)), space_(std::move(space)), metric_names_(std::move(metric_names)) {
    spec_.validate();
    space_.validate();
    if (metric_names_.empty()) throw ContractError("ExternalEvaluator: no metric names");
    signal(SIGPIPE, SIG_IGN);  // broken pipes surface as write errors instead
}

ExternalEvaluator::~ExternalEvaluator() = default;

void ExternalEvaluator::ensure_process() {
    if (!proc_) proc_ = std::make_unique<Process>(spec_.command);
}

void ExternalEvaluator::restart_process() {
    proc_.reset();
}

nlohmann::json ExternalEvaluator::request_json(std::uint64_t id, const DesignPoint& point) const {
    check_point(point, space_);
    nlohmann::json params;
    for (std::size_t j = 0; j < space_.params.size(); ++j) {
        const auto& p = space_.params[j];
        params[p.name] = p.grid[static_cast<std::size_t>(point.indices[j])];
    }
    return {{"id", id}, {"v", spec_.schema_version}, {"params", params}};
}

Measurement ExternalEvaluator::parse_response(const nlohmann::json& resp) const {
    if (!resp.is_object() || !resp.contains("id"))
        throw ExternalEvalError(ExternalFault::MalformedResponse, "response is not a record");
    if (resp.contains("error"))
        throw EvalError("evaluator declared failure: " +
                        resp["error"].get<std::string>());
    if (!resp.contains("metrics") || !resp["metrics"].is_object())
        throw ExternalEvalError(ExternalFault::MalformedResponse, "response lacks metrics");
    Measurement m;
    for (const auto& name : metric_names_) {
        if (!resp["metrics"].contains(name) || !resp["metrics"][name].is_number())
            throw ExternalEvalError(ExternalFault::MalformedResponse,
                                    "response missing metric '" + name + "'");
        double v = resp["metrics"][name].get<double>();
        if (!std::isfinite(v))
            throw ExternalEvalError(ExternalFault::MalformedResponse,
                                    "non-finite metric '" + name + "'");
        m.values[name] = v;
    }
    return m;
}

Measurement ExternalEvaluator::roundtrip(const DesignPoint& point) {
    int attempts = 0;
    for (;;) {
        try {
            ensure_process();
            std::uint64_t id = next_id_++;
            proc_->send_line(request_json(id, point).dump());
            auto deadline = Clock::now() + std::chrono::milliseconds(spec_.timeout_ms);
            for (;;) {
                std::string line = proc_->read_line(deadline);
                nlohmann::json resp = nlohmann::json::parse(line, nullptr, false);
                if (resp.is_discarded())
                    throw ExternalEvalError(ExternalFault::MalformedResponse,
                                            "response is not valid JSON");
                if (!resp.is_object() || !resp.contains("id")) continue;
                if (resp["id"].get<std::uint64_t>() != id) continue;  // stale response
                return parse_response(resp);
            }
        } catch (const ExternalEvalError& e) {
            restart_process();
            if (++attempts > spec_.max_retries) throw;
        }
    }
}

Measurement ExternalEvaluator::evaluate(const DesignPoint& point) { return roundtrip(point); }

std::vector<EvalOutcome> ExternalEvaluator::evaluate_batch(const std::vector<DesignPoint>& points) {
    std::vector<EvalOutcome> out(points.size());
    if (spec_.max_inflight <= 1) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            try {
                out[i].measurement = roundtrip(points[i]);
            } catch (const EvalError& e) {
                out[i].error = e.what();
            }
        }
        return out;
    }

    // Pipelined: keep up to max_inflight requests outstanding on one process.
    struct Pending {
        std::size_t index;
        Clock::time_point deadline;
    };
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < points.size(); ++i) queue.push_back(i);
    std::vector<int> attempts(points.size(), 0);
    std::unordered_map<std::uint64_t, Pending> inflight;

    auto fail_inflight = [&](const char* reason) {
        // Outstanding requests died with the process; requeue or give up.
        for (auto& [id, p] : inflight) {
            if (++attempts[p.index] > spec_.max_retries)
                out[p.index].error = reason;
            else
                queue.push_front(p.index);
        }
        inflight.clear();
        restart_process();
    };

    while (!queue.empty() || !inflight.empty()) {
        try {
            ensure_process();
            while (!queue.empty() &&
                   inflight.size() < static_cast<std::size_t>(spec_.max_inflight)) {
                std::size_t index = queue.front();
                queue.pop_front();
                std::uint64_t id = next_id_++;
                proc_->send_line(request_json(id, points[index]).dump());
                inflight[id] = {index,
                                Clock::now() + std::chrono::milliseconds(spec_.timeout_ms)};
            }
            auto earliest = Clock::time_point::max();
            for (const auto& [id, p] : inflight) earliest = std::min(earliest, p.deadline);
            std::string line = proc_->read_line(earliest);
            nlohmann::json resp = nlohmann::json::parse(line, nullptr, false);
            if (resp.is_discarded())
                throw ExternalEvalError(ExternalFault::MalformedResponse,
                                        "response is not valid JSON");
            if (!resp.is_object() || !resp.contains("id")) continue;
            auto it = inflight.find(resp["id"].get<std::uint64_t>());
            if (it == inflight.end()) continue;  // stale
            std::size_t index = it->second.index;
            inflight.erase(it);
            try {
                out[index].measurement = parse_response(resp);
            } catch (const ExternalEvalError& e) {
                if (++attempts[index] > spec_.max_retries)
                    out[index].error = e.what();
                else
                    queue.push_front(index);
            } catch (const EvalError& e) {
                out[index].error = e.what();  // declared failure: no retry
            }
        } catch (const ExternalEvalError& e) {
            fail_inflight(e.what());
        }
    }
    return out;
}

std::string ExternalEvaluator::describe() const {
    return "external evaluator (command: " + spec_.command + ")";
}

}  // namespace evogate
