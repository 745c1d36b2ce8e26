// Mock external evaluator for protocol conformance tests and demos. Speaks
// the line-delimited JSON protocol on stdin/stdout: one request object per
// line in, one response object per line out.
//
// Behaviors (combinable):
//   --drop-metric NAME          omit one metric from every response
//   --error-id N                respond {"id", "error"} for request id N
//   --exit-after N              exit after N responses
//   --sleep-once-marker FILE    sleep --sleep-ms once, recording the fact in
//                               FILE so a restarted process answers promptly
//   --sleep-ms MS               duration for the sleep behaviors (default 2000)
//   --derive NAME=EXPR          extra metric: sum|prod|neg_sum of all params
//
// Default response echoes every request parameter back as a metric.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mock line-protocol evaluator"};
    std::string drop_metric;
    std::uint64_t error_id = 0;
    long exit_after = -1;
    std::string sleep_marker;
    int sleep_ms = 2000;
    std::vector<std::string> derive;
    app.add_option("--drop-metric", drop_metric);
    app.add_option("--error-id", error_id);
    app.add_option("--exit-after", exit_after);
    app.add_option("--sleep-once-marker", sleep_marker);
    app.add_option("--sleep-ms", sleep_ms);
    app.add_option("--derive", derive);
    CLI11_PARSE(app, argc, argv);

    long responses = 0;
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        nlohmann::json req = nlohmann::json::parse(line, nullptr, false);
        if (req.is_discarded() || !req.contains("id")) continue;
        if (exit_after >= 0 && responses >= exit_after) return 0;

        if (!sleep_marker.empty()) {
            std::ifstream probe(sleep_marker);
            if (!probe.good()) {
                std::ofstream mark(sleep_marker);
                mark << "slept\n";
                mark.close();
                std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
            }
        }

        nlohmann::json resp;
        resp["id"] = req["id"];
        if (error_id != 0 && req["id"].get<std::uint64_t>() == error_id) {
            resp["error"] = "mock declared failure";
        } else {
            nlohmann::json metrics = nlohmann::json::object();
            double sum = 0.0, prod = 1.0;
            if (req.contains("params"))
                for (auto it = req["params"].begin(); it != req["params"].end(); ++it) {
                    double v = it.value().get<double>();
                    sum += v;
                    prod *= v;
                    if (it.key() != drop_metric) metrics[it.key()] = v;
                }
            for (const auto& d : derive) {
                auto eq = d.find('=');
                if (eq == std::string::npos) continue;
                std::string name = d.substr(0, eq);
                std::string expr = d.substr(eq + 1);
                if (expr == "sum") metrics[name] = sum;
                if (expr == "prod") metrics[name] = prod;
                if (expr == "neg_sum") metrics[name] = -sum;
            }
            resp["metrics"] = metrics;
        }
        std::cout << resp.dump() << "\n" << std::flush;
        ++responses;
    }
    return 0;
}
