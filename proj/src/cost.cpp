#include "evogate/cost.hpp"

#include <cmath>

namespace evogate {

double penalty(double c, const SpecDef& spec) {
    if (!std::isfinite(c))
        throw EvalError("penalty: non-finite measurement for spec '" + spec.name + "'");
    bool satisfied = spec.direction == Direction::AtLeast ? c >= spec.threshold
                                                          : c <= spec.threshold;
    if (satisfied) return 0.0;
    double denom = std::fabs(c + spec.threshold);
    if (denom < 1e-15) denom = 1e-15;
    return std::fabs(c - spec.threshold) / denom;
}

CostReport cost(const Measurement& m, const SpecList& specs,
                const std::optional<std::set<std::string>>& subset) {
    CostReport report;
    report.entries.reserve(specs.size());
    for (const auto& spec : specs) {
        CostReport::Entry e;
        e.name = spec.name;
        e.included = !subset || subset->count(spec.name) > 0;
        if (e.included) {
            auto it = m.values.find(spec.name);
            if (it == m.values.end())
                throw ContractError("cost: measurement missing spec '" + spec.name + "'");
            e.penalty = penalty(it->second, spec);
            e.weighted = spec.weight * e.penalty;
            e.satisfied = e.penalty == 0.0;
            report.total += e.weighted;
        } else {
            auto it = m.values.find(spec.name);
            if (it != m.values.end()) {
                e.penalty = penalty(it->second, spec);
                e.weighted = spec.weight * e.penalty;
                e.satisfied = e.penalty == 0.0;
            }
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

std::vector<double> penalties_for(const Measurement& m, const SpecList& specs) {
    std::vector<double> out(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
        out[i] = penalty(m.at(specs[i].name), specs[i]);
    return out;
}

double total_cost(const std::vector<double>& penalties, const SpecList& specs) {
    double total = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i) total += specs[i].weight * penalties[i];
    return total;
}

double subset_cost(const std::vector<double>& penalties, const SpecList& specs,
                   const std::vector<std::size_t>& spec_indices) {
    double total = 0.0;
    for (std::size_t i : spec_indices) total += specs[i].weight * penalties[i];
    return total;
}

EvaluatedDesign make_evaluated(DesignPoint point, Measurement m, const SpecList& specs) {
    EvaluatedDesign d;
    d.point = std::move(point);
    d.penalties = penalties_for(m, specs);
    d.cost = total_cost(d.penalties, specs);
    d.measurement = std::move(m);
    return d;
}

}  // namespace evogate
