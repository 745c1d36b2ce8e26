#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evogate/domain.hpp"

namespace evogate {

// Penalty and weighted-cost breakdown for one measurement.
struct CostReport {
    struct Entry {
        std::string name;
        double penalty = 0.0;   // unweighted, nonnegative
        double weighted = 0.0;  // weight * penalty
        bool satisfied = false;
        bool included = false;  // inside the requested subset
    };
    std::vector<Entry> entries;  // aligned with the spec list
    double total = 0.0;          // sum of weighted penalties over the subset
};

// Normalized violation of one spec: 0 when satisfied (equality counts as
// satisfied), otherwise |c - c*| / max(|c + c*|, 1e-15).
double penalty(double c, const SpecDef& spec);

// Weighted cost over `subset` (all specs when empty). Throws ContractError
// when the measurement lacks a value for a subset spec.
CostReport cost(const Measurement& m, const SpecList& specs,
                const std::optional<std::set<std::string>>& subset = std::nullopt);

// Fast paths used by the engine: penalties aligned with the spec list, and
// subset costs recomputed from cached penalties.
std::vector<double> penalties_for(const Measurement& m, const SpecList& specs);
double total_cost(const std::vector<double>& penalties, const SpecList& specs);
double subset_cost(const std::vector<double>& penalties, const SpecList& specs,
                   const std::vector<std::size_t>& spec_indices);

// Wraps a point + measurement into an EvaluatedDesign with cached penalties.
EvaluatedDesign make_evaluated(DesignPoint point, Measurement m, const SpecList& specs);

}  // namespace evogate
