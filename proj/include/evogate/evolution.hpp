#pragma once

#include "evogate/domain.hpp"
#include "evogate/rng.hpp"

namespace evogate {

struct EvoConfig {
    double parent_pool_fraction = 0.25;  // top fraction of the cost-sorted buffer
    int tournament_size = 3;
    double crossover_probability = 0.9;
    double blend_alpha = 0.5;          // per-gene alpha drawn from [1 - blend_alpha, 1]
    double mutation_probability = 0.1;  // per gene
    double mutation_sigma = 0.0;        // grid-index units; 0 = auto (2% of grid length, min 1)

    void validate() const;
};

// One offspring: tournament parent selection from the elite pool, per-gene
// uniform crossover, convex integer blend, Gaussian integer mutation, clamped
// to the grid. Deterministic given the rng state.
DesignPoint generate(const Buffer& buffer, const DesignSpace& space, const EvoConfig& cfg,
                     Rng& rng);

// mu+lambda truncation: the mu cheapest designs of population + offspring
// (full spec set, stable tie-break by insertion order, dedupe by point).
// Survivors keep their chronological order in the returned buffer.
Buffer select(const Buffer& population, const std::vector<EvaluatedDesign>& offspring,
              std::size_t mu);

}  // namespace evogate
