#include "evogate/evolution.hpp"

#include <algorithm>
#include <cmath>

namespace evogate {

void EvoConfig::validate() const {
    if (!(parent_pool_fraction > 0.0 && parent_pool_fraction <= 1.0))
        throw ConfigError("evo.parent_pool_fraction must be in (0, 1]");
    if (tournament_size < 1) throw ConfigError("evo.tournament_size must be >= 1");
    if (!(crossover_probability >= 0.0 && crossover_probability <= 1.0))
        throw ConfigError("evo.crossover_probability must be in [0, 1]");
    if (!(blend_alpha >= 0.0 && blend_alpha <= 1.0))
        throw ConfigError("evo.blend_alpha must be in [0, 1]");
    if (!(mutation_probability >= 0.0 && mutation_probability <= 1.0))
        throw ConfigError("evo.mutation_probability must be in [0, 1]");
    if (!(mutation_sigma >= 0.0)) throw ConfigError("evo.mutation_sigma must be >= 0");
}

namespace {

// Positions sorted ascending by full cost, insertion order on ties.
std::vector<std::size_t> cost_order(const std::vector<EvaluatedDesign>& designs) {
    std::vector<std::size_t> order(designs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return designs[a].cost < designs[b].cost;
    });
    return order;
}

std::size_t tournament_pick(const std::vector<std::size_t>& pool,
                            const std::vector<EvaluatedDesign>& designs, int rounds, Rng& rng) {
    std::size_t best = pool[rng.uniform_index(pool.size())];
    for (int t = 1; t < rounds; ++t) {
        std::size_t challenger = pool[rng.uniform_index(pool.size())];
        if (designs[challenger].cost < designs[best].cost) best = challenger;
    }
    return best;
}

}  // namespace

DesignPoint generate(const Buffer& buffer, const DesignSpace& space, const EvoConfig& cfg,
                     Rng& rng) {
    if (buffer.size() < 2) throw ContractError("generate: need at least two designs");
    const auto& designs = buffer.designs();

    auto order = cost_order(designs);
    std::size_t pool_size = static_cast<std::size_t>(
        std::ceil(cfg.parent_pool_fraction * static_cast<double>(order.size())));
    pool_size = std::max<std::size_t>(2, std::min(pool_size, order.size()));
    std::vector<std::size_t> pool(order.begin(), order.begin() + pool_size);

    const auto& p1 = designs[tournament_pick(pool, designs, cfg.tournament_size, rng)].point;
    const auto& p2 = designs[tournament_pick(pool, designs, cfg.tournament_size, rng)].point;

    std::size_t dim = space.params.size();
    DesignPoint child;
    child.indices.resize(dim);

    bool crossover = rng.uniform() < cfg.crossover_probability;
    for (std::size_t g = 0; g < dim; ++g) {
        int a = p1.indices[g];
        int b = p2.indices[g];
        if (crossover && rng.uniform() < 0.5) std::swap(a, b);
        // Convex integer blend leaning toward the chosen gene.
        double alpha = rng.uniform(1.0 - cfg.blend_alpha, 1.0);
        long v = a == b ? a : std::lround(b + alpha * (a - b));
        if (rng.uniform() < cfg.mutation_probability) {
            double sigma = cfg.mutation_sigma;
            if (sigma <= 0.0)
                sigma = std::max(1.0, 0.02 * static_cast<double>(space.params[g].grid.size()));
            v += std::lround(rng.normal() * sigma);
        }
        long max_idx = static_cast<long>(space.params[g].grid.size()) - 1;
        child.indices[g] = static_cast<int>(std::clamp(v, 0L, max_idx));
    }
    return child;
}

Buffer select(const Buffer& population, const std::vector<EvaluatedDesign>& offspring,
              std::size_t mu) {
    // Chronological union with dedupe (first occurrence wins).
    Buffer merged;
    for (const auto& d : population.designs()) merged.insert(d);
    for (const auto& d : offspring) merged.insert(d);

    if (mu > merged.size())
        throw ContractError("select: mu exceeds union size");

    auto order = cost_order(merged.designs());
    std::vector<bool> keep(merged.size(), false);
    for (std::size_t r = 0; r < mu; ++r) keep[order[r]] = true;

    // Survivors stay in chronological order so later stable sorts keep
    // reproducible insertion-order tie-breaks.
    Buffer next;
    for (std::size_t i = 0; i < merged.size(); ++i)
        if (keep[i]) next.insert(merged.at(i));
    return next;
}

}  // namespace evogate
