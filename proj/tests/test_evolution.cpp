#include <set>

#include "doctest.h"
#include "evogate/cost.hpp"
#include "evogate/evolution.hpp"

using namespace evogate;

namespace {

SpecList one_spec() { return {{"gain", Direction::AtLeast, 100.0, 1.0}}; }

Buffer buffer_with_gains(const std::vector<std::pair<std::vector<int>, double>>& entries,
                         const SpecList& specs) {
    Buffer buffer;
    for (const auto& [idx, gain] : entries) {
        Measurement m;
        m.values["gain"] = gain;
        buffer.insert(make_evaluated(DesignPoint{idx}, std::move(m), specs));
    }
    return buffer;
}

DesignSpace toy_space() {
    DesignSpace space;
    space.params.push_back({"a", integer_grid(0, 49)});
    space.params.push_back({"b", integer_grid(0, 19)});
    return space;
}

}  // namespace

TEST_CASE("equal parent genes pass through crossover and blend untouched") {
    // The buffer cannot hold two entries with the same index vector, so the
    // "identical parents" contract is pinned per gene: every design shares
    // gene 0, and with mutation off the child must inherit it exactly.
    SpecList specs = one_spec();
    Buffer buffer =
        buffer_with_gains({{{7, 3}, 50.0}, {{7, 9}, 60.0}, {{7, 15}, 40.0}}, specs);
    EvoConfig cfg;
    cfg.mutation_probability = 0.0;
    Rng rng(3);
    DesignSpace space = toy_space();
    for (int t = 0; t < 200; ++t) {
        DesignPoint child = generate(buffer, space, cfg, rng);
        CHECK(child.indices[0] == 7);
        // gene 1 is a convex integer combination of two parent genes
        CHECK(child.indices[1] >= 3);
        CHECK(child.indices[1] <= 15);
    }
}

TEST_CASE("children always stay inside the grid") {
    SpecList specs = one_spec();
    Buffer buffer = buffer_with_gains({{{0, 0}, 1.0}, {{49, 19}, 2.0}, {{25, 10}, 3.0}}, specs);
    EvoConfig cfg;
    cfg.mutation_probability = 1.0;
    cfg.mutation_sigma = 50.0;  // huge kicks to force clamping
    Rng rng(9);
    DesignSpace space = toy_space();
    for (int t = 0; t < 500; ++t) {
        DesignPoint child = generate(buffer, space, cfg, rng);
        REQUIRE(child.indices.size() == 2);
        CHECK(child.indices[0] >= 0);
        CHECK(child.indices[0] <= 49);
        CHECK(child.indices[1] >= 0);
        CHECK(child.indices[1] <= 19);
    }
}

TEST_CASE("generation is deterministic for a fixed seed") {
    SpecList specs = one_spec();
    Buffer buffer = buffer_with_gains({{{1, 2}, 1.0}, {{3, 4}, 2.0}, {{5, 6}, 3.0}}, specs);
    EvoConfig cfg;
    Rng ra(1234), rb(1234);
    DesignSpace space = toy_space();
    for (int t = 0; t < 50; ++t)
        CHECK(generate(buffer, space, cfg, ra).indices == generate(buffer, space, cfg, rb).indices);
    Buffer tiny = buffer_with_gains({{{1, 2}, 1.0}}, specs);
    Rng rng(1);
    CHECK_THROWS_AS(generate(tiny, space, cfg, rng), ContractError);
}

TEST_CASE("large-sigma mutation reaches every index of a small space") {
    SpecList specs = one_spec();
    Buffer buffer = buffer_with_gains({{{20, 10}, 1.0}, {{30, 5}, 2.0}}, specs);
    EvoConfig cfg;
    cfg.mutation_probability = 1.0;
    cfg.mutation_sigma = 30.0;
    Rng rng(2024);
    DesignSpace space = toy_space();
    std::set<int> seen_a, seen_b;
    for (int t = 0; t < 10000; ++t) {
        DesignPoint child = generate(buffer, space, cfg, rng);
        seen_a.insert(child.indices[0]);
        seen_b.insert(child.indices[1]);
    }
    CHECK(seen_a.size() == 50);
    CHECK(seen_b.size() == 20);
}

TEST_CASE("select keeps the mu cheapest with elitism and dedupe") {
    SpecList specs = one_spec();
    Buffer population = buffer_with_gains(
        {{{0, 0}, 150.0}, {{1, 0}, 140.0}, {{2, 0}, 130.0}, {{3, 0}, 90.0}}, specs);

    SUBCASE("worse offspring leave the population unchanged") {
        std::vector<EvaluatedDesign> offspring;
        Measurement m;
        m.values["gain"] = 10.0;  // dreadful
        offspring.push_back(make_evaluated(DesignPoint{{9, 9}}, m, specs));
        Buffer next = select(population, offspring, population.size());
        REQUIRE(next.size() == population.size());
        for (std::size_t i = 0; i < next.size(); ++i)
            CHECK(next.at(i).point.indices == population.at(i).point.indices);
    }

    SUBCASE("a cost-zero offspring always survives") {
        Buffer violating = buffer_with_gains(
            {{{0, 0}, 50.0}, {{1, 0}, 40.0}, {{2, 0}, 30.0}, {{3, 0}, 90.0}}, specs);
        std::vector<EvaluatedDesign> offspring;
        Measurement m;
        m.values["gain"] = 200.0;  // satisfied: cost 0
        offspring.push_back(make_evaluated(DesignPoint{{9, 9}}, m, specs));
        Buffer next = select(violating, offspring, 2);
        CHECK(next.contains(DesignPoint{{9, 9}}));
    }

    SUBCASE("duplicate offspring of an existing point is dropped") {
        std::vector<EvaluatedDesign> offspring;
        Measurement m;
        m.values["gain"] = 500.0;
        offspring.push_back(make_evaluated(DesignPoint{{3, 0}}, m, specs));
        Buffer next = select(population, offspring, population.size());
        CHECK(next.size() == population.size());
        CHECK(next.at(3).measurement.at("gain") == 90.0);  // first occurrence wins
    }

    SUBCASE("mu larger than the union is a contract violation") {
        CHECK_THROWS_AS(select(population, {}, population.size() + 1), ContractError);
    }
}

TEST_CASE("select matches a brute-force sort-and-truncate oracle") {
    SpecList specs = one_spec();
    Rng rng(88);
    for (int trial = 0; trial < 50; ++trial) {
        Buffer population;
        std::vector<EvaluatedDesign> offspring;
        int n = 6 + static_cast<int>(rng.uniform_index(10));
        for (int i = 0; i < n; ++i) {
            Measurement m;
            m.values["gain"] = rng.uniform(0.0, 200.0);
            auto d = make_evaluated(DesignPoint{{i, 0}}, std::move(m), specs);
            if (i % 3 == 0 && i > 0)
                offspring.push_back(d);
            else
                population.insert(d);
        }
        std::size_t mu = 2 + rng.uniform_index(population.size());

        // oracle: stable sort of the chronological union by cost, take mu
        std::vector<EvaluatedDesign> merged(population.designs().begin(),
                                            population.designs().end());
        for (const auto& d : offspring) merged.push_back(d);
        std::vector<std::size_t> order(merged.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return merged[a].cost < merged[b].cost;
        });
        std::set<std::vector<int>> expect;
        for (std::size_t r = 0; r < mu; ++r) expect.insert(merged[order[r]].point.indices);

        Buffer next = select(population, offspring, mu);
        REQUIRE(next.size() == mu);
        for (const auto& d : next.designs()) CHECK(expect.count(d.point.indices) == 1);

        // elitism: the cheapest design never gets worse across selections
        double before = merged[order[0]].cost;
        double after = next.at(0).cost;
        for (const auto& d : next.designs()) after = std::min(after, d.cost);
        CHECK(after == before);
    }
}
