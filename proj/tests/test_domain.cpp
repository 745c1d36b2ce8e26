#include "doctest.h"
#include "evogate/cost.hpp"
#include "evogate/domain.hpp"
#include "evogate/rng.hpp"

using namespace evogate;

namespace {

DesignPoint pt(std::vector<int> idx) { return DesignPoint{std::move(idx)}; }

DesignSpace two_param_space() {
    DesignSpace space;
    space.params.push_back({"nf", integer_grid(1, 100)});
    space.params.push_back({"cap", step_grid(0.1, 10.0, 0.1)});
    space.validate();
    return space;
}

EvaluatedDesign dummy_design(std::vector<int> idx, double gain, const SpecList& specs) {
    Measurement m;
    m.values["gain"] = gain;
    return make_evaluated(DesignPoint{std::move(idx)}, std::move(m), specs);
}

}  // namespace

TEST_CASE("encode maps grid endpoints to -1 and +1") {
    DesignSpace space = two_param_space();
    CHECK(encode(pt({0, 0}), space)[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(encode(pt({99, 0}), space)[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(encode(pt({0, 99}), space)[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("encode of the grid value nearest the midpoint is about zero") {
    DesignSpace space = two_param_space();
    // cap grid runs 0.1..10.0; midpoint 5.05 sits between entries 49 (5.0)
    // and 50 (5.1). Independent affine computation of both:
    const auto& grid = space.params[1].grid;
    for (int idx : {49, 50}) {
        double expected = -1.0 + 2.0 * (grid[idx] - grid.front()) / (grid.back() - grid.front());
        CHECK(std::abs(expected) < 0.0102);
        CHECK(encode(pt({0, idx}), space)[1] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("encode is strictly monotone and a bijection per parameter") {
    DesignSpace space = two_param_space();
    for (std::size_t p = 0; p < space.params.size(); ++p) {
        double prev = -2.0;
        for (std::size_t i = 0; i < space.params[p].grid.size(); ++i) {
            DesignPoint point = pt({0, 0});
            point.indices[p] = static_cast<int>(i);
            double v = encode(point, space)[p];
            CHECK(v > prev);  // strict: doubles as the bijection check
            prev = v;
        }
    }
}

TEST_CASE("encode single-value grid maps to zero, mismatch throws") {
    DesignSpace space;
    space.params.push_back({"only", {3.3}});
    CHECK(encode(pt({0}), space)[0] == 0.0);
    CHECK_THROWS_AS(encode(pt({0, 1}), space), ContractError);
}

TEST_CASE("param grid invariants are enforced") {
    ParamSpec empty{"bad", {}};
    ParamSpec duplicate{"bad", {1.0, 1.0}};
    ParamSpec decreasing{"bad", {2.0, 1.0}};
    CHECK_THROWS_AS(empty.validate(), ContractError);
    CHECK_THROWS_AS(duplicate.validate(), ContractError);
    CHECK_THROWS_AS(decreasing.validate(), ContractError);
    DesignSpace dup;
    dup.params.push_back({"x", {1.0}});
    dup.params.push_back({"x", {1.0}});
    CHECK_THROWS_AS(dup.validate(), ContractError);
}

TEST_CASE("cardinality is the product of grid lengths") {
    DesignSpace space = two_param_space();
    CHECK(space.cardinality() == 100ull * 100ull);
}

TEST_CASE("buffer insert dedupes by design point and keeps order") {
    SpecList specs = {{"gain", Direction::AtLeast, 1.0, 1.0}};
    Buffer buffer;

    CHECK(buffer.insert(dummy_design({1, 2}, 5.0, specs)));
    CHECK(buffer.size() == 1);

    SUBCASE("duplicate point is rejected and idempotent") {
        CHECK_FALSE(buffer.insert(dummy_design({1, 2}, 9.0, specs)));
        CHECK_FALSE(buffer.insert(dummy_design({1, 2}, 9.0, specs)));
        CHECK(buffer.size() == 1);
        CHECK(buffer.at(0).measurement.at("gain") == 5.0);
    }

    SUBCASE("distinct points accumulate in insertion order") {
        CHECK(buffer.insert(dummy_design({3, 4}, 1.0, specs)));
        CHECK(buffer.insert(dummy_design({5, 6}, 2.0, specs)));
        CHECK(buffer.size() == 3);
        CHECK(buffer.at(0).point.indices == std::vector<int>{1, 2});
        CHECK(buffer.at(1).point.indices == std::vector<int>{3, 4});
        CHECK(buffer.at(2).point.indices == std::vector<int>{5, 6});
        CHECK(buffer.contains(pt({3, 4})));
        CHECK_FALSE(buffer.contains(pt({4, 3})));
    }
}

TEST_CASE("stored penalties and cost are recomputable bit-identically") {
    SpecList specs = {{"gain", Direction::AtLeast, 300.0, 1.0},
                      {"power", Direction::AtMost, 1e-3, 2.5}};
    Rng rng(99);
    for (int t = 0; t < 200; ++t) {
        Measurement m;
        m.values["gain"] = rng.uniform(0.0, 600.0);
        m.values["power"] = rng.uniform(0.0, 2e-3);
        EvaluatedDesign d = make_evaluated(DesignPoint{{t, 0}}, m, specs);
        auto again = penalties_for(d.measurement, specs);
        CHECK(again == d.penalties);
        CHECK(total_cost(again, specs) == d.cost);
    }
}
