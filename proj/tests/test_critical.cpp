#include <algorithm>

#include "doctest.h"
#include "evogate/critical.hpp"
#include "evogate/rng.hpp"

using namespace evogate;

namespace {

SpecList random_specs(Rng& rng, int count) {
    SpecList specs;
    for (int i = 0; i < count; ++i)
        specs.push_back({"m" + std::to_string(i),
                         rng.uniform() < 0.5 ? Direction::AtLeast : Direction::AtMost,
                         rng.uniform(-5.0, 5.0), rng.uniform(0.05, 2.0)});
    return specs;
}

Buffer random_buffer(Rng& rng, const SpecList& specs, int count) {
    Buffer buffer;
    int next = 0;
    while (buffer.size() < static_cast<std::size_t>(count)) {
        Measurement m;
        for (const auto& s : specs) m.values[s.name] = rng.uniform(-10.0, 10.0);
        buffer.insert(make_evaluated(DesignPoint{{next++, 0}}, std::move(m), specs));
    }
    return buffer;
}

// Brute-force restatement of the heuristic, written independently: sort by
// subset cost, scan the top-k designs for the worst weighted penalty among
// non-critical specs.
std::optional<std::string> oracle_update(const Buffer& buffer, const SpecList& specs,
                                         const std::vector<std::string>& cs, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        double key = 0.0;
        if (cs.empty()) {
            for (std::size_t s = 0; s < specs.size(); ++s)
                key += specs[s].weight * buffer.at(i).penalties[s];
        } else {
            for (std::size_t s = 0; s < specs.size(); ++s)
                if (std::count(cs.begin(), cs.end(), specs[s].name))
                    key += specs[s].weight * buffer.at(i).penalties[s];
        }
        keyed.emplace_back(key, i);
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    double best = 0.0;
    std::optional<std::string> pick;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        if (std::count(cs.begin(), cs.end(), specs[s].name)) continue;
        for (std::size_t r = 0; r < k; ++r) {
            double wp = specs[s].weight * buffer.at(keyed[r].second).penalties[s];
            if (wp > best) {
                best = wp;
                pick = specs[s].name;
            }
        }
    }
    return pick;
}

}  // namespace

TEST_CASE("single violated spec becomes critical") {
    SpecList specs = {{"gain", Direction::AtLeast, 10.0, 1.0},
                      {"power", Direction::AtMost, 100.0, 1.0}};
    Buffer buffer;
    for (int i = 0; i < 5; ++i) {
        Measurement m;
        m.values["gain"] = 5.0 + i;   // all violate gain
        m.values["power"] = 50.0;     // power always fine
        buffer.insert(make_evaluated(DesignPoint{{i}}, std::move(m), specs));
    }
    CriticalSpecList cs = update_critical(buffer, specs, {}, 3);
    CHECK(cs.names() == std::vector<std::string>{"gain"});

    // gain is the only violated spec, so a second update appends nothing
    CriticalSpecList cs2 = update_critical(buffer, specs, cs, 3);
    CHECK(cs2.names() == cs.names());
}

TEST_CASE("all-satisfied top-k leaves the list unchanged") {
    SpecList specs = {{"gain", Direction::AtLeast, 10.0, 1.0}};
    Buffer buffer;
    for (int i = 0; i < 4; ++i) {
        Measurement m;
        m.values["gain"] = 20.0 + i;
        buffer.insert(make_evaluated(DesignPoint{{i}}, std::move(m), specs));
    }
    CriticalSpecList cs = update_critical(buffer, specs, {}, 4);
    CHECK(cs.empty());
    CHECK_THROWS_AS(update_critical(Buffer{}, specs, cs, 1), ContractError);
}

TEST_CASE("update_critical matches the brute-force oracle on random populations") {
    Rng rng(20260808);
    for (int trial = 0; trial < 200; ++trial) {
        int n_specs = 2 + static_cast<int>(rng.uniform_index(7));  // up to 8
        int n_designs = 5 + static_cast<int>(rng.uniform_index(46));  // up to 50
        SpecList specs = random_specs(rng, n_specs);
        Buffer buffer = random_buffer(rng, specs, n_designs);
        std::size_t k = 1 + rng.uniform_index(buffer.size());

        CriticalSpecList cs;
        for (int step = 0; step < n_specs + 1; ++step) {
            auto expected = oracle_update(buffer, specs, cs.names(), k);
            CriticalSpecList updated = update_critical(buffer, specs, cs, k);
            if (expected) {
                REQUIRE(updated.size() == cs.size() + 1);
                CHECK(updated.names().back() == *expected);
            } else {
                CHECK(updated.names() == cs.names());
            }
            // append-only and duplicate-free by construction
            for (std::size_t i = 0; i < cs.size(); ++i)
                CHECK(updated.names()[i] == cs.names()[i]);
            std::vector<std::string> sorted = updated.names();
            std::sort(sorted.begin(), sorted.end());
            CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
            cs = updated;
        }
        CHECK(cs.size() <= specs.size());
    }
}

TEST_CASE("reference selection: rank k with insertion-order ties") {
    SpecList specs = {{"gain", Direction::AtLeast, 10.0, 1.0}};
    Buffer buffer;
    for (int i = 0; i < 4; ++i) {
        Measurement m;
        m.values["gain"] = 50.0;  // cost 0 for everyone: pure tie
        buffer.insert(make_evaluated(DesignPoint{{i}}, std::move(m), specs));
    }
    const auto& ref = select_reference(buffer, specs, {}, 3);
    CHECK(ref.point.indices == std::vector<int>{3});  // (k+1)-th inserted
    CHECK_THROWS_AS(select_reference(buffer, specs, {}, 4), ContractError);
}

TEST_CASE("reference of k+1 designs is the worst one") {
    SpecList specs = {{"gain", Direction::AtLeast, 100.0, 1.0}};
    Buffer buffer;
    for (int i = 0; i < 4; ++i) {
        Measurement m;
        m.values["gain"] = 90.0 - i;  // later designs are worse
        buffer.insert(make_evaluated(DesignPoint{{i}}, std::move(m), specs));
    }
    const auto& ref = select_reference(buffer, specs, {}, 3);
    CHECK(ref.point.indices == std::vector<int>{3});
}

TEST_CASE("reference matches an independent sort oracle on random data") {
    Rng rng(5150);
    for (int trial = 0; trial < 50; ++trial) {
        SpecList specs = random_specs(rng, 4);
        Buffer buffer = random_buffer(rng, specs, 30);
        CriticalSpecList cs;
        cs.append(specs[1].name);
        cs.append(specs[3].name);
        std::size_t k = rng.uniform_index(buffer.size() - 1);

        std::vector<std::pair<double, std::size_t>> keyed;
        for (std::size_t i = 0; i < buffer.size(); ++i) {
            double key = specs[1].weight * buffer.at(i).penalties[1] +
                         specs[3].weight * buffer.at(i).penalties[3];
            keyed.emplace_back(key, i);
        }
        std::stable_sort(keyed.begin(), keyed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        const auto& expect = buffer.at(keyed[k].second);
        const auto& got = select_reference(buffer, specs, cs, k);
        CHECK(got.point.indices == expect.point.indices);
    }
}
