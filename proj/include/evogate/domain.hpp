#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evogate/errors.hpp"

namespace evogate {

// One discrete design variable: a named, strictly increasing grid of values.
struct ParamSpec {
    std::string name;
    std::vector<double> grid;

    void validate() const;
};

// Ordered list of parameters. A design is an index vector into these grids.
struct DesignSpace {
    std::vector<ParamSpec> params;

    void validate() const;
    std::size_t dim() const { return params.size(); }

    // Product of grid lengths; saturates at the u64 max for huge spaces.
    std::uint64_t cardinality() const;
    double cardinality_approx() const;
};

struct DesignPoint {
    std::vector<int> indices;

    bool operator==(const DesignPoint& other) const { return indices == other.indices; }
};

// Throws ContractError unless every index is in range for its grid.
void check_point(const DesignPoint& point, const DesignSpace& space);

enum class Direction { AtLeast, AtMost };

const char* to_string(Direction d);
Direction direction_from_string(const std::string& s);

// One constraint: measured value must be at least / at most `threshold`.
struct SpecDef {
    std::string name;
    Direction direction = Direction::AtLeast;
    double threshold = 0.0;
    double weight = 1.0;

    void validate() const;
};

using SpecList = std::vector<SpecDef>;

// Measured metric values, keyed by spec name. std::map keeps iteration order
// deterministic for serialization.
struct Measurement {
    std::map<std::string, double> values;

    double at(const std::string& spec_name) const;
    bool covers(const SpecList& specs) const;
};

// A simulated design with its penalties cached. Penalties are aligned with
// the problem's spec list and are recomputable bit-identically from the
// measurement (see cost.hpp).
struct EvaluatedDesign {
    DesignPoint point;
    Measurement measurement;
    std::vector<double> penalties;  // one per spec, unweighted
    double cost = 0.0;              // sum of weight * penalty over all specs
};

// Population of evaluated designs. Insertion order is preserved and no two
// entries share a DesignPoint.
class Buffer {
public:
    bool insert(EvaluatedDesign d);
    bool contains(const DesignPoint& p) const;

    const std::vector<EvaluatedDesign>& designs() const { return designs_; }
    const EvaluatedDesign& at(std::size_t i) const { return designs_[i]; }
    std::size_t size() const { return designs_.size(); }
    bool empty() const { return designs_.empty(); }

private:
    std::vector<EvaluatedDesign> designs_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> index_;
};

// Maps a point to network inputs: each parameter's grid value affine-mapped
// from [grid min, grid max] onto [-1, +1]; single-value grids map to 0.
std::vector<double> encode(const DesignPoint& point, const DesignSpace& space);
void encode_into(const DesignPoint& point, const DesignSpace& space, double* out);

// Convenience grid builders used by benchmarks, configs and tests.
std::vector<double> integer_grid(int lo, int hi);
std::vector<double> step_grid(double lo, double hi, double step);

}  // namespace evogate
