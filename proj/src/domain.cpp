#include "evogate/domain.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "evogate/rng.hpp"

namespace evogate {

void ParamSpec::validate() const {
    if (name.empty()) throw ContractError("ParamSpec: empty name");
    if (grid.empty()) throw ContractError("ParamSpec '" + name + "': empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i]))
            throw ContractError("ParamSpec '" + name + "': non-finite grid value");
        if (i > 0 && !(grid[i - 1] < grid[i]))
            throw ContractError("ParamSpec '" + name + "': grid not strictly increasing");
    }
}

void DesignSpace::validate() const {
    if (params.empty()) throw ContractError("DesignSpace: no parameters");
    std::unordered_set<std::string> names;
    for (const auto& p : params) {
        p.validate();
        if (!names.insert(p.name).second)
            throw ContractError("DesignSpace: duplicate parameter name '" + p.name + "'");
    }
}

std::uint64_t DesignSpace::cardinality() const {
    std::uint64_t n = 1;
    for (const auto& p : params) {
        std::uint64_t len = p.grid.size();
        if (n > std::numeric_limits<std::uint64_t>::max() / len)
            return std::numeric_limits<std::uint64_t>::max();
        n *= len;
    }
    return n;
}

double DesignSpace::cardinality_approx() const {
    double n = 1.0;
    for (const auto& p : params) n *= static_cast<double>(p.grid.size());
    return n;
}

void check_point(const DesignPoint& point, const DesignSpace& space) {
    if (point.indices.size() != space.params.size())
        throw ContractError("DesignPoint: dimension mismatch");
    for (std::size_t j = 0; j < point.indices.size(); ++j) {
        int idx = point.indices[j];
        if (idx < 0 || static_cast<std::size_t>(idx) >= space.params[j].grid.size())
            throw ContractError("DesignPoint: index out of range for parameter '" +
                                space.params[j].name + "'");
    }
}

const char* to_string(Direction d) {
    return d == Direction::AtLeast ? "at_least" : "at_most";
}

Direction direction_from_string(const std::string& s) {
    if (s == "at_least") return Direction::AtLeast;
    if (s == "at_most") return Direction::AtMost;
    throw ConfigError("unknown spec direction '" + s + "' (expected at_least or at_most)");
}

void SpecDef::validate() const {
    if (name.empty()) throw ContractError("SpecDef: empty name");
    if (!std::isfinite(threshold)) throw ContractError("SpecDef '" + name + "': non-finite threshold");
    if (!(weight >= 0.0) || !std::isfinite(weight))
        throw ContractError("SpecDef '" + name + "': weight must be nonnegative and finite");
}

double Measurement::at(const std::string& spec_name) const {
    auto it = values.find(spec_name);
    if (it == values.end())
        throw ContractError("Measurement: missing value for spec '" + spec_name + "'");
    return it->second;
}

bool Measurement::covers(const SpecList& specs) const {
    for (const auto& s : specs) {
        auto it = values.find(s.name);
        if (it == values.end() || !std::isfinite(it->second)) return false;
    }
    return true;
}

namespace {
std::uint64_t point_key(const DesignPoint& p) {
    return fnv1a(p.indices.data(), p.indices.size() * sizeof(int));
}
}  // namespace

bool Buffer::insert(EvaluatedDesign d) {
    std::uint64_t key = point_key(d.point);
    auto it = index_.find(key);
    if (it != index_.end()) {
        for (std::size_t pos : it->second)
            if (designs_[pos].point == d.point) return false;
    }
    index_[key].push_back(designs_.size());
    designs_.push_back(std::move(d));
    return true;
}

bool Buffer::contains(const DesignPoint& p) const {
    auto it = index_.find(point_key(p));
    if (it == index_.end()) return false;
    for (std::size_t pos : it->second)
        if (designs_[pos].point == p) return true;
    return false;
}

void encode_into(const DesignPoint& point, const DesignSpace& space, double* out) {
    if (point.indices.size() != space.params.size())
        throw ContractError("encode: dimension mismatch");
    for (std::size_t j = 0; j < space.params.size(); ++j) {
        const auto& grid = space.params[j].grid;
        int idx = point.indices[j];
        if (idx < 0 || static_cast<std::size_t>(idx) >= grid.size())
            throw ContractError("encode: index out of range for parameter '" +
                                space.params[j].name + "'");
        if (grid.size() == 1) {
            out[j] = 0.0;
            continue;
        }
        double lo = grid.front(), hi = grid.back();
        out[j] = -1.0 + 2.0 * (grid[static_cast<std::size_t>(idx)] - lo) / (hi - lo);
    }
}

std::vector<double> encode(const DesignPoint& point, const DesignSpace& space) {
    std::vector<double> out(space.params.size());
    encode_into(point, space, out.data());
    return out;
}

std::vector<double> integer_grid(int lo, int hi) {
    std::vector<double> g;
    for (int v = lo; v <= hi; ++v) g.push_back(static_cast<double>(v));
    return g;
}

std::vector<double> step_grid(double lo, double hi, double step) {
    std::vector<double> g;
    for (int i = 0;; ++i) {
        double v = lo + step * i;
        if (v > hi + step * 0.5) break;
        g.push_back(v);
    }
    return g;
}

}  // namespace evogate
