#pragma once

#include <string>
#include <vector>

#include "evogate/cost.hpp"
#include "evogate/domain.hpp"

namespace evogate {

// Append-only list of the spec names currently driving selection. Once a
// metric enters the list it never leaves.
class CriticalSpecList {
public:
    bool contains(const std::string& name) const;
    void append(const std::string& name);  // throws ContractError on duplicates

    const std::vector<std::string>& names() const { return names_; }
    bool empty() const { return names_.empty(); }
    std::size_t size() const { return names_.size(); }

    // Positions of the critical specs inside `specs` (insertion order).
    std::vector<std::size_t> indices_in(const SpecList& specs) const;

private:
    std::vector<std::string> names_;
};

// Buffer positions sorted ascending by cost restricted to `cs` (full spec set
// when `cs` is empty). Stable: ties keep insertion order.
std::vector<std::size_t> sort_by_cs_cost(const Buffer& buffer, const SpecList& specs,
                                         const CriticalSpecList& cs);

// One step of the critical-spec heuristic: among the k cheapest designs under
// the current cs-restricted cost, append the not-yet-critical spec with the
// largest weighted penalty. Returns the list unchanged when every spec is
// already critical or nothing is violated in the top k.
CriticalSpecList update_critical(const Buffer& buffer, const SpecList& specs,
                                 const CriticalSpecList& cs, std::size_t k);

// The rank-k design (0-based) of the cs-cost-sorted buffer; the comparison
// anchor for gating. Requires buffer.size() > k.
const EvaluatedDesign& select_reference(const Buffer& buffer, const SpecList& specs,
                                        const CriticalSpecList& cs, std::size_t k);

}  // namespace evogate
