#include "evogate/critical.hpp"

#include <algorithm>

namespace evogate {

bool CriticalSpecList::contains(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

void CriticalSpecList::append(const std::string& name) {
    if (contains(name))
        throw ContractError("CriticalSpecList: '" + name + "' already critical");
    names_.push_back(name);
}

std::vector<std::size_t> CriticalSpecList::indices_in(const SpecList& specs) const {
    std::vector<std::size_t> out;
    out.reserve(names_.size());
    for (const auto& name : names_) {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            if (specs[i].name == name) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

std::vector<std::size_t> sort_by_cs_cost(const Buffer& buffer, const SpecList& specs,
                                         const CriticalSpecList& cs) {
    const auto& designs = buffer.designs();
    std::vector<double> key(designs.size());
    if (cs.empty()) {
        for (std::size_t i = 0; i < designs.size(); ++i) key[i] = designs[i].cost;
    } else {
        auto cs_idx = cs.indices_in(specs);
        for (std::size_t i = 0; i < designs.size(); ++i)
            key[i] = subset_cost(designs[i].penalties, specs, cs_idx);
    }
    std::vector<std::size_t> order(designs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    return order;
}

CriticalSpecList update_critical(const Buffer& buffer, const SpecList& specs,
                                 const CriticalSpecList& cs, std::size_t k) {
    if (buffer.empty()) throw ContractError("update_critical: empty buffer");
    if (k < 1 || k > buffer.size())
        throw ContractError("update_critical: k out of range");

    auto order = sort_by_cs_cost(buffer, specs, cs);

    // argmax over non-critical specs of the worst weighted penalty in the
    // top-k designs. Ties go to the earlier spec in the problem's spec order.
    double best = 0.0;
    std::size_t best_spec = specs.size();
    for (std::size_t s = 0; s < specs.size(); ++s) {
        if (cs.contains(specs[s].name)) continue;
        double worst = 0.0;
        for (std::size_t r = 0; r < k; ++r) {
            const auto& d = buffer.at(order[r]);
            double wp = specs[s].weight * d.penalties[s];
            if (wp > worst) worst = wp;
        }
        if (worst > best) {
            best = worst;
            best_spec = s;
        }
    }

    CriticalSpecList updated = cs;
    if (best_spec < specs.size() && best > 0.0) updated.append(specs[best_spec].name);
    return updated;
}

const EvaluatedDesign& select_reference(const Buffer& buffer, const SpecList& specs,
                                        const CriticalSpecList& cs, std::size_t k) {
    if (buffer.size() <= k)
        throw ContractError("select_reference: buffer must hold more than k designs");
    auto order = sort_by_cs_cost(buffer, specs, cs);
    return buffer.at(order[k]);
}

}  // namespace evogate
