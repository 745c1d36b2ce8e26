#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "evogate/comparator.hpp"
#include "evogate/domain.hpp"

namespace evogate::kernels {

// Data-parallel inner loops, each in two variants: a serial reference and an
// OpenMP version. Both produce bit-identical results for any thread count:
// per-item randomness is counter-based and reductions accumulate over fixed
// blocks of BLOCK items, summed in block order. The dispatching front ends
// pick the OpenMP path when parallel::enabled().
inline constexpr std::size_t BLOCK = 8;

// --- pair labeling -------------------------------------------------------
// values: n x s row-major measured values aligned with `specs`. Writes one
// label per (ordered pair, spec) into labels[p * s + j], where pair p
// enumerates (i, j) with i in 0..n-1 and j != i in ascending j order.
void label_pairs_serial(const double* values, std::size_t n, std::size_t s,
                        const SpecDef* specs, double* labels);
void label_pairs_parallel(const double* values, std::size_t n, std::size_t s,
                          const SpecDef* specs, double* labels);
void label_pairs(const double* values, std::size_t n, std::size_t s,
                 const SpecDef* specs, double* labels);

double label_of(double a, double b, Direction dir);

// --- minibatch gradient --------------------------------------------------
// Scratch reused across batches; resized lazily per net shape.
struct GradScratch {
    std::vector<Workspace> workspaces;          // one per thread
    std::vector<std::vector<double>> partials;  // one per block
};

// Sums loss and parameter gradient over dataset[idx[0..count)], dropout on
// with per-example masks derived from (batch_seed, position). `grad` must
// hold net.param_count() entries; it is zeroed first. Returns summed loss.
double batch_gradient_serial(const ComparatorNet& net,
                             const std::vector<PairExample>& dataset,
                             const std::uint32_t* idx, std::size_t count,
                             std::uint64_t batch_seed, double* grad, GradScratch& scratch);
double batch_gradient_parallel(const ComparatorNet& net,
                               const std::vector<PairExample>& dataset,
                               const std::uint32_t* idx, std::size_t count,
                               std::uint64_t batch_seed, double* grad, GradScratch& scratch);
double batch_gradient(const ComparatorNet& net, const std::vector<PairExample>& dataset,
                      const std::uint32_t* idx, std::size_t count, std::uint64_t batch_seed,
                      double* grad, GradScratch& scratch);

// Per-example dropout mask stream: a pure function of (batch_seed, position),
// so execution order cannot change the masks.
Rng example_rng(std::uint64_t batch_seed, std::size_t position);

// --- counter-based sampling ----------------------------------------------
// Uniform random design point number `counter` of stream `seed`; used by the
// Monte-Carlo feasibility loops so samples are independent of thread order.
DesignPoint sample_point(const DesignSpace& space, std::uint64_t seed, std::uint64_t counter);

// Evaluates `eval(points[i])` into out[i]. The callable must be pure.
template <typename Fn>
void for_each_index_serial(std::size_t n, Fn&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
}
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace evogate::kernels
