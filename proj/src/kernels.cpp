#include "evogate/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "evogate/parallel.hpp"

namespace evogate::kernels {

double label_of(double a, double b, Direction dir) {
    if (a == b) return 0.5;
    bool a_better = dir == Direction::AtLeast ? a > b : a < b;
    return a_better ? 1.0 : 0.0;
}

namespace {

inline void label_one_pair(const double* values, std::size_t s, const SpecDef* specs,
                           std::size_t i, std::size_t j, double* out) {
    const double* va = values + i * s;
    const double* vb = values + j * s;
    for (std::size_t t = 0; t < s; ++t) out[t] = label_of(va[t], vb[t], specs[t].direction);
}

}  // namespace

void label_pairs_serial(const double* values, std::size_t n, std::size_t s,
                        const SpecDef* specs, double* labels) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            label_one_pair(values, s, specs, i, j, labels + p * s);
            ++p;
        }
}

void label_pairs_parallel(const double* values, std::size_t n, std::size_t s,
                          const SpecDef* specs, double* labels) {
    const std::int64_t total = static_cast<std::int64_t>(n) * (n - 1);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
#endif
    for (std::int64_t p = 0; p < total; ++p) {
        std::size_t i = static_cast<std::size_t>(p) / (n - 1);
        std::size_t r = static_cast<std::size_t>(p) % (n - 1);
        std::size_t j = r < i ? r : r + 1;
        label_one_pair(values, s, specs, i, j, labels + static_cast<std::size_t>(p) * s);
    }
}

void label_pairs(const double* values, std::size_t n, std::size_t s, const SpecDef* specs,
                 double* labels) {
    if (parallel::enabled())
        label_pairs_parallel(values, n, s, specs, labels);
    else
        label_pairs_serial(values, n, s, specs, labels);
}

Rng example_rng(std::uint64_t batch_seed, std::size_t position) {
    Rng r(batch_seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(position) + 1)));
    r.next_u64();
    return r;
}

namespace {

void prepare_scratch(const ComparatorNet& net, std::size_t blocks, GradScratch& scratch) {
    std::size_t nthreads = static_cast<std::size_t>(std::max(1, parallel::threads()));
    if (scratch.workspaces.size() < nthreads) scratch.workspaces.resize(nthreads);
    if (scratch.partials.size() < blocks) scratch.partials.resize(blocks);
    for (std::size_t b = 0; b < blocks; ++b)
        scratch.partials[b].assign(net.param_count(), 0.0);
}

// One fixed block of examples, accumulated serially in position order.
double block_gradient(const ComparatorNet& net, const std::vector<PairExample>& dataset,
                      const std::uint32_t* idx, std::size_t begin, std::size_t end,
                      std::uint64_t batch_seed, double* grad, Workspace& ws) {
    double loss = 0.0;
    for (std::size_t e = begin; e < end; ++e) {
        Rng mask_rng = example_rng(batch_seed, e);
        DropoutPlan plan = DropoutPlan::draw(net.shape(), net.dropout_rate(), mask_rng);
        loss += net.example_loss_grad(dataset[idx[e]], &plan, grad, ws);
    }
    return loss;
}

// Partial losses and gradients are combined in block order, so the result is
// independent of how blocks were scheduled onto threads.
double reduce_blocks(const GradScratch& scratch, const std::vector<double>& block_loss,
                     std::size_t blocks, std::size_t nparams, double* grad) {
    std::fill(grad, grad + nparams, 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
        loss += block_loss[b];
        const double* part = scratch.partials[b].data();
        for (std::size_t p = 0; p < nparams; ++p) grad[p] += part[p];
    }
    return loss;
}

}  // namespace

double batch_gradient_serial(const ComparatorNet& net, const std::vector<PairExample>& dataset,
                             const std::uint32_t* idx, std::size_t count,
                             std::uint64_t batch_seed, double* grad, GradScratch& scratch) {
    std::size_t blocks = (count + BLOCK - 1) / BLOCK;
    prepare_scratch(net, blocks, scratch);
    std::vector<double> block_loss(blocks, 0.0);
    for (std::size_t b = 0; b < blocks; ++b) {
        std::size_t begin = b * BLOCK;
        std::size_t end = std::min(count, begin + BLOCK);
        block_loss[b] = block_gradient(net, dataset, idx, begin, end, batch_seed,
                                       scratch.partials[b].data(), scratch.workspaces[0]);
    }
    return reduce_blocks(scratch, block_loss, blocks, net.param_count(), grad);
}

double batch_gradient_parallel(const ComparatorNet& net, const std::vector<PairExample>& dataset,
                               const std::uint32_t* idx, std::size_t count,
                               std::uint64_t batch_seed, double* grad, GradScratch& scratch) {
    std::size_t blocks = (count + BLOCK - 1) / BLOCK;
    prepare_scratch(net, blocks, scratch);
    std::vector<double> block_loss(blocks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
#endif
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(blocks); ++b) {
        std::size_t tid = 0;
#ifdef _OPENMP
        tid = static_cast<std::size_t>(omp_get_thread_num());
#endif
        std::size_t begin = static_cast<std::size_t>(b) * BLOCK;
        std::size_t end = std::min(count, begin + BLOCK);
        block_loss[static_cast<std::size_t>(b)] =
            block_gradient(net, dataset, idx, begin, end, batch_seed,
                           scratch.partials[static_cast<std::size_t>(b)].data(),
                           scratch.workspaces[tid]);
    }
    return reduce_blocks(scratch, block_loss, blocks, net.param_count(), grad);
}

double batch_gradient(const ComparatorNet& net, const std::vector<PairExample>& dataset,
                      const std::uint32_t* idx, std::size_t count, std::uint64_t batch_seed,
                      double* grad, GradScratch& scratch) {
    if (parallel::enabled())
        return batch_gradient_parallel(net, dataset, idx, count, batch_seed, grad, scratch);
    return batch_gradient_serial(net, dataset, idx, count, batch_seed, grad, scratch);
}

DesignPoint sample_point(const DesignSpace& space, std::uint64_t seed, std::uint64_t counter) {
    Rng r(seed ^ (0xD1B54A32D192ED03ULL * (counter + 1)));
    r.next_u64();
    DesignPoint p;
    p.indices.resize(space.params.size());
    for (std::size_t j = 0; j < space.params.size(); ++j)
        p.indices[j] = static_cast<int>(r.uniform_index(space.params[j].grid.size()));
    return p;
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (parallel::enabled()) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
#endif
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
            fn(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i) fn(i);
    }
}

}  // namespace evogate::kernels
