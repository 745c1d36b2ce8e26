// Benchmark comparing the serial reference kernels against their OpenMP
// counterparts, verifying bit-identical results while timing both.

#include <chrono>
#include <cstdio>
#include <numeric>
#include <vector>

#include "CLI11.hpp"
#include "evogate/engine.hpp"
#include "evogate/evaluators.hpp"
#include "evogate/kernels.hpp"
#include "evogate/parallel.hpp"

using namespace evogate;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-24s serial %8.3f s   openmp %8.3f s   speedup %5.2fx   %s\n", name, serial_s,
                parallel_s, parallel_s > 0 ? serial_s / parallel_s : 0.0,
                identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel benchmark"};
    int designs = 160;
    int batches = 200;
    int batch_size = 256;
    int mc_samples = 100000;
    int threads = 0;
    app.add_option("--designs", designs, "buffer size for pair labeling");
    app.add_option("--batches", batches, "gradient batches to time");
    app.add_option("--batch-size", batch_size, "examples per gradient batch");
    app.add_option("--mc-samples", mc_samples, "Monte-Carlo feasibility samples");
    app.add_option("--threads", threads, "thread budget (0 = hardware)");
    CLI11_PARSE(app, argc, argv);

    auto bench = make_benchmark("synthetic-opamp-v1");
    const DesignSpace& space = bench->space();
    const SpecList& specs = bench->specs();
    std::size_t n_specs = specs.size();

    std::printf("threads available: %d\n", parallel::hardware_threads());
    parallel::set_threads(threads);

    // Shared inputs.
    Rng rng(7);
    std::uint64_t sims = 0, first = 0;
    Buffer buffer = init_population(space, specs, *bench, static_cast<std::size_t>(designs),
                                    rng, &sims, &first);

    // --- pair labeling ---
    {
        std::size_t n = buffer.size();
        std::vector<double> values(n * n_specs);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n_specs; ++j)
                values[i * n_specs + j] = buffer.at(i).measurement.at(specs[j].name);
        std::vector<double> a(n * (n - 1) * n_specs), b(a.size());
        auto t0 = Clock::now();
        kernels::label_pairs_serial(values.data(), n, n_specs, specs.data(), a.data());
        double ts = seconds_since(t0);
        t0 = Clock::now();
        kernels::label_pairs_parallel(values.data(), n, n_specs, specs.data(), b.data());
        double tp = seconds_since(t0);
        report("label_pairs", ts, tp, a == b);
    }

    // --- minibatch gradient ---
    {
        auto pairs = make_pairs(buffer, specs, space);
        Rng net_rng(11);
        NetShape shape;
        shape.input_dim = static_cast<int>(space.params.size());
        shape.num_heads = static_cast<int>(n_specs);
        ComparatorNet net = ComparatorNet::init(shape, 0.2, net_rng);

        std::vector<std::uint32_t> idx(pairs.size());
        std::iota(idx.begin(), idx.end(), 0u);
        kernels::GradScratch scratch;
        std::vector<double> ga(net.param_count()), gb(net.param_count());
        std::size_t count = std::min<std::size_t>(batch_size, pairs.size());

        double loss_s = 0.0, loss_p = 0.0;
        auto t0 = Clock::now();
        for (int r = 0; r < batches; ++r)
            loss_s += kernels::batch_gradient_serial(net, pairs, idx.data(), count,
                                                     1000 + static_cast<std::uint64_t>(r),
                                                     ga.data(), scratch);
        double ts = seconds_since(t0);
        t0 = Clock::now();
        for (int r = 0; r < batches; ++r)
            loss_p += kernels::batch_gradient_parallel(net, pairs, idx.data(), count,
                                                       1000 + static_cast<std::uint64_t>(r),
                                                       gb.data(), scratch);
        double tp = seconds_since(t0);
        // compare the final batch, which both loops computed last
        bool same = ga == gb;
        report("batch_gradient", ts, tp, same);
        std::printf("  (last-batch loss serial %.6f, openmp %.6f)\n", loss_s, loss_p);
    }

    // --- Monte-Carlo feasibility ---
    {
        auto t0 = Clock::now();
        parallel::set_threads(1);
        double fs = measure_feasibility(*bench, static_cast<std::size_t>(mc_samples), 42);
        double ts = seconds_since(t0);
        parallel::set_threads(threads);
        t0 = Clock::now();
        double fp = measure_feasibility(*bench, static_cast<std::size_t>(mc_samples), 42);
        double tp = seconds_since(t0);
        report("mc_feasibility", ts, tp, fs == fp);
        std::printf("  (joint feasibility %.5f)\n", fs);
    }

    return 0;
}
