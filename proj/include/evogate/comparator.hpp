#pragma once

#include <cstdint>
#include <vector>

#include "evogate/domain.hpp"
#include "evogate/rng.hpp"

namespace evogate {

// Architecture of the pairwise comparator: a feature extractor shared by both
// inputs, then one decision head per spec. Head layers use the mirrored
// weight/bias parametrization that forces M(A,B) = 1 - M(B,A).
struct NetShape {
    int input_dim = 0;
    std::vector<int> feature_widths = {20, 20};
    int head_hidden = 20;  // must be even
    int num_heads = 0;

    int feature_dim() const { return feature_widths.back(); }
    void validate() const;
};

// Dense layer view into the flat parameter vector (row-major out x in).
struct DenseView {
    int out = 0, in = 0;
    const double* w = nullptr;
    const double* b = nullptr;
};

// Symmetric layer view: only the top half of the full m x 2k matrix (and the
// top half of the bias) is free; the bottom half is its 180-degree mirror.
struct SymmetricView {
    int m = 0, two_k = 0;
    const double* free_w = nullptr;  // (m/2) x 2k, row-major
    const double* free_b = nullptr;  // m/2
};

// Full m x 2k matrix and m-vector bias expanded from the free half:
//   W(i,j) = W_free(i,j)             for i <  m/2
//   W(i,j) = W_free(m-1-i, 2k-1-j)   for i >= m/2, and b(i) = b_free(m-1-i).
struct MaterializedLayer {
    int m = 0, two_k = 0;
    std::vector<double> w;  // m x 2k, row-major
    std::vector<double> b;  // m
};
MaterializedLayer materialize(const SymmetricView& layer);

// Explicit dropout masks for one forward pass. Entries are 0 or 1/(1-rate)
// (inverted dropout). `mirrored()` gives the mask set under which the
// swapped-input pass reproduces the complementary probabilities exactly:
// branch masks follow the design, head masks are reversed.
struct DropoutPlan {
    std::vector<std::vector<double>> ext_a;  // per extractor layer
    std::vector<std::vector<double>> ext_b;
    std::vector<std::vector<double>> head;  // per head, hidden width

    static DropoutPlan draw(const NetShape& shape, double rate, Rng& rng);
    DropoutPlan mirrored() const;
};

// Reusable scratch for forward/backward passes; one per thread.
struct Workspace {
    std::vector<std::vector<double>> pre_a, act_a, pre_b, act_b;
    std::vector<double> xh, u_pre, u, dxh, du, df_a, df_b, dcur, dprev;
    std::vector<double> probs;

    void resize_for(const NetShape& shape);
};

// Ordered pair of encoded designs with one preference label per spec:
// 1 when A is strictly better, 0 when strictly worse, 0.5 on a tie.
struct PairExample {
    std::vector<double> x_a, x_b;
    std::vector<double> labels;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs_per_update = 10;
    int pretrain_epochs = 30;
    int minibatch = 64;
    double dropout_rate = 0.2;
    int mc_samples = 5;
    std::size_t max_pairs_per_update = 50000;
    std::uint64_t rng_seed = 0;  // engine derives the stream; standalone use seeds here

    void validate() const;
};

class ComparatorNet {
public:
    ComparatorNet() = default;

    // Free halves drawn uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out));
    // biases start at zero.
    static ComparatorNet init(const NetShape& shape, double dropout_rate, Rng& rng);

    const NetShape& shape() const { return shape_; }
    double dropout_rate() const { return dropout_rate_; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    DenseView extractor_layer(std::size_t l) const;
    SymmetricView head_hidden_layer(std::size_t head) const;
    SymmetricView head_output_layer(std::size_t head) const;

    // Per-spec probabilities that A beats B. `plan` null = dropout off.
    void forward(const double* x_a, const double* x_b, const DropoutPlan* plan,
                 double* probs, Workspace& ws) const;

    std::vector<double> predict(const std::vector<double>& x_a,
                                const std::vector<double>& x_b) const;

    // Mean of n dropout-on passes (masks resampled every pass).
    std::vector<double> mc_predict(const std::vector<double>& x_a,
                                   const std::vector<double>& x_b, int n, Rng& rng) const;
    void mc_predict_into(const double* x_a, const double* x_b, int n, Rng& rng,
                         double* probs, Workspace& ws) const;

    // Summed cross-entropy over specs for one example; accumulates the
    // parameter gradient into `grad_accum` when non-null. Returns the loss.
    double example_loss_grad(const PairExample& ex, const DropoutPlan* plan,
                             double* grad_accum, Workspace& ws) const;

    // Shuffled-minibatch SGD on summed cross-entropy, dropout on.
    // Returns mean loss per epoch. Deterministic given rng state.
    std::vector<double> train(const std::vector<PairExample>& dataset,
                              const TrainConfig& cfg, Rng& rng);

private:
    struct LayerSpan {
        std::size_t w_off = 0, b_off = 0;
        int rows = 0, cols = 0;  // stored rows (free half for symmetric layers)
    };

    NetShape shape_;
    double dropout_rate_ = 0.0;
    std::vector<double> params_;
    std::vector<LayerSpan> ext_;       // per extractor layer
    std::vector<LayerSpan> head_hid_;  // per head
    std::vector<LayerSpan> head_out_;  // per head

    void build_layout();

    friend struct NetAccess;
};

// All N(N-1) ordered pairs of distinct buffer designs, labeled per spec from
// the stored measurements. Requires buffer.size() >= 2.
std::vector<PairExample> make_pairs(const Buffer& buffer, const SpecList& specs,
                                    const DesignSpace& space);

// Same labeling, but uniformly subsampled (without replacement) to at most
// `cap` pairs when the full set would be larger.
std::vector<PairExample> make_pairs_capped(const Buffer& buffer, const SpecList& specs,
                                           const DesignSpace& space, std::size_t cap,
                                           Rng& rng);

}  // namespace evogate
