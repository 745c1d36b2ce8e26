#include "evogate/comparator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "evogate/kernels.hpp"

namespace evogate {

namespace {

double softplus(double t) {
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void NetShape::validate() const {
    if (input_dim <= 0) throw ContractError("NetShape: input_dim must be positive");
    if (feature_widths.empty()) throw ContractError("NetShape: no feature layers");
    for (int w : feature_widths)
        if (w <= 0) throw ContractError("NetShape: nonpositive feature width");
    if (head_hidden <= 0 || head_hidden % 2 != 0)
        throw ContractError("NetShape: head_hidden must be positive and even");
    if (num_heads <= 0) throw ContractError("NetShape: num_heads must be positive");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (epochs_per_update < 1) throw ConfigError("train.epochs_per_update must be >= 1");
    if (pretrain_epochs < 1) throw ConfigError("train.pretrain_epochs must be >= 1");
    if (minibatch < 1) throw ConfigError("train.minibatch must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ConfigError("train.dropout_rate must be in [0, 1)");
    if (mc_samples < 1) throw ConfigError("train.mc_samples must be >= 1");
    if (max_pairs_per_update < 1) throw ConfigError("train.max_pairs_per_update must be >= 1");
}

MaterializedLayer materialize(const SymmetricView& layer) {
    if (layer.m <= 0 || layer.m % 2 != 0)
        throw ContractError("materialize: layer height must be positive and even");
    MaterializedLayer full;
    full.m = layer.m;
    full.two_k = layer.two_k;
    full.w.assign(static_cast<std::size_t>(layer.m) * layer.two_k, 0.0);
    full.b.assign(layer.m, 0.0);
    int half = layer.m / 2;
    for (int i = 0; i < half; ++i) {
        for (int j = 0; j < layer.two_k; ++j)
            full.w[static_cast<std::size_t>(i) * layer.two_k + j] =
                layer.free_w[static_cast<std::size_t>(i) * layer.two_k + j];
        full.b[i] = layer.free_b[i];
    }
    for (int i = half; i < layer.m; ++i) {
        for (int j = 0; j < layer.two_k; ++j)
            full.w[static_cast<std::size_t>(i) * layer.two_k + j] =
                layer.free_w[static_cast<std::size_t>(layer.m - 1 - i) * layer.two_k +
                             (layer.two_k - 1 - j)];
        full.b[i] = layer.free_b[layer.m - 1 - i];
    }
    return full;
}

DropoutPlan DropoutPlan::draw(const NetShape& shape, double rate, Rng& rng) {
    DropoutPlan plan;
    double keep = 1.0 - rate;
    auto draw_mask = [&](int width) {
        std::vector<double> mask(width);
        for (int i = 0; i < width; ++i)
            mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        return mask;
    };
    for (int w : shape.feature_widths) plan.ext_a.push_back(draw_mask(w));
    for (int w : shape.feature_widths) plan.ext_b.push_back(draw_mask(w));
    for (int h = 0; h < shape.num_heads; ++h) plan.head.push_back(draw_mask(shape.head_hidden));
    return plan;
}

DropoutPlan DropoutPlan::mirrored() const {
    DropoutPlan m;
    m.ext_a = ext_b;
    m.ext_b = ext_a;
    m.head = head;
    for (auto& mask : m.head) std::reverse(mask.begin(), mask.end());
    return m;
}

void Workspace::resize_for(const NetShape& shape) {
    std::size_t layers = shape.feature_widths.size();
    pre_a.resize(layers);
    act_a.resize(layers);
    pre_b.resize(layers);
    act_b.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        pre_a[l].resize(shape.feature_widths[l]);
        act_a[l].resize(shape.feature_widths[l]);
        pre_b[l].resize(shape.feature_widths[l]);
        act_b[l].resize(shape.feature_widths[l]);
    }
    int k = shape.feature_dim();
    xh.resize(2 * k);
    dxh.resize(2 * k);
    u_pre.resize(shape.head_hidden);
    u.resize(shape.head_hidden);
    du.resize(shape.head_hidden);
    df_a.resize(k);
    df_b.resize(k);
    int widest = shape.input_dim;
    for (int w : shape.feature_widths) widest = std::max(widest, w);
    dcur.resize(widest);
    dprev.resize(widest);
    probs.resize(shape.num_heads);
}

void ComparatorNet::build_layout() {
    std::size_t off = 0;
    ext_.clear();
    head_hid_.clear();
    head_out_.clear();
    int in = shape_.input_dim;
    for (int w : shape_.feature_widths) {
        LayerSpan s;
        s.rows = w;
        s.cols = in;
        s.w_off = off;
        off += static_cast<std::size_t>(w) * in;
        s.b_off = off;
        off += w;
        ext_.push_back(s);
        in = w;
    }
    int two_k = 2 * shape_.feature_dim();
    int half = shape_.head_hidden / 2;
    for (int h = 0; h < shape_.num_heads; ++h) {
        LayerSpan hid;
        hid.rows = half;
        hid.cols = two_k;
        hid.w_off = off;
        off += static_cast<std::size_t>(half) * two_k;
        hid.b_off = off;
        off += half;
        head_hid_.push_back(hid);

        LayerSpan out;
        out.rows = 1;
        out.cols = shape_.head_hidden;
        out.w_off = off;
        off += static_cast<std::size_t>(shape_.head_hidden);
        out.b_off = off;
        off += 1;
        head_out_.push_back(out);
    }
    params_.assign(off, 0.0);
}

ComparatorNet ComparatorNet::init(const NetShape& shape, double dropout_rate, Rng& rng) {
    shape.validate();
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ContractError("ComparatorNet: dropout rate must be in [0, 1)");
    ComparatorNet net;
    net.shape_ = shape;
    net.dropout_rate_ = dropout_rate;
    net.build_layout();

    auto fill_uniform = [&](const LayerSpan& s, int fan_in, int fan_out) {
        double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < static_cast<std::size_t>(s.rows) * s.cols; ++i)
            net.params_[s.w_off + i] = rng.uniform(-a, a);
        // biases stay zero
    };
    int in = shape.input_dim;
    for (std::size_t l = 0; l < net.ext_.size(); ++l) {
        fill_uniform(net.ext_[l], in, shape.feature_widths[l]);
        in = shape.feature_widths[l];
    }
    int two_k = 2 * shape.feature_dim();
    for (int h = 0; h < shape.num_heads; ++h) {
        fill_uniform(net.head_hid_[h], two_k, shape.head_hidden);
        fill_uniform(net.head_out_[h], shape.head_hidden, 2);
    }
    return net;
}

DenseView ComparatorNet::extractor_layer(std::size_t l) const {
    const auto& s = ext_.at(l);
    return DenseView{s.rows, s.cols, params_.data() + s.w_off, params_.data() + s.b_off};
}

SymmetricView ComparatorNet::head_hidden_layer(std::size_t head) const {
    const auto& s = head_hid_.at(head);
    return SymmetricView{shape_.head_hidden, s.cols, params_.data() + s.w_off,
                         params_.data() + s.b_off};
}

SymmetricView ComparatorNet::head_output_layer(std::size_t head) const {
    const auto& s = head_out_.at(head);
    return SymmetricView{2, s.cols, params_.data() + s.w_off, params_.data() + s.b_off};
}

namespace {

// Extractor branch: dense layers with ReLU, dropout mask applied after the
// activation. Writes pre-activations and (dropped) activations per layer.
void run_branch(const ComparatorNet& net, const double* x,
                const std::vector<std::vector<double>>* masks,
                std::vector<std::vector<double>>& pre, std::vector<std::vector<double>>& act) {
    const auto& shape = net.shape();
    const double* cur = x;
    for (std::size_t l = 0; l < shape.feature_widths.size(); ++l) {
        DenseView layer = net.extractor_layer(l);
        for (int i = 0; i < layer.out; ++i) {
            double acc = layer.b[i];
            const double* row = layer.w + static_cast<std::size_t>(i) * layer.in;
            for (int j = 0; j < layer.in; ++j) acc += row[j] * cur[j];
            pre[l][i] = acc;
            double a = acc > 0.0 ? acc : 0.0;
            act[l][i] = masks ? a * (*masks)[l][i] : a;
        }
        cur = act[l].data();
    }
}

}  // namespace

void ComparatorNet::forward(const double* x_a, const double* x_b, const DropoutPlan* plan,
                            double* probs, Workspace& ws) const {
    ws.resize_for(shape_);
    run_branch(*this, x_a, plan ? &plan->ext_a : nullptr, ws.pre_a, ws.act_a);
    run_branch(*this, x_b, plan ? &plan->ext_b : nullptr, ws.pre_b, ws.act_b);

    int k = shape_.feature_dim();
    int two_k = 2 * k;
    const double* f_a = ws.act_a.back().data();
    const double* f_b = ws.act_b.back().data();
    // Head input: A's features in order, B's features reversed. The reversal
    // is what turns an input swap into a full reversal of the head input,
    // which the mirrored layers propagate to the output pair.
    for (int j = 0; j < k; ++j) {
        ws.xh[j] = f_a[j];
        ws.xh[k + j] = f_b[k - 1 - j];
    }

    int m = shape_.head_hidden;
    int half = m / 2;
    for (int h = 0; h < shape_.num_heads; ++h) {
        SymmetricView hid = head_hidden_layer(h);
        for (int i = 0; i < half; ++i) {
            const double* row = hid.free_w + static_cast<std::size_t>(i) * two_k;
            double top = hid.free_b[i];
            double bot = hid.free_b[i];
            for (int j = 0; j < two_k; ++j) {
                top += row[j] * ws.xh[j];
                bot += row[j] * ws.xh[two_k - 1 - j];
            }
            ws.u_pre[i] = top;
            ws.u_pre[m - 1 - i] = bot;
        }
        for (int i = 0; i < m; ++i) {
            double a = ws.u_pre[i] > 0.0 ? ws.u_pre[i] : 0.0;
            ws.u[i] = plan ? a * plan->head[h][i] : a;
        }
        SymmetricView out = head_output_layer(h);
        double y0 = out.free_b[0];
        double y1 = out.free_b[0];
        for (int j = 0; j < m; ++j) {
            y0 += out.free_w[j] * ws.u[j];
            y1 += out.free_w[j] * ws.u[m - 1 - j];
        }
        probs[h] = sigmoid(y0 - y1);
    }
}

std::vector<double> ComparatorNet::predict(const std::vector<double>& x_a,
                                           const std::vector<double>& x_b) const {
    if (x_a.size() != static_cast<std::size_t>(shape_.input_dim) || x_a.size() != x_b.size())
        throw ContractError("ComparatorNet::predict: input dimension mismatch");
    Workspace ws;
    std::vector<double> probs(shape_.num_heads);
    forward(x_a.data(), x_b.data(), nullptr, probs.data(), ws);
    return probs;
}

void ComparatorNet::mc_predict_into(const double* x_a, const double* x_b, int n, Rng& rng,
                                    double* probs, Workspace& ws) const {
    if (n < 1) throw ContractError("mc_predict: need at least one sample");
    std::vector<double> acc(shape_.num_heads, 0.0);
    std::vector<double> one(shape_.num_heads);
    for (int t = 0; t < n; ++t) {
        DropoutPlan plan = DropoutPlan::draw(shape_, dropout_rate_, rng);
        forward(x_a, x_b, &plan, one.data(), ws);
        for (int h = 0; h < shape_.num_heads; ++h) acc[h] += one[h];
    }
    for (int h = 0; h < shape_.num_heads; ++h) probs[h] = acc[h] / n;
}

std::vector<double> ComparatorNet::mc_predict(const std::vector<double>& x_a,
                                              const std::vector<double>& x_b, int n,
                                              Rng& rng) const {
    if (x_a.size() != static_cast<std::size_t>(shape_.input_dim) || x_a.size() != x_b.size())
        throw ContractError("mc_predict: input dimension mismatch");
    Workspace ws;
    std::vector<double> probs(shape_.num_heads);
    mc_predict_into(x_a.data(), x_b.data(), n, rng, probs.data(), ws);
    return probs;
}

double ComparatorNet::example_loss_grad(const PairExample& ex, const DropoutPlan* plan,
                                        double* grad, Workspace& ws) const {
    if (ex.x_a.size() != static_cast<std::size_t>(shape_.input_dim) ||
        ex.x_b.size() != static_cast<std::size_t>(shape_.input_dim))
        throw ContractError("example_loss_grad: input dimension mismatch");
    if (ex.labels.size() != static_cast<std::size_t>(shape_.num_heads))
        throw ContractError("example_loss_grad: label count mismatch");

    ws.resize_for(shape_);
    run_branch(*this, ex.x_a.data(), plan ? &plan->ext_a : nullptr, ws.pre_a, ws.act_a);
    run_branch(*this, ex.x_b.data(), plan ? &plan->ext_b : nullptr, ws.pre_b, ws.act_b);

    int k = shape_.feature_dim();
    int two_k = 2 * k;
    const double* f_a = ws.act_a.back().data();
    const double* f_b = ws.act_b.back().data();
    for (int j = 0; j < k; ++j) {
        ws.xh[j] = f_a[j];
        ws.xh[k + j] = f_b[k - 1 - j];
    }

    std::fill(ws.df_a.begin(), ws.df_a.end(), 0.0);
    std::fill(ws.df_b.begin(), ws.df_b.end(), 0.0);

    int m = shape_.head_hidden;
    int half = m / 2;
    double loss = 0.0;

    for (int h = 0; h < shape_.num_heads; ++h) {
        SymmetricView hid = head_hidden_layer(h);
        for (int i = 0; i < half; ++i) {
            const double* row = hid.free_w + static_cast<std::size_t>(i) * two_k;
            double top = hid.free_b[i];
            double bot = hid.free_b[i];
            for (int j = 0; j < two_k; ++j) {
                top += row[j] * ws.xh[j];
                bot += row[j] * ws.xh[two_k - 1 - j];
            }
            ws.u_pre[i] = top;
            ws.u_pre[m - 1 - i] = bot;
        }
        for (int i = 0; i < m; ++i) {
            double a = ws.u_pre[i] > 0.0 ? ws.u_pre[i] : 0.0;
            ws.u[i] = plan ? a * plan->head[h][i] : a;
        }
        SymmetricView out = head_output_layer(h);
        double y0 = out.free_b[0];
        double y1 = out.free_b[0];
        for (int j = 0; j < m; ++j) {
            y0 += out.free_w[j] * ws.u[j];
            y1 += out.free_w[j] * ws.u[m - 1 - j];
        }
        double z = y0 - y1;
        double label = ex.labels[h];
        loss += label * softplus(-z) + (1.0 - label) * softplus(z);
        if (!grad) continue;

        double dz = sigmoid(z) - label;  // d loss / d z
        const auto& hid_span = head_hid_[h];
        const auto& out_span = head_out_[h];
        double* g_out_w = grad + out_span.w_off;
        double* g_out_b = grad + out_span.b_off;
        // y0 sees u in order, y1 sees u reversed; dy0 = dz, dy1 = -dz.
        g_out_b[0] += dz + (-dz);
        std::fill(ws.du.begin(), ws.du.end(), 0.0);
        for (int j = 0; j < m; ++j) {
            g_out_w[j] += dz * ws.u[j] - dz * ws.u[m - 1 - j];
            ws.du[j] += dz * out.free_w[j];
            ws.du[m - 1 - j] -= dz * out.free_w[j];
        }
        // through dropout and ReLU
        for (int i = 0; i < m; ++i) {
            double g = ws.du[i];
            if (plan) g *= plan->head[h][i];
            ws.du[i] = ws.u_pre[i] > 0.0 ? g : 0.0;
        }
        double* g_hid_w = grad + hid_span.w_off;
        double* g_hid_b = grad + hid_span.b_off;
        std::fill(ws.dxh.begin(), ws.dxh.end(), 0.0);
        for (int i = 0; i < half; ++i) {
            double dt = ws.du[i];
            double db = ws.du[m - 1 - i];
            g_hid_b[i] += dt + db;
            double* g_row = g_hid_w + static_cast<std::size_t>(i) * two_k;
            const double* row = hid.free_w + static_cast<std::size_t>(i) * two_k;
            for (int j = 0; j < two_k; ++j) {
                g_row[j] += dt * ws.xh[j] + db * ws.xh[two_k - 1 - j];
                ws.dxh[j] += dt * row[j];
                ws.dxh[two_k - 1 - j] += db * row[j];
            }
        }
        for (int j = 0; j < k; ++j) {
            ws.df_a[j] += ws.dxh[j];
            ws.df_b[k - 1 - j] += ws.dxh[k + j];
        }
    }

    if (!grad) return loss;

    // Extractor backward, once per branch; shared weights accumulate both.
    auto branch_backward = [&](const double* x, const std::vector<std::vector<double>>& pre,
                               const std::vector<std::vector<double>>& act,
                               const std::vector<std::vector<double>>* masks,
                               const std::vector<double>& df) {
        std::size_t layers = ext_.size();
        std::copy(df.begin(), df.end(), ws.dcur.begin());
        for (std::size_t l = layers; l-- > 0;) {
            DenseView layer = extractor_layer(l);
            const double* input = l == 0 ? x : act[l - 1].data();
            double* g_w = grad + ext_[l].w_off;
            double* g_b = grad + ext_[l].b_off;
            std::fill(ws.dprev.begin(), ws.dprev.begin() + layer.in, 0.0);
            for (int i = 0; i < layer.out; ++i) {
                double g = ws.dcur[i];
                if (masks) g *= (*masks)[l][i];
                if (pre[l][i] <= 0.0) g = 0.0;
                if (g == 0.0) continue;
                g_b[i] += g;
                double* g_row = g_w + static_cast<std::size_t>(i) * layer.in;
                const double* row = layer.w + static_cast<std::size_t>(i) * layer.in;
                for (int j = 0; j < layer.in; ++j) {
                    g_row[j] += g * input[j];
                    ws.dprev[j] += g * row[j];
                }
            }
            std::copy(ws.dprev.begin(), ws.dprev.begin() + layer.in, ws.dcur.begin());
        }
    };
    branch_backward(ex.x_a.data(), ws.pre_a, ws.act_a, plan ? &plan->ext_a : nullptr, ws.df_a);
    branch_backward(ex.x_b.data(), ws.pre_b, ws.act_b, plan ? &plan->ext_b : nullptr, ws.df_b);

    return loss;
}

std::vector<double> ComparatorNet::train(const std::vector<PairExample>& dataset,
                                         const TrainConfig& cfg, Rng& rng) {
    if (dataset.empty()) throw ContractError("train: empty dataset");
    std::vector<double> history;
    if (cfg.epochs_per_update <= 0) return history;

    std::vector<std::uint32_t> perm(dataset.size());
    std::iota(perm.begin(), perm.end(), 0u);
    std::vector<double> grad(params_.size());
    kernels::GradScratch scratch;

    for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
        rng.shuffle(perm);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < perm.size(); start += cfg.minibatch) {
            std::size_t count = std::min<std::size_t>(cfg.minibatch, perm.size() - start);
            std::uint64_t batch_seed = rng.next_u64();
            double loss = kernels::batch_gradient(*this, dataset, perm.data() + start, count,
                                                  batch_seed, grad.data(), scratch);
            if (!std::isfinite(loss))
                throw TrainingDivergence("train: non-finite loss; lower the learning rate");
            double scale = cfg.learning_rate / static_cast<double>(count);
            for (std::size_t p = 0; p < params_.size(); ++p) params_[p] -= scale * grad[p];
            epoch_loss += loss;
        }
        history.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return history;
}

std::vector<PairExample> make_pairs(const Buffer& buffer, const SpecList& specs,
                                    const DesignSpace& space) {
    std::size_t n = buffer.size();
    if (n < 2) throw ContractError("make_pairs: need at least two designs");
    std::size_t s = specs.size();

    std::vector<double> values(n * s);
    std::vector<std::vector<double>> enc(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = buffer.at(i);
        enc[i] = encode(d.point, space);
        for (std::size_t j = 0; j < s; ++j) values[i * s + j] = d.measurement.at(specs[j].name);
    }

    std::vector<double> labels(n * (n - 1) * s);
    kernels::label_pairs(values.data(), n, s, specs.data(), labels.data());

    std::vector<PairExample> pairs;
    pairs.reserve(n * (n - 1));
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            PairExample ex;
            ex.x_a = enc[i];
            ex.x_b = enc[j];
            ex.labels.assign(labels.begin() + p * s, labels.begin() + (p + 1) * s);
            pairs.push_back(std::move(ex));
            ++p;
        }
    }
    return pairs;
}

std::vector<PairExample> make_pairs_capped(const Buffer& buffer, const SpecList& specs,
                                           const DesignSpace& space, std::size_t cap,
                                           Rng& rng) {
    std::size_t n = buffer.size();
    if (n < 2) throw ContractError("make_pairs_capped: need at least two designs");
    std::size_t total = n * (n - 1);
    if (total <= cap) return make_pairs(buffer, specs, space);

    // Partial Fisher-Yates over the implicit pair index range.
    std::vector<std::uint64_t> ids(total);
    std::iota(ids.begin(), ids.end(), 0ull);
    for (std::size_t t = 0; t < cap; ++t) {
        std::size_t j = t + static_cast<std::size_t>(rng.uniform_index(total - t));
        std::swap(ids[t], ids[j]);
    }
    ids.resize(cap);

    std::vector<std::vector<double>> enc(n);
    for (std::size_t i = 0; i < n; ++i) enc[i] = encode(buffer.at(i).point, space);

    std::vector<PairExample> pairs;
    pairs.reserve(cap);
    for (std::uint64_t id : ids) {
        std::size_t i = static_cast<std::size_t>(id / (n - 1));
        std::size_t r = static_cast<std::size_t>(id % (n - 1));
        std::size_t j = r < i ? r : r + 1;
        PairExample ex;
        ex.x_a = enc[i];
        ex.x_b = enc[j];
        ex.labels.resize(specs.size());
        for (std::size_t sidx = 0; sidx < specs.size(); ++sidx) {
            double a = buffer.at(i).measurement.at(specs[sidx].name);
            double b = buffer.at(j).measurement.at(specs[sidx].name);
            ex.labels[sidx] = kernels::label_of(a, b, specs[sidx].direction);
        }
        pairs.push_back(std::move(ex));
    }
    return pairs;
}

}  // namespace evogate
