#include "brima/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace brima {

bool all_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

DenseMatrix::DenseMatrix(int r, int c) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw ShapeError("DenseMatrix: negative dimensions");
    data.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
}

DenseMatrix DenseMatrix::identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " times " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    DenseMatrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols];
            double* orow = &out.data[static_cast<std::size_t>(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Vector matvec(const DenseMatrix& w, const Vector& x) {
    if (static_cast<std::size_t>(w.cols) != x.size()) {
        throw ShapeError("matvec: matrix cols " + std::to_string(w.cols) +
                         " vs vector length " + std::to_string(x.size()));
    }
    Vector y(static_cast<std::size_t>(w.rows), 0.0);
    for (int i = 0; i < w.rows; ++i) {
        const double* row = &w.data[static_cast<std::size_t>(i) * w.cols];
        double acc = 0.0;
        for (int j = 0; j < w.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::kIdentity: return "identity";
        case Activation::kRectifier: return "rectifier";
        case Activation::kTanh: return "tanh";
    }
    throw ContractError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::kIdentity;
    if (name == "rectifier") return Activation::kRectifier;
    if (name == "tanh") return Activation::kTanh;
    throw ParseError("unknown activation name: " + name);
}

static void apply_activation_inplace(Activation a, Vector& v) {
    switch (a) {
        case Activation::kIdentity: return;
        case Activation::kRectifier:
            for (double& x : v) x = x > 0.0 ? x : 0.0;
            return;
        case Activation::kTanh:
            for (double& x : v) x = std::tanh(x);
            return;
    }
}

// Derivative evaluated from pre- and post-activation values.
static double activation_deriv(Activation a, double pre, double post) {
    switch (a) {
        case Activation::kIdentity: return 1.0;
        case Activation::kRectifier: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::kTanh: return 1.0 - post * post;
    }
    return 1.0;
}

int PerceptronParams::input_dim() const {
    if (layers.empty()) throw ContractError("perceptron has no layers");
    return layers.front().weight.cols;
}

int PerceptronParams::output_dim() const {
    if (layers.empty()) throw ContractError("perceptron has no layers");
    return layers.back().weight.rows;
}

std::size_t PerceptronParams::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
}

PerceptronParams make_perceptron(const std::vector<int>& dims, Activation hidden,
                                 std::mt19937_64& rng, bool zero_final) {
    if (dims.size() < 2) throw ContractError("make_perceptron: need at least input and output dims");
    PerceptronParams p;
    p.layers.reserve(dims.size() - 1);
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        const int fan_in = dims[k];
        const int fan_out = dims[k + 1];
        if (fan_in <= 0 || fan_out <= 0) throw ContractError("make_perceptron: non-positive layer dim");
        Layer layer;
        layer.weight = DenseMatrix(fan_out, fan_in);
        layer.bias.assign(static_cast<std::size_t>(fan_out), 0.0);
        layer.activation = (k + 2 < dims.size()) ? hidden : Activation::kIdentity;
        const bool last = (k + 2 == dims.size());
        if (!(last && zero_final)) {
            const double a = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-a, a);
            for (double& w : layer.weight.data) w = dist(rng);
        }
        p.layers.push_back(std::move(layer));
    }
    return p;
}

Vector perceptron_forward(const PerceptronParams& p, const Vector& x, ForwardCache* cache) {
    if (p.layers.empty()) throw ContractError("perceptron_forward: no layers");
    if (static_cast<int>(x.size()) != p.input_dim()) {
        throw ShapeError("perceptron_forward: input length " + std::to_string(x.size()) +
                         " vs expected " + std::to_string(p.input_dim()));
    }
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
        cache->pre.reserve(p.layers.size());
        cache->post.reserve(p.layers.size());
    }
    Vector cur = x;
    for (const Layer& layer : p.layers) {
        Vector pre = matvec(layer.weight, cur);
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += layer.bias[i];
        Vector post = pre;
        apply_activation_inplace(layer.activation, post);
        if (cache) {
            cache->pre.push_back(pre);
            cache->post.push_back(post);
        }
        cur = std::move(post);
    }
    return cur;
}

PerceptronGrads PerceptronGrads::zeros_like(const PerceptronParams& p) {
    PerceptronGrads g;
    g.weights.reserve(p.layers.size());
    g.biases.reserve(p.layers.size());
    for (const Layer& l : p.layers) {
        g.weights.emplace_back(l.weight.rows, l.weight.cols);
        g.biases.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

void PerceptronGrads::zero() {
    for (DenseMatrix& w : weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    for (Vector& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

static void check_cache(const PerceptronParams& p, const ForwardCache& cache) {
    if (cache.pre.size() != p.layers.size() || cache.post.size() != p.layers.size()) {
        throw ContractError("perceptron_backward: cache layer count mismatch");
    }
    if (static_cast<int>(cache.input.size()) != p.input_dim()) {
        throw ContractError("perceptron_backward: cache input length mismatch");
    }
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        if (static_cast<int>(cache.pre[k].size()) != p.layers[k].weight.rows) {
            throw ContractError("perceptron_backward: stale cache at layer " + std::to_string(k));
        }
    }
}

Vector perceptron_backward(const PerceptronParams& p, const ForwardCache& cache,
                           const Vector& upstream, PerceptronGrads& acc) {
    check_cache(p, cache);
    if (acc.weights.size() != p.layers.size()) {
        throw ContractError("perceptron_backward: gradient accumulator shape mismatch");
    }
    if (static_cast<int>(upstream.size()) != p.output_dim()) {
        throw ShapeError("perceptron_backward: upstream length mismatch");
    }
    Vector delta = upstream;
    for (int k = static_cast<int>(p.layers.size()) - 1; k >= 0; --k) {
        const Layer& layer = p.layers[k];
        const Vector& pre = cache.pre[k];
        const Vector& post = cache.post[k];
        for (std::size_t i = 0; i < delta.size(); ++i) {
            delta[i] *= activation_deriv(layer.activation, pre[i], post[i]);
        }
        const Vector& below = (k == 0) ? cache.input : cache.post[k - 1];
        DenseMatrix& wg = acc.weights[k];
        for (int i = 0; i < layer.weight.rows; ++i) {
            const double di = delta[i];
            acc.biases[k][i] += di;
            if (di == 0.0) continue;
            double* wrow = &wg.data[static_cast<std::size_t>(i) * wg.cols];
            for (int j = 0; j < layer.weight.cols; ++j) wrow[j] += di * below[j];
        }
        Vector next(static_cast<std::size_t>(layer.weight.cols), 0.0);
        for (int i = 0; i < layer.weight.rows; ++i) {
            const double di = delta[i];
            if (di == 0.0) continue;
            const double* wrow = &layer.weight.data[static_cast<std::size_t>(i) * layer.weight.cols];
            for (int j = 0; j < layer.weight.cols; ++j) next[j] += di * wrow[j];
        }
        delta = std::move(next);
    }
    return delta;
}

void collect_blocks(const std::string& prefix, PerceptronParams& p,
                    PerceptronGrads& g, std::vector<ParamBlock>& out) {
    if (g.weights.size() != p.layers.size()) {
        throw ContractError("collect_blocks: gradient layout mismatch for " + prefix);
    }
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        out.push_back({prefix + ".layer" + std::to_string(k) + ".weight",
                       p.layers[k].weight.data.data(), g.weights[k].data.data(),
                       p.layers[k].weight.data.size()});
        out.push_back({prefix + ".layer" + std::to_string(k) + ".bias",
                       p.layers[k].bias.data(), g.biases[k].data(),
                       p.layers[k].bias.size()});
    }
}

void adam_step(AdamState& state, const std::vector<ParamBlock>& blocks) {
    if (state.first_moment.empty()) {
        state.first_moment.resize(blocks.size());
        state.second_moment.resize(blocks.size());
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            state.first_moment[b].assign(blocks[b].size, 0.0);
            state.second_moment[b].assign(blocks[b].size, 0.0);
        }
    }
    if (state.first_moment.size() != blocks.size()) {
        throw ShapeError("adam_step: block count changed between steps");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (state.first_moment[b].size() != blocks[b].size) {
            throw ShapeError("adam_step: accumulator shape mismatch for block " + blocks[b].name);
        }
        for (std::size_t i = 0; i < blocks[b].size; ++i) {
            if (!std::isfinite(blocks[b].grad[i])) {
                throw NumericError("adam_step: non-finite gradient in block " + blocks[b].name);
            }
        }
    }
    state.step += 1;
    const double b1t = std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        Vector& m = state.first_moment[b];
        Vector& v = state.second_moment[b];
        double* theta = blocks[b].value;
        const double* g = blocks[b].grad;
        for (std::size_t i = 0; i < blocks[b].size; ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / (1.0 - b1t);
            const double vhat = v[i] / (1.0 - b2t);
            theta[i] -= state.learning_rate * (mhat / (std::sqrt(vhat) + state.epsilon) +
                                               state.weight_decay * theta[i]);
        }
    }
}

double cosine_lr(double initial, double floor_fraction, int epoch, int total_epochs) {
    if (total_epochs <= 0) throw ContractError("cosine_lr: total_epochs must be positive");
    const double t = std::min(std::max(epoch, 0), total_epochs) /
                     static_cast<double>(total_epochs);
    const double scale = floor_fraction + (1.0 - floor_fraction) * 0.5 * (1.0 + std::cos(M_PI * t));
    return initial * scale;
}

double gradient_check(const std::function<double()>& loss,
                      const std::function<void()>& compute_gradients,
                      const std::vector<ParamBlock>& blocks, double eps) {
    if (eps <= 0.0) throw ContractError("gradient_check: eps must be positive");
    compute_gradients();
    std::vector<Vector> analytic(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        analytic[b].assign(blocks[b].grad, blocks[b].grad + blocks[b].size);
    }
    double worst = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b].size; ++i) {
            double* theta = blocks[b].value + i;
            const double saved = *theta;
            *theta = saved + eps;
            const double up = loss();
            *theta = saved - eps;
            const double down = loss();
            *theta = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("gradient_check: non-finite loss near block " + blocks[b].name);
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[b][i];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace brima
