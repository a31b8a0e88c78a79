#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "brima/error.hpp"

namespace brima {

using Vector = std::vector<double>;

bool all_finite(const Vector& v);

// Row-major dense matrix of doubles.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    Vector data;

    DenseMatrix() = default;
    DenseMatrix(int r, int c);

    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    static DenseMatrix identity(int n);
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// y = W x
Vector matvec(const DenseMatrix& w, const Vector& x);

enum class Activation { kIdentity, kRectifier, kTanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
    DenseMatrix weight;  // out_dim x in_dim
    Vector bias;         // out_dim
    Activation activation = Activation::kIdentity;
};

struct PerceptronParams {
    std::vector<Layer> layers;

    int input_dim() const;
    int output_dim() const;
    std::size_t parameter_count() const;
};

// Builds a perceptron with the given layer dims. Hidden layers use
// `hidden` activation, the last layer is linear. Weights are
// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), biases zero.
// With zero_final the last layer's weight and bias start at exactly zero.
PerceptronParams make_perceptron(const std::vector<int>& dims, Activation hidden,
                                 std::mt19937_64& rng, bool zero_final = false);

struct ForwardCache {
    Vector input;
    std::vector<Vector> pre;   // pre-activation per layer
    std::vector<Vector> post;  // post-activation per layer
};

Vector perceptron_forward(const PerceptronParams& p, const Vector& x,
                          ForwardCache* cache = nullptr);

struct PerceptronGrads {
    std::vector<DenseMatrix> weights;
    std::vector<Vector> biases;

    static PerceptronGrads zeros_like(const PerceptronParams& p);
    void zero();
};

// Accumulates d(output . upstream)/d(params) into `acc` and returns the
// gradient with respect to the input. The cache must come from a forward
// call on the same parameters.
Vector perceptron_backward(const PerceptronParams& p, const ForwardCache& cache,
                           const Vector& upstream, PerceptronGrads& acc);

// Non-owning view of one named parameter block and its gradient.
struct ParamBlock {
    std::string name;
    double* value = nullptr;
    const double* grad = nullptr;
    std::size_t size = 0;
};

void collect_blocks(const std::string& prefix, PerceptronParams& p,
                    PerceptronGrads& g, std::vector<ParamBlock>& out);

struct AdamState {
    long step = 0;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    std::vector<Vector> first_moment;
    std::vector<Vector> second_moment;
};

// One Adam update with bias correction and decoupled weight decay. Moment
// accumulators are sized on the first call and must match afterwards.
void adam_step(AdamState& state, const std::vector<ParamBlock>& blocks);

// Cosine decay from `initial` down to `floor_fraction * initial` at
// epoch == total_epochs.
double cosine_lr(double initial, double floor_fraction, int epoch, int total_epochs);

// Central-difference check: `loss` evaluates the objective at the current
// parameter values, `compute_gradients` fills the gradient storage the
// blocks point at. Returns the max over parameters of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradient_check(const std::function<double()>& loss,
                      const std::function<void()>& compute_gradients,
                      const std::vector<ParamBlock>& blocks, double eps);

}  // namespace brima
