#include <cmath>

#include "brima/model.hpp"
#include "brima/rng.hpp"
#include "doctest.h"

using namespace brima;

namespace {

ScoringModel zero_weight_model(int input_dim, double bias) {
    ScoringModel model;
    Layer layer;
    layer.weight = DenseMatrix(1, input_dim);
    layer.bias = {bias};
    layer.activation = Activation::kIdentity;
    model.scorer.layers.push_back(std::move(layer));
    return model;
}

}  // namespace

TEST_CASE("predict: zero-weight scorer returns its bias") {
    const auto model = zero_weight_model(4, 2.5);
    const Vector a{1.0, 2.0};
    const Vector b{-3.0, 4.0};
    CHECK(predict(model, {&a, &b}) == 2.5);
}

TEST_CASE("predict rejects unfilled slots") {
    const auto model = zero_weight_model(4, 0.0);
    const Vector a{1.0, 2.0};
    const Vector empty;
    CHECK_THROWS_AS(predict(model, {&a, &empty}), ContractError);
    CHECK_THROWS_AS(predict(model, {&a, nullptr}), ContractError);
}

TEST_CASE("predict: scorer overfit on one sample recovers its score") {
    auto rng = make_rng(41);
    ScoringModel model;
    model.scorer = make_perceptron({4, 8, 1}, Activation::kTanh, rng);
    auto grads = PerceptronGrads::zeros_like(model.scorer);
    std::vector<ParamBlock> blocks;
    collect_blocks("scorer", model.scorer, grads, blocks);
    AdamState opt;
    opt.learning_rate = 0.02;

    const Vector x{0.4, -1.0, 0.2, 0.9};
    const double target = 1.3;
    for (int step = 0; step < 400; ++step) {
        grads.zero();
        ForwardCache cache;
        const double pred = predict_concat(model, x, &cache);
        perceptron_backward(model.scorer, cache, {2.0 * (pred - target)}, grads);
        adam_step(opt, blocks);
    }
    CHECK(std::fabs(predict_concat(model, x) - target) < 1e-3);
}

TEST_CASE("predict: permutation-symmetric scorer ignores swapping equal slots") {
    // Weights tied across the two modality slots.
    ScoringModel model;
    Layer layer;
    layer.weight = DenseMatrix(1, 4);
    layer.weight(0, 0) = 0.5;
    layer.weight(0, 1) = -0.25;
    layer.weight(0, 2) = 0.5;
    layer.weight(0, 3) = -0.25;
    layer.bias = {0.1};
    model.scorer.layers.push_back(std::move(layer));
    const Vector a{1.0, 2.0};
    const Vector b{3.0, -1.0};
    CHECK(predict(model, {&a, &b}) == doctest::Approx(predict(model, {&b, &a})));
}

TEST_CASE("score_loss examples") {
    CHECK(score_loss({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(score_loss({2.0, 4.0}, {1.0, 2.0}) == 2.5);
    CHECK(score_loss({4.0, 2.0}, {2.0, 1.0}) == score_loss({2.0, 4.0}, {1.0, 2.0}));
    CHECK_THROWS_AS(score_loss({}, {}), ContractError);
}

TEST_CASE("total_objective: reductions and linearity") {
    CHECK(total_objective(1.5, 9.0, 7.0, {0.0, 0.0}) == 1.5);
    CHECK(total_objective(1.0, 2.0, 3.0, {1.0, 1.0}) == 6.0);
    const double base = total_objective(1.0, 2.0, 3.0, {1.0, 1.0});
    const double doubled = total_objective(1.0, 2.0, 3.0, {1.0, 2.0});
    CHECK(doubled - base == 3.0);
    CHECK_THROWS_AS(total_objective(std::nan(""), 0.0, 0.0, {1.0, 1.0}), NumericError);
}
