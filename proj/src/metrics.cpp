#include "brima/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace brima {

Vector average_ranks(const Vector& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    Vector ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> srcc(const Vector& truth, const Vector& predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("srcc: length mismatch");
    if (truth.size() < 2) throw ContractError("srcc: need at least two observations");
    const Vector ra = average_ranks(truth);
    const Vector rb = average_ranks(predicted);
    const std::size_t n = ra.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += ra[i];
        mean_b += rb[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
    return cov / std::sqrt(var_a * var_b);
}

double mse(const Vector& truth, const Vector& predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("mse: length mismatch");
    if (truth.empty()) throw ContractError("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - predicted[i];
        acc += d * d;
    }
    return acc / static_cast<double>(truth.size());
}

double rl2(const Vector& truth, const Vector& predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("rl2: length mismatch");
    if (truth.empty()) throw ContractError("rl2: empty input");
    const auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
    const double range = *hi - *lo;
    if (range <= 0.0) throw ContractError("rl2: degenerate ground-truth range");
    return mse(truth, predicted) * 100.0 / (range * range);
}

FisherResult fisher_z_average(const Vector& correlations) {
    if (correlations.empty()) throw ContractError("fisher_z_average: empty input");
    FisherResult result;
    double acc = 0.0;
    double clamped_value = 0.0;
    for (double c : correlations) {
        if (!(c >= -1.0 && c <= 1.0)) {
            throw ContractError("fisher_z_average: correlation outside [-1, 1]");
        }
        if (c == 1.0 || c == -1.0) {
            c = std::copysign(1.0 - 1e-12, c);
            result.clamped = true;
        }
        clamped_value = c;
        acc += std::atanh(c);
    }
    // A single element is its own average; skip the transform round trip.
    result.value = correlations.size() == 1
                       ? clamped_value
                       : std::tanh(acc / static_cast<double>(correlations.size()));
    return result;
}

ForgettingSummary forgetting_from_matrix(
    const std::vector<std::vector<std::optional<double>>>& matrix) {
    ForgettingSummary summary;
    if (matrix.empty()) return summary;
    const std::size_t sessions = matrix.size();
    const std::size_t tasks = matrix.back().size();
    double acc = 0.0;
    int counted = 0;
    for (std::size_t k = 0; k + 1 < tasks; ++k) {
        const auto& last = matrix[sessions - 1][k];
        if (!last.has_value()) continue;
        // Peak over the sessions before the final one, so that improvement
        // on the last session shows up as negative forgetting.
        double peak = 0.0;
        bool seen = false;
        for (std::size_t t = 0; t + 1 < sessions; ++t) {
            if (k < matrix[t].size() && matrix[t][k].has_value()) {
                peak = seen ? std::max(peak, matrix[t][k].value()) : matrix[t][k].value();
                seen = true;
            }
        }
        if (!seen) continue;
        const double f = peak - last.value();
        summary.per_task.push_back(f);
        acc += f;
        ++counted;
    }
    summary.average = counted > 0 ? acc / counted : 0.0;
    return summary;
}

}  // namespace brima
