#pragma once

#include <optional>
#include <vector>

#include "brima/numeric.hpp"

namespace brima {

// Average ranks (1-based), ties receive the mean of their rank span.
Vector average_ranks(const Vector& values);

// Spearman rank correlation. Returns nullopt when either argument is
// constant (undefined correlation, excluded from averages downstream).
std::optional<double> srcc(const Vector& truth, const Vector& predicted);

double mse(const Vector& truth, const Vector& predicted);

// Range-normalized mean squared error times 100. The range is taken over
// the ground-truth values; a degenerate range is an error.
double rl2(const Vector& truth, const Vector& predicted);

struct FisherResult {
    double value = 0.0;
    bool clamped = false;  // set when an input of magnitude 1 had to be clamped
};

// tanh(mean(atanh(values))); inputs of exactly +-1 are clamped to
// +-(1 - 1e-12) and flagged.
FisherResult fisher_z_average(const Vector& correlations);

struct ForgettingSummary {
    double average = 0.0;
    Vector per_task;  // one entry per task with index < T-1
};

// `matrix[t][k]` is the task-k score after session t (lower-triangular
// defined). Forgetting for task k is the peak score it ever reached minus
// the final-session score; negative values indicate backward transfer.
ForgettingSummary forgetting_from_matrix(
    const std::vector<std::vector<std::optional<double>>>& matrix);

}  // namespace brima
