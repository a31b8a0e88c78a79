#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "brima/metrics.hpp"
#include "brima/rng.hpp"
#include "doctest.h"

using namespace brima;

namespace {

// Brute-force references written independently of the library path.
double reference_spearman(const Vector& a, const Vector& b) {
    auto naive_ranks = [](const Vector& v) {
        Vector r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0.0, equal = 0.0;
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (v[j] < v[i]) less += 1.0;
                if (v[j] == v[i]) equal += 1.0;
            }
            r[i] = less + 0.5 * (equal + 1.0);
        }
        return r;
    };
    const Vector ra = naive_ranks(a);
    const Vector rb = naive_ranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double num = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / (std::sqrt(va) * std::sqrt(vb));
}

double reference_mse(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / a.size();
}

double reference_rl2(const Vector& y, const Vector& p) {
    double lo = y[0], hi = y[0];
    for (double v : y) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        acc += (y[i] - p[i]) * (y[i] - p[i]) / ((hi - lo) * (hi - lo));
    }
    return acc / y.size() * 100.0;
}

}  // namespace

TEST_CASE("srcc: perfect, reversed, and the d-squared oracle") {
    const Vector y{1.0, 2.0, 3.0};
    CHECK(*srcc(y, y) == 1.0);
    CHECK(*srcc(y, Vector{-1.0, -2.0, -3.0}) == -1.0);
    // ranks (1,2,3) vs (1,3,2): 1 - 6*2/(3*8) = 0.5
    CHECK(*srcc(y, Vector{10.0, 30.0, 20.0}) == 0.5);
}

TEST_CASE("srcc: ties receive average ranks") {
    CHECK(average_ranks({5.0, 1.0, 5.0}) == Vector{2.5, 1.0, 2.5});
    // against scipy.stats.spearmanr([1,2,2,3],[1,2,3,4]) = 0.9486832980505139
    const auto rho = srcc({1.0, 2.0, 2.0, 3.0}, {1.0, 2.0, 3.0, 4.0});
    CHECK(*rho == doctest::Approx(0.9486832980505139).epsilon(1e-12));
}

TEST_CASE("srcc: constant input is an undefined-correlation signal") {
    CHECK(!srcc({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}).has_value());
    CHECK(!srcc({1.0, 2.0, 3.0}, {4.0, 4.0, 4.0}).has_value());
    CHECK_THROWS_AS(srcc({1.0}, {1.0}), ContractError);
}

TEST_CASE("srcc is invariant under strictly increasing transforms") {
    auto rng = make_rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        Vector a(30), b(30);
        for (double& v : a) v = gauss(rng);
        for (double& v : b) v = gauss(rng);
        Vector a_mapped(a.size()), b_mapped(b.size());
        for (std::size_t j = 0; j < a.size(); ++j) {
            a_mapped[j] = std::exp(2.0 * a[j]) + a[j];
            b_mapped[j] = std::atan(b[j]) * 3.0;
        }
        CHECK(*srcc(a, b) == doctest::Approx(*srcc(a_mapped, b_mapped)).epsilon(1e-12));
    }
}

TEST_CASE("mse and rl2 match their oracles") {
    CHECK(mse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(rl2({0.0, 10.0}, {0.0, 10.0}) == 0.0);
    CHECK(mse({1.0, 2.0}, {2.0, 4.0}) == 2.5);
    CHECK(rl2({0.0, 10.0}, {1.0, 9.0}) == 1.0);
    CHECK_THROWS_AS(rl2({3.0, 3.0}, {1.0, 2.0}), ContractError);
}

TEST_CASE("rl2 is invariant under common positive affine rescaling") {
    auto rng = make_rng(32);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector y(40), p(40);
    for (double& v : y) v = gauss(rng);
    for (double& v : p) v = gauss(rng);
    const double base = rl2(y, p);
    Vector y2(y.size()), p2(p.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y2[i] = 3.5 * y[i] + 11.0;
        p2[i] = 3.5 * p[i] + 11.0;
    }
    CHECK(rl2(y2, p2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("metrics agree with brute-force references on random data") {
    auto rng = make_rng(33);
    std::uniform_int_distribution<int> size_dist(2, 500);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> quantize(0, 1);
    for (int i = 0; i < 100; ++i) {
        const int n = size_dist(rng);
        Vector y(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
        const bool ties = quantize(rng) == 1;
        for (double& v : y) v = ties ? std::round(gauss(rng) * 3.0) : gauss(rng);
        for (double& v : p) v = ties ? std::round(gauss(rng) * 3.0) : gauss(rng);
        const auto lib = srcc(y, p);
        if (lib.has_value()) {
            CHECK(*lib == doctest::Approx(reference_spearman(y, p)).epsilon(1e-9));
        }
        CHECK(mse(y, p) == doctest::Approx(reference_mse(y, p)).epsilon(1e-9));
        const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        if (*hi > *lo) {
            CHECK(rl2(y, p) == doctest::Approx(reference_rl2(y, p)).epsilon(1e-9));
        }
    }
}

TEST_CASE("fisher-z average: fixed point, closed form, bounds") {
    CHECK(fisher_z_average({0.37, 0.37, 0.37}).value == doctest::Approx(0.37).epsilon(1e-12));
    CHECK(fisher_z_average({0.62}).value == 0.62);
    // tanh(mean(atanh(0), atanh(0.8))) = tanh(ln(3)/2) = 1/2
    CHECK(fisher_z_average({0.0, 0.8}).value == doctest::Approx(0.5).epsilon(1e-15));

    auto rng = make_rng(34);
    std::uniform_real_distribution<double> uni(-0.99, 0.99);
    for (int i = 0; i < 50; ++i) {
        Vector values(5);
        for (double& v : values) v = uni(rng);
        const double avg = fisher_z_average(values).value;
        CHECK(avg >= *std::min_element(values.begin(), values.end()) - 1e-12);
        CHECK(avg <= *std::max_element(values.begin(), values.end()) + 1e-12);
    }
}

TEST_CASE("fisher-z average clamps and flags correlations of magnitude one") {
    const FisherResult r = fisher_z_average({1.0, 0.5});
    CHECK(r.clamped);
    CHECK(r.value < 1.0);
    CHECK_THROWS_AS(fisher_z_average({1.5}), ContractError);
}

TEST_CASE("forgetting: constant matrix, two-session oracle, signed transfer") {
    using Row = std::vector<std::optional<double>>;
    CHECK(forgetting_from_matrix({Row{0.5, std::nullopt}, Row{0.5, 0.5}}).average == 0.0);

    const auto summary = forgetting_from_matrix({Row{0.8, std::nullopt}, Row{0.6, 0.9}});
    CHECK(summary.average == doctest::Approx(0.2));
    CHECK(summary.per_task.size() == 1);

    // Backward transfer shows up as negative forgetting.
    const auto neg = forgetting_from_matrix({Row{0.4, std::nullopt}, Row{0.7, 0.9}});
    CHECK(neg.average == doctest::Approx(-0.3));
}
