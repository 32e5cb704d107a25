#include <doctest.h>

#include <cmath>
#include <random>

#include "hsdc/collocation.hpp"
#include "hsdc/errors.hpp"
#include "support/oracles.hpp"

using namespace hsdc;

namespace {
double factorial(int k) {
    double f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}
} // namespace

TEST_CASE("radau nodes: known values") {
    CHECK(radau_nodes(1) == std::vector<double>{1.0});

    auto c2 = radau_nodes(2);
    CHECK(std::abs(c2[0] - 1.0 / 3.0) < 1e-14);
    CHECK(c2[1] == 1.0);

    auto c3 = radau_nodes(3);
    CHECK(std::abs(c3[0] - (4.0 - std::sqrt(6.0)) / 10.0) < 1e-14);
    CHECK(std::abs(c3[1] - (4.0 + std::sqrt(6.0)) / 10.0) < 1e-14);
    CHECK(c3[2] == 1.0);

    CHECK_THROWS_AS(radau_nodes(0), std::invalid_argument);
    CHECK_THROWS_AS(radau_nodes(-2), std::invalid_argument);
}

TEST_CASE("radau nodes: bisection oracle up to M=8") {
    for (int M = 2; M <= 8; ++M) {
        // roots of P_{M-1} - P_M on (-1,1), found independently by bisection
        auto q = [M](double x) {
            double p0 = 1.0, p1 = x;
            for (int n = 1; n < M; ++n) {
                double p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
                p0 = p1;
                p1 = p2;
            }
            return p0 - p1;
        };
        auto interior = oracles::bisect_roots(q, -1.0, 1.0 - 1e-7, 4000 * M);
        REQUIRE(interior.size() == static_cast<std::size_t>(M - 1));
        auto c = radau_nodes(M);
        REQUIRE(static_cast<int>(c.size()) == M);
        for (int i = 0; i < M - 1; ++i)
            CHECK(std::abs(c[i] - 0.5 * (interior[i] + 1.0)) < 1e-14);
        CHECK(c.back() == 1.0);
        for (int i = 1; i < M; ++i) CHECK(c[i] > c[i - 1]);
        CHECK(c.front() > 0.0);
    }
}

TEST_CASE("fornberg weights: two-node values and errors") {
    auto w1 = fornberg_weights({1.0});
    CHECK(w1(0, 0) == 1.0);

    auto w = fornberg_weights({1.0 / 3.0, 1.0});
    CHECK(std::abs(w(0, 0) - 1.5) < 1e-14);
    CHECK(std::abs(w(0, 1) + 0.5) < 1e-14);
    CHECK(std::abs(w(1, 0) + 1.5) < 1e-14);
    CHECK(std::abs(w(1, 1) - 1.5) < 1e-14);

    CHECK_THROWS_AS(fornberg_weights({0.5, 0.5}), DegenerateNodesError);
}

TEST_CASE("fornberg weights: derivative exactness on monomials") {
    for (int M = 1; M <= 8; ++M) {
        auto nodes = radau_nodes(M);
        auto w = fornberg_weights(nodes);
        // p(s) = s^j has p^{(k)}(0) = k! when j == k, else 0 (j <= M-1);
        // the tolerance tracks the cancellation in the weighted sum
        for (int j = 0; j < M; ++j) {
            for (int k = 0; k < M; ++k) {
                double s = 0.0, cond = 1.0;
                for (int l = 0; l < M; ++l) {
                    const double term = w(k, l) * std::pow(nodes[l], j);
                    s += term;
                    cond += std::abs(term);
                }
                const double expect = (j == k) ? factorial(k) : 0.0;
                CHECK(std::abs(s - expect) < 1e-12 * cond);
            }
        }
    }
}

TEST_CASE("fornberg consistency: Taylor form reproduces Lagrange basis") {
    std::mt19937 rng(20240517);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int M = 2; M <= 8; ++M) {
        auto nodes = radau_nodes(M);
        auto w = fornberg_weights(nodes);
        for (int trial = 0; trial < 100; ++trial) {
            const double s = uni(rng);
            for (int j = 0; j < M; ++j) {
                double taylor = 0.0, spow = 1.0;
                for (int k = 1; k <= M; ++k) {
                    taylor += spow / factorial(k - 1) * w(k - 1, j);
                    spow *= s;
                }
                CHECK(std::abs(taylor - oracles::lagrange_basis(nodes, j, s)) < 1e-11);
            }
        }
    }
}

TEST_CASE("phi: analytic values and argument checks") {
    CHECK(phi_k(0.0, 1) == 1.0);
    CHECK(phi_k(0.0, 2) == 0.5);
    CHECK(std::abs(phi_k(1.0, 1) - (std::exp(1.0) - 1.0)) < 1e-14);
    CHECK_THROWS_AS(phi_k(1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(phi_k(std::nan(""), 1), NonFiniteError);
    CHECK_THROWS_AS(phi_k(std::numeric_limits<double>::infinity(), 2), NonFiniteError);
}

TEST_CASE("phi: adaptive-quadrature oracle over the stiff range") {
    for (double z : {-1e-3, -0.5, -1.0, -37.0, -100.0, -1e4, -1e5}) {
        for (int k = 1; k <= 8; ++k) {
            const double got = phi_k(z, k);
            const double want = static_cast<double>(oracles::adaptive_quad(
                [z, k](long double r) {
                    return std::exp((1.0L - r) * static_cast<long double>(z)) *
                           std::pow(r, static_cast<long double>(k - 1)) /
                           static_cast<long double>(factorial(k - 1));
                },
                0.0, 1.0, 1e-15));
            CHECK(std::abs(got - want) <= 1e-12 * std::abs(want));
        }
    }
}

TEST_CASE("phi recurrence: phi_{k+1}(z) = (phi_k(z) - 1/k!)/z") {
    // evaluated through the long-double path: near z = -1e-6 the subtraction
    // cancels ~10 digits, which double-precision phi values cannot spare
    for (double expo = -6.0; expo <= 4.0001; expo += 0.25) {
        const long double z = -std::pow(10.0L, static_cast<long double>(expo));
        long double phis[7];
        detail::phi_all_ld(z, 7, phis);
        long double fact = 1.0L;
        for (int k = 1; k <= 6; ++k) {
            fact *= k;
            const long double lhs = (phis[k - 1] - 1.0L / fact) / z;
            CHECK(static_cast<double>(std::abs(lhs - phis[k])) <=
                  1e-10 * static_cast<double>(std::abs(phis[k])));
        }
    }
}

TEST_CASE("erk weights: z = 0 reproduces the Radau IIA tableau") {
    auto lvl = CollocationLevel::radau(2);
    CHECK(std::abs(lvl.a0(0, 0) - 5.0 / 12.0) < 1e-13);
    CHECK(std::abs(lvl.a0(0, 1) + 1.0 / 12.0) < 1e-13);
    CHECK(std::abs(lvl.a0(1, 0) - 3.0 / 4.0) < 1e-13);
    CHECK(std::abs(lvl.a0(1, 1) - 1.0 / 4.0) < 1e-13);

    auto row = erk_weight_row(lvl, 1, 0.0);
    CHECK(std::abs(row[0] - 5.0 / 12.0) < 1e-13);
    CHECK(std::abs(row[1] + 1.0 / 12.0) < 1e-13);

    CHECK_THROWS_AS(erk_weight_row(lvl, 0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(erk_weight_row(lvl, 3, 0.0), std::invalid_argument);
}

TEST_CASE("erk weights: row sums at z = 0 equal c_i") {
    for (int M : {1, 2, 3, 4, 6, 8}) {
        auto lvl = CollocationLevel::radau(M);
        for (int i = 1; i <= M; ++i) {
            double s = 0.0;
            for (int j = 0; j < M; ++j) s += lvl.a0(i - 1, j);
            CHECK(std::abs(s - lvl.nodes[i - 1]) < 1e-12);
        }
    }
}

TEST_CASE("erk weights: polynomial exactness of the z = 0 quadrature") {
    // integrating s^j over [0, c_i] for every monomial of degree <= M-1
    for (int M : {2, 3, 4, 6, 8}) {
        auto lvl = CollocationLevel::radau(M);
        for (int j = 0; j < M; ++j) {
            for (int i = 1; i <= M; ++i) {
                double q = 0.0;
                for (int l = 0; l < M; ++l) q += lvl.a0(i - 1, l) * std::pow(lvl.nodes[l], j);
                const double exact = std::pow(lvl.nodes[i - 1], j + 1) / (j + 1);
                CHECK(std::abs(q - exact) <= 1e-12);
            }
        }
    }
}

TEST_CASE("erk weights: a_11(-1) for M=2 matches the defining integral") {
    auto lvl = CollocationLevel::radau(2);
    auto row = erk_weight_row(lvl, 1, -1.0);
    // closed form of int_0^{1/3} e^{(1/3-s)(-1)} ell_1(s) ds
    const double frozen = 2.5 - 3.0 * std::exp(-1.0 / 3.0); // 0.35040606827863208
    CHECK(std::abs(row[0] - frozen) < 1e-13);

    const double via_quad = static_cast<double>(oracles::adaptive_quad(
        [&](long double s) {
            return std::exp((1.0L / 3.0L - s) * -1.0L) * oracles::lagrange_basis_ld(lvl.nodes, 0, s);
        },
        0.0, 1.0 / 3.0, 1e-15));
    CHECK(std::abs(row[0] - via_quad) <= 1e-10 * std::abs(via_quad));
}

TEST_CASE("erk weights: adaptive-quadrature oracle across M and stiff z") {
    // relative error measured row-wise in the infinity norm: entries that
    // nearly cancel (|a_ij| ~ 1e-4 of the row) are meaningful only relative
    // to the row scale they enter the scheme at
    for (int M : {2, 3, 4, 6, 8}) {
        auto lvl = CollocationLevel::radau(M);
        for (double z : {0.0, -1.0, -100.0, -1e4}) {
            for (int i = 1; i <= M; ++i) {
                const double ci = lvl.nodes[i - 1];
                std::vector<double> want(M);
                double row_scale = 0.0;
                for (int j = 0; j < M; ++j) {
                    want[j] = static_cast<double>(oracles::adaptive_quad(
                        [&](long double s) {
                            return std::exp((ci - s) * static_cast<long double>(z)) *
                                   oracles::lagrange_basis_ld(lvl.nodes, j, s);
                        },
                        0.0, ci, 1e-15));
                    row_scale = std::max(row_scale, std::abs(want[j]));
                }
                auto row = erk_weight_row(lvl, i, z);
                for (int j = 0; j < M; ++j)
                    CHECK(std::abs(row[j] - want[j]) <= 1e-10 * row_scale);
            }
        }
    }
}

TEST_CASE("interp matrix: coincident, exact and random-target cases") {
    const std::vector<double> from{1.0 / 3.0, 1.0};
    auto ident = interp_matrix(from, from);
    CHECK(ident(0, 0) == 1.0);
    CHECK(ident(0, 1) == 0.0);
    CHECK(ident(1, 0) == 0.0);
    CHECK(ident(1, 1) == 1.0);

    auto hit = interp_matrix(from, {1.0});
    CHECK(hit(0, 0) == 0.0);
    CHECK(hit(0, 1) == 1.0);

    auto mid = interp_matrix(from, {2.0 / 3.0});
    CHECK(std::abs(mid(0, 0) - 0.5) < 1e-14);
    CHECK(std::abs(mid(0, 1) - 0.5) < 1e-14);

    CHECK_THROWS_AS(interp_matrix({0.5, 0.5}, {0.25}), DegenerateNodesError);
}

TEST_CASE("interp matrix: reproduces polynomials of degree M-1") {
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int M : {2, 3, 5, 8}) {
        auto nodes = radau_nodes(M);
        std::vector<double> coef(M);
        for (double& c : coef) c = uni(rng) - 0.5;
        auto poly = [&](double s) {
            double v = 0.0, p = 1.0;
            for (int k = 0; k < M; ++k) {
                v += coef[k] * p;
                p *= s;
            }
            return v;
        };
        std::vector<double> targets(7);
        for (double& t : targets) t = uni(rng);
        auto P = interp_matrix(nodes, targets);
        for (std::size_t r = 0; r < targets.size(); ++r) {
            double v = 0.0;
            for (int j = 0; j < M; ++j) v += P(r, j) * poly(nodes[j]);
            CHECK(std::abs(v - poly(targets[r])) < 1e-11);
        }
    }
}
