#include <doctest.h>

#include <cmath>
#include <random>

#include "hsdc/errors.hpp"
#include "hsdc/split_system.hpp"
#include "hsdc/sweeper.hpp"
#include "support/oracles.hpp"

using namespace hsdc;

namespace {

// dense collocation solve for the scalar test equation: g is affine there,
// g(y) = (lI + lE) y + le y0, so the M x M system is linear
std::vector<double> dahlquist_collocation(const CollocationLevel& lvl, double lI, double lE,
                                          double le, double dt, double y0) {
    const int M = lvl.M;
    std::vector<double> A(M * M), b(M);
    for (int i = 1; i <= M; ++i) {
        auto row = erk_weight_row(lvl, i, dt * le);
        double rowsum = 0.0;
        for (int j = 0; j < M; ++j) {
            A[(i - 1) * M + j] = ((i - 1 == j) ? 1.0 : 0.0) - dt * (lI + lE) * row[j];
            rowsum += row[j];
        }
        b[i - 1] = y0 * (1.0 + dt * le * rowsum);
    }
    return oracles::lu_solve(A, b);
}

} // namespace

TEST_CASE("eval_g: scalar test equation and gating cancellation") {
    auto lvl = CollocationLevel::radau(3);

    auto sys = make_dahlquist(-2.0, 0.5, -3.0, 1.0);
    StepNodes step(lvl, sys->layout(), 0.0, 0.1);
    State y0 = sys->initial_state();
    step.spread(y0);
    step.refresh_linearization(*sys);
    State yj(sys->layout());
    yj[0] = 0.7;
    step.set_node(2, yj);
    // g(y_j) = (lI + lE) y_j + le y_0
    const double want = (-2.0 + 0.5) * 0.7 + (-3.0) * 1.0;
    CHECK(std::abs(step.eval_g(*sys, 2)[0] - want) < 1e-14);

    // pure gating: g is independent of y_j
    auto gate = make_linear_gating(-1000.0, 0.25, 1.0);
    StepNodes gstep(lvl, gate->layout(), 0.0, 0.1);
    gstep.spread(gate->initial_state());
    gstep.refresh_linearization(*gate);
    State a(gate->layout()), b(gate->layout());
    a[0] = 0.9;
    b[0] = 0.1;
    gstep.set_node(1, a);
    gstep.set_node(2, b);
    const double g_const = -1000.0 * (1.0 - 0.25);
    CHECK(std::abs(gstep.eval_g(*gate, 1)[0] - g_const) < 1e-11);
    CHECK(std::abs(gstep.eval_g(*gate, 2)[0] - g_const) < 1e-11);

    // at the gating equilibrium g reduces to f_I + f_E = 0 for this problem
    auto eq = make_linear_gating(-50.0, 0.3, 0.3);
    StepNodes estep(lvl, eq->layout(), 0.0, 0.1);
    estep.spread(eq->initial_state());
    estep.refresh_linearization(*eq);
    CHECK(std::abs(estep.eval_g(*eq, 1)[0]) < 1e-15);
}

TEST_CASE("eval_g: stale linearization is an error") {
    auto sys = make_dahlquist(-1, 0, -1, 1.0);
    auto lvl = CollocationLevel::radau(2);
    StepNodes step(lvl, sys->layout(), 0.0, 0.1);
    step.spread(sys->initial_state());
    step.refresh_linearization(*sys);
    (void)step.eval_g(*sys, 1);

    State moved(sys->layout());
    moved[0] = 0.5;
    step.set_node0(moved);
    CHECK_THROWS_AS(step.eval_g(*sys, 1), InternalStateError);
    CHECK_THROWS_AS(step.lambda_n(), InternalStateError);
    step.refresh_linearization(*sys);
    CHECK_NOTHROW(step.eval_g(*sys, 1));
}

TEST_CASE("collocation residual: fixed point, spread guess, dense solution") {
    auto lvl = CollocationLevel::radau(3);

    // spread guess on a problem with g(y0) = 0 gives a zero residual
    auto eq = make_linear_gating(-50.0, 0.3, 0.3);
    StepNodes estep(lvl, eq->layout(), 0.0, 0.2);
    estep.spread(eq->initial_state());
    CHECK(collocation_residual(*eq, estep).norm < 1e-15);

    // spread guess on lI = -1: residual_i = -dt c_i y0
    auto sys = make_dahlquist(-1.0, 0.0, 0.0, 1.0);
    StepNodes step(lvl, sys->layout(), 0.0, 0.25);
    step.spread(sys->initial_state());
    std::vector<State> rows;
    auto info = collocation_residual(*sys, step, &rows);
    for (int i = 1; i <= 3; ++i)
        CHECK(std::abs(rows[i - 1][0] + 0.25 * lvl.nodes[i - 1]) < 1e-13);
    CHECK(std::abs(info.norm - 0.25) < 1e-13);

    // the dense collocation solution has a vanishing residual
    auto rich = make_dahlquist(-1.0, -0.5, -2.0, 1.0);
    auto dense = dahlquist_collocation(lvl, -1.0, -0.5, -2.0, 0.2, 1.0);
    StepNodes rstep(lvl, rich->layout(), 0.0, 0.2);
    rstep.spread(rich->initial_state());
    for (int i = 1; i <= 3; ++i) {
        State v(rich->layout());
        v[0] = dense[i - 1];
        rstep.set_node(i, v);
    }
    CHECK(collocation_residual(*rich, rstep).norm < 1e-13);
}

TEST_CASE("sweep: pure gating reaches the exponential solution at the nodes") {
    auto lvl = CollocationLevel::radau(5);
    for (double lam : {-10.0, -1e3, -1e5}) {
        auto sys = make_linear_gating(lam, 0.25, 1.0);
        StepNodes step(lvl, sys->layout(), 0.0, 0.37);
        step.spread(sys->initial_state());
        // iterate to the fixed point
        for (int k = 0; k < 60; ++k) {
            State before = step.node(5);
            sweep(*sys, step, step);
            if (max_abs_diff(before, step.node(5)) < 1e-13) break;
        }
        for (int i = 1; i <= 5; ++i) {
            const double exact = 0.25 + std::exp(lam * lvl.nodes[i - 1] * 0.37) * 0.75;
            CHECK(std::abs(step.node(i)[0] - exact) <= 1e-10 * std::abs(exact));
        }
    }
}

TEST_CASE("sweep: zero dynamics is the identity, node 0 untouched") {
    auto sys = make_dahlquist(0, 0, 0, 1.25);
    auto lvl = CollocationLevel::radau(4);
    StepNodes step(lvl, sys->layout(), 0.0, 0.5);
    step.spread(sys->initial_state());
    State n0 = step.node(0);
    for (int k = 0; k < 3; ++k) sweep(*sys, step, step);
    for (int i = 0; i <= 4; ++i) CHECK(step.node(i)[0] == 1.25);
    CHECK(step.node(0) == n0);
}

TEST_CASE("sweep: explicit-only update matches a hand-rolled reference") {
    // Dahlquist with lambda_E only, M = 2, one sweep from the spread guess
    const double lE = -0.8, dt = 0.3, y0 = 1.0;
    auto sys = make_dahlquist(0.0, lE, 0.0, y0);
    auto lvl = CollocationLevel::radau(2);
    StepNodes step(lvl, sys->layout(), 0.0, dt);
    step.spread(sys->initial_state());
    sweep(*sys, step, step);

    // reference: forward substitution of the preconditioned update
    double ref[3] = {y0, 0.0, 0.0};
    for (int i = 1; i <= 2; ++i) {
        double quad = 0.0;
        for (int j = 1; j <= 2; ++j) {
            double c = lvl.a0(i - 1, j - 1);
            if (i > 1) c -= lvl.a0(i - 2, j - 1);
            quad += c * lE * y0; // g at the spread guess
        }
        ref[i] = ref[i - 1] + lvl.deltas[i - 1] * dt * lE * (ref[i - 1] - y0) + dt * quad;
    }
    CHECK(std::abs(step.node(1)[0] - ref[1]) < 1e-14);
    CHECK(std::abs(step.node(2)[0] - ref[2]) < 1e-14);
}

TEST_CASE("sweep: naive variant with implicit term only is a backward-Euler chain") {
    // Lambda_n = 0 and f_E = f_e = 0: each node does one implicit solve
    const double lI = -4.0, dt = 0.25, y0 = 1.0;
    auto sys = make_dahlquist(lI, 0.0, 0.0, y0);
    auto lvl = CollocationLevel::radau(2);
    StepNodes step(lvl, sys->layout(), 0.0, dt, Variant::naive_sdc);
    step.spread(sys->initial_state());
    sweep(*sys, step, step);

    double ref[3] = {y0, 0.0, 0.0};
    for (int i = 1; i <= 2; ++i) {
        double quad = 0.0;
        for (int j = 1; j <= 2; ++j) {
            double c = lvl.a0(i - 1, j - 1);
            if (i > 1) c -= lvl.a0(i - 2, j - 1);
            quad += c * lI * y0;
        }
        const double h = lvl.deltas[i - 1] * dt;
        ref[i] = (ref[i - 1] - h * lI * y0 + dt * quad) / (1.0 - h * lI);
    }
    CHECK(std::abs(step.node(1)[0] - ref[1]) < 1e-14);
    CHECK(std::abs(step.node(2)[0] - ref[2]) < 1e-14);
}

TEST_CASE("solve_step: accuracy, iteration cap, divergence") {
    auto sys = make_dahlquist(-1, -1, -1, 1.0);
    auto lvl = CollocationLevel::radau(4);
    auto res = solve_step(*sys, lvl, sys->initial_state(), 0.0, 0.1, 1e-12, 100);
    CHECK(res.converged);
    CHECK(std::abs(res.nodes.node(4)[0] - std::exp(-0.3)) <= 1e-9);

    auto capped = solve_step(*sys, lvl, sys->initial_state(), 0.0, 0.1, 1e-30, 1);
    CHECK(capped.iterations == 1);
    CHECK(!capped.converged);

    CHECK_THROWS_AS(solve_step(*sys, lvl, sys->initial_state(), 0.0, 0.1, 0.0, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(solve_step(*sys, lvl, sys->initial_state(), 0.0, 0.1, 1e-12, 0),
                    std::invalid_argument);

    // an explicitly treated stiff rate at a large step diverges loudly
    auto stiff = make_dahlquist(0.0, -2.0, -500.0, 1.0);
    CHECK_THROWS_AS(
        {
            auto r = solve_step(*stiff, CollocationLevel::radau(6), stiff->initial_state(), 0.0,
                                1.0, 1e-12, 100, Variant::naive_sdc);
            (void)r;
        },
        DivergenceError);
}

TEST_CASE("solve_step: order increases by one per sweep") {
    auto lvl = CollocationLevel::radau(4);
    const double T = 0.4;
    const std::vector<double> dts{0.1, 0.05, 0.025, 0.0125};
    for (int K = 1; K <= 5; ++K) {
        std::vector<double> errs;
        for (double dt : dts) {
            auto sys = make_dahlquist(-1.0, -0.7, -0.5, 1.0);
            State y = sys->initial_state();
            double t = 0.0;
            const int n = static_cast<int>(std::lround(T / dt));
            for (int s = 0; s < n; ++s) {
                auto r = solve_step(*sys, lvl, y, t, dt, 1e-300, K, Variant::hsdc);
                y = r.nodes.node(4);
                t += dt;
            }
            errs.push_back(std::abs(y[0] - std::exp((-1.0 - 0.7 - 0.5) * T)));
        }
        std::vector<double> orders;
        for (std::size_t i = 1; i < errs.size(); ++i)
            orders.push_back(std::log2(errs[i - 1] / errs[i]));
        std::sort(orders.begin(), orders.end());
        const double median = orders[orders.size() / 2];
        // at least order K per sweep; the scalar problem superconverges at
        // the right endpoint, so allow up to one extra order
        CHECK(median > K - 0.4);
        CHECK(median < K + 1.7);
    }
}

TEST_CASE("solve_step: iterated sweeps land on the dense collocation solution") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int M : {2, 3, 4}) {
        auto lvl = CollocationLevel::radau(M);
        for (int trial = 0; trial < 5; ++trial) {
            const double lI = -uni(rng), lE = -uni(rng), le = -uni(rng);
            const double dt = 0.5 / std::max({std::abs(lI), std::abs(lE), std::abs(le), 1.0});
            auto sys = make_dahlquist(lI, lE, le, 1.0);
            auto res = solve_step(*sys, lvl, sys->initial_state(), 0.0, dt, 1e-13, 200);
            CHECK(res.rel_residual <= 1e-12);
            auto dense = dahlquist_collocation(lvl, lI, lE, le, dt, 1.0);
            for (int i = 1; i <= M; ++i)
                CHECK(std::abs(res.nodes.node(i)[0] - dense[i - 1]) < 1e-11);
        }
    }
}

TEST_CASE("solve_step: stable on the stiff scalar grid at unit step size") {
    // single sweeps stay bounded (intermediate iterates can top |y| = 1 by
    // a few 1e-4 before contracting); the converged solution is inside the
    // unit disk everywhere on the grid
    auto lvl = CollocationLevel::radau(6);
    for (double lI : {0.0, -1.0, -10.0, -100.0, -1000.0}) {
        for (double le : {0.0, -1.0, -10.0, -100.0, -1000.0}) {
            auto sys = make_dahlquist(lI, -2.0, le, 1.0);
            for (int K : {1, 2}) {
                auto res = solve_step(*sys, lvl, sys->initial_state(), 0.0, 1.0, 1e-10, K);
                CHECK(std::abs(res.nodes.node(6)[0]) <= 1.0 + 1e-2);
            }
            auto res = solve_step(*sys, lvl, sys->initial_state(), 0.0, 1.0, 1e-10, 100);
            CHECK(std::abs(res.nodes.node(6)[0]) <= 1.0 + 1e-9);
        }
    }
}
