#include <doctest.h>

#include <cmath>
#include <random>

#include "hsdc/errors.hpp"
#include "hsdc/pfasst.hpp"
#include "hsdc/split_system.hpp"
#include "support/oracles.hpp"

using namespace hsdc;

TEST_CASE("hierarchy: transfer operators reproduce coarse polynomials") {
    LevelHierarchy hier({4, 2});
    const Matrix& R = hier.restriction(0);
    const Matrix& T = hier.prolongation(0);
    CHECK(R.rows == 3);
    CHECK(R.cols == 5);
    CHECK(R(0, 0) == 1.0);
    CHECK(T(0, 0) == 1.0);

    // R T = identity on coarse node vectors
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t r = 0; r < 3; ++r) {
            double v = 0.0;
            for (std::size_t q = 0; q < 5; ++q) v += R(r, q) * T(q, c);
            CHECK(std::abs(v - (r == c ? 1.0 : 0.0)) < 1e-13);
        }
    }

    // both operators map constant node vectors to constants
    for (std::size_t r = 0; r < R.rows; ++r) {
        double s = 0.0;
        for (std::size_t q = 0; q < R.cols; ++q) s += R(r, q);
        CHECK(std::abs(s - 1.0) < 1e-13);
    }
    for (std::size_t r = 0; r < T.rows; ++r) {
        double s = 0.0;
        for (std::size_t q = 0; q < T.cols; ++q) s += T(r, q);
        CHECK(std::abs(s - 1.0) < 1e-13);
    }

    // node M is shared exactly: the last restriction row picks the last node
    CHECK(R(2, 4) == 1.0);
    CHECK(R(2, 1) == 0.0);

    CHECK_THROWS_AS(LevelHierarchy({4, 4}), std::invalid_argument);
    CHECK_THROWS_AS(LevelHierarchy({2, 4}), std::invalid_argument);
    CHECK_THROWS_AS(LevelHierarchy(std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("restrict/prolong blocks: constants, round trip, cubic sampling") {
    auto sys = make_dahlquist(-1, 0, -1, 1.0);
    LevelHierarchy hier({4, 2});
    const int P = 3;
    BlockState block = make_block(*sys, hier, P, 0.0, 0.1, Variant::hsdc);

    // constant-in-node block restricts to the identical constant block
    for (int p = 0; p < P; ++p) block.steps[0][p].spread(sys->initial_state());
    restrict_block(*sys, hier, block, 0);
    for (int p = 0; p < P; ++p)
        for (int i = 0; i <= 2; ++i)
            CHECK(std::abs(block.restricted[1][p].node(i)[0] - 1.0) < 1e-14);

    // values of s^3 at fine nodes restrict to exact samples at coarse nodes
    const auto& fine = hier.level(0);
    const auto& coarse = hier.level(1);
    for (int i = 1; i <= 4; ++i) {
        State v(sys->layout());
        v[0] = std::pow(fine.nodes[i - 1], 3);
        block.steps[0][0].set_node(i, v);
    }
    State z0(sys->layout());
    block.steps[0][0].set_node0(z0);
    restrict_block(*sys, hier, block, 0);
    for (int i = 1; i <= 2; ++i)
        CHECK(std::abs(block.restricted[1][0].node(i)[0] - std::pow(coarse.nodes[i - 1], 3)) <
              1e-13);

    // restrict of prolonged coarse values is the identity
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<double> cvals{uni(rng), uni(rng), uni(rng)};
    for (int i = 0; i <= 2; ++i) {
        State v(sys->layout());
        v[0] = cvals[i];
        if (i == 0)
            block.steps[1][0].set_node0(v);
        else
            block.steps[1][0].set_node(i, v);
    }
    prolong_block(*sys, hier, block, 1); // writes level 0
    restrict_block(*sys, hier, block, 0);
    for (int i = 0; i <= 2; ++i)
        CHECK(std::abs(block.restricted[1][0].node(i)[0] - cvals[i]) < 1e-13);

    CHECK_THROWS_AS(restrict_block(*sys, hier, block, 1), std::invalid_argument);
    CHECK_THROWS_AS(prolong_block(*sys, hier, block, 0), std::invalid_argument);
}

TEST_CASE("fas tau: zero dynamics and the dense-operator oracle") {
    LevelHierarchy hier({4, 2});

    // g == 0 gives tau == 0
    auto still = make_dahlquist(0, 0, 0, 1.0);
    BlockState b0 = make_block(*still, hier, 1, 0.0, 0.3, Variant::hsdc);
    b0.steps[0][0].spread(still->initial_state());
    restrict_block(*still, hier, b0, 0);
    fas_tau(*still, hier, b0, 0);
    for (const State& t : b0.tau[1][0]) CHECK(max_abs(t) < 1e-15);

    // linear test problem: tau matches a brute-force evaluation of both
    // collocation operators around the (exact fine) solution
    const double lI = -1.2, lE = -0.4, le = -2.5, dt = 0.2, y0v = 1.0;
    auto sys = make_dahlquist(lI, lE, le, y0v);
    BlockState blk = make_block(*sys, hier, 1, 0.0, dt, Variant::hsdc);
    const auto& fine = hier.level(0);
    const auto& coarse = hier.level(1);

    // fine nodes hold the exact fine collocation solution
    std::vector<double> yf(4);
    {
        std::vector<double> A(16), rhs(4);
        for (int i = 1; i <= 4; ++i) {
            auto row = erk_weight_row(fine, i, dt * le);
            double rowsum = 0.0;
            for (int j = 0; j < 4; ++j) {
                A[(i - 1) * 4 + j] = ((i - 1 == j) ? 1.0 : 0.0) - dt * (lI + lE) * row[j];
                rowsum += row[j];
            }
            rhs[i - 1] = y0v * (1.0 + dt * le * rowsum);
        }
        yf = oracles::lu_solve(A, rhs);
    }
    blk.steps[0][0].spread(sys->initial_state());
    for (int i = 1; i <= 4; ++i) {
        State v(sys->layout());
        v[0] = yf[i - 1];
        blk.steps[0][0].set_node(i, v);
    }
    restrict_block(*sys, hier, blk, 0);
    fas_tau(*sys, hier, blk, 0);

    // brute force: C_c(R z) - R C_f(z) with g(y) = (lI+lE) y + le y0
    const Matrix& R = hier.restriction(0);
    auto g = [&](double y) { return (lI + lE) * y + le * y0v; };
    std::vector<double> cf(5);
    cf[0] = y0v;
    for (int i = 1; i <= 4; ++i) {
        auto row = erk_weight_row(fine, i, dt * le);
        double acc = yf[i - 1];
        for (int j = 0; j < 4; ++j) acc -= dt * row[j] * g(yf[j]);
        cf[i] = acc;
    }
    std::vector<double> zc(3);
    for (int i = 0; i <= 2; ++i) {
        double v = 0.0;
        for (int q = 0; q <= 4; ++q) v += R(i, q) * (q == 0 ? y0v : yf[q - 1]);
        zc[i] = v;
    }
    for (int i = 1; i <= 2; ++i) {
        auto row = erk_weight_row(coarse, i, dt * le);
        double cc = zc[i];
        for (int j = 0; j < 2; ++j) cc -= dt * row[j] * g(zc[j + 1]);
        double rcf = 0.0;
        for (int q = 0; q <= 4; ++q) rcf += R(i, q) * cf[q];
        const double want = cc - rcf;
        CHECK(std::abs(blk.tau[1][0][i - 1][0] - want) < 1e-13);
    }
}

TEST_CASE("coarse sequential pass: single-level single-sweep equivalence") {
    auto sys = make_dahlquist(-1.0, -0.5, -2.0, 1.0);
    LevelHierarchy single({3});
    BlockState blk = make_block(*sys, single, 1, 0.0, 0.2, Variant::hsdc);
    blk.steps[0][0].spread(sys->initial_state());
    coarse_sequential_pass(*sys, single, blk, sys->initial_state());

    auto lvl = CollocationLevel::radau(3);
    StepNodes ref(lvl, sys->layout(), 0.0, 0.2);
    ref.spread(sys->initial_state());
    sweep(*sys, ref, ref);
    for (int i = 0; i <= 3; ++i) CHECK(blk.steps[0][0].node(i)[0] == ref.node(i)[0]);
}

TEST_CASE("coarse sequential pass: M=1 reproduces the splitting-Euler chain") {
    const double lI = -0.9, lE = -0.3, le = -40.0, dt = 0.25, y0v = 1.0;
    auto sys = make_dahlquist(lI, lE, le, y0v);
    LevelHierarchy hier({1});
    const int P = 4;
    BlockState blk = make_block(*sys, hier, P, 0.0, dt, Variant::hsdc);
    for (int p = 0; p < P; ++p) blk.steps[0][p].spread(sys->initial_state());
    coarse_sequential_pass(*sys, hier, blk, sys->initial_state());

    // reference: one implicit/explicit/exponential Euler substep per step,
    // chained sequentially, with the quadrature correction evaluated at the
    // spread source value s and anchored at the received initial value y
    // (a_11(z) = phi_1(z) for the single right-endpoint node):
    //   (1 - dt lI) y1 = y (1 + dt phi1 le) + dt s (phi1 (lI + lE) - lI)
    const double s = y0v; // every step was seeded with the spread guess
    const double phi1 = (std::exp(dt * le) - 1.0) / (dt * le);
    double y = y0v;
    for (int p = 0; p < P; ++p) {
        y = (y * (1.0 + dt * phi1 * le) + dt * s * (phi1 * (lI + lE) - lI)) /
            (1.0 - dt * lI);
        CHECK(std::abs(blk.steps[0][p].node(1)[0] - y) < 1e-13 * std::abs(y));
    }
}

TEST_CASE("burn-in: zero dynamics, single step, and composed coarse updates") {
    LevelHierarchy hier({4, 1});
    auto still = make_dahlquist(0, 0, 0, 2.5);
    BlockState b0 = make_block(*still, hier, 3, 0.0, 0.5, Variant::hsdc);
    burn_in(*still, hier, b0, still->initial_state(), nullptr);
    for (int l = 0; l < 2; ++l)
        for (int p = 0; p < 3; ++p)
            for (int i = 0; i <= hier.level(l).M; ++i)
                CHECK(std::abs(b0.steps[l][p].node(i)[0] - 2.5) < 1e-13);

    // Dahlquist lambda = (-1,0,0), P = 4: step-3 initial value equals the
    // 3-fold composition of the M=1 coarse update
    const double dt = 0.3;
    auto sys = make_dahlquist(-1.0, 0.0, 0.0, 1.0);
    BlockState blk = make_block(*sys, hier, 4, 0.0, dt, Variant::hsdc);
    burn_in(*sys, hier, blk, sys->initial_state(), nullptr);
    double y = 1.0;
    for (int p = 0; p < 3; ++p) {
        // single-node sweep from the spread guess: implicit Euler plus the
        // quadrature correction at the old value
        y = (y + dt * 1.0 * (-1.0) * y - dt * (-1.0) * y) / (1.0 - dt * (-1.0));
    }
    CHECK(std::abs(blk.steps[0][3].node(0)[0] - y) < 1e-13);
}

TEST_CASE("run_block: single level single step equals solve_step") {
    auto sys = make_dahlquist(-1.0, -0.5, -2.0, 1.0);
    LevelHierarchy hier({4});
    RunOptions opt;
    opt.tol = 1e-11;
    opt.max_iters = 50;
    auto r = run_block(*sys, hier, sys->initial_state(), 0.0, 0.1, 1, opt);

    auto ref = solve_step(*sys, CollocationLevel::radau(4), sys->initial_state(), 0.0, 0.1,
                          1e-11, 50);
    CHECK(r.converged);
    CHECK(ref.converged);
    CHECK(r.y_end[0] == ref.nodes.node(4)[0]); // identical trajectory, bitwise
    CHECK(r.iterations == ref.iterations);
    CHECK(r.final_residuals[0] == ref.rel_residual);
}

TEST_CASE("run_block: converged block satisfies the composite system") {
    auto sys = make_dahlquist(-1.0, -0.4, -3.0, 1.0);
    LevelHierarchy hier({4, 2});
    RunOptions opt;
    opt.tol = 1e-12;
    opt.max_iters = 100;
    BlockState blk;
    auto r = run_block(*sys, hier, sys->initial_state(), 0.0, 0.1, 4, opt, &blk);
    CHECK(r.converged);

    // evaluate D(z) - b with dense operators at the finest level: per step,
    // rows i >= 1 read y_i - dt sum_j a_ij g(y_j) - y_init and row 0 reads
    // y_0 - y_init, with y_init the previous step's node M (y0 for step 0)
    const auto& lvl = hier.level(0);
    const double dt = 0.1;
    double worst = 0.0;
    for (int p = 0; p < 4; ++p) {
        const double yinit = (p == 0) ? 1.0 : blk.steps[0][p - 1].node(4)[0];
        const double y00 = blk.steps[0][p].node(0)[0];
        worst = std::max(worst, std::abs(y00 - yinit));
        for (int i = 1; i <= 4; ++i) {
            auto row = erk_weight_row(lvl, i, dt * -3.0);
            double acc = blk.steps[0][p].node(i)[0];
            for (int j = 0; j < 4; ++j) {
                const double yj = blk.steps[0][p].node(j + 1)[0];
                acc -= dt * row[j] * ((-1.0 - 0.4) * yj + (-3.0) * y00);
            }
            worst = std::max(worst, std::abs(acc - yinit));
        }
    }
    CHECK(worst <= 2.0 * opt.tol);
}

TEST_CASE("run_block: parallel agrees with the serial chain") {
    auto sys = make_dahlquist(-2.0, -0.5, -30.0, 1.0);
    LevelHierarchy hier({4, 2});
    RunOptions opt;
    opt.tol = 1e-12;
    opt.max_iters = 200;
    const double dt = 0.05;
    const int P = 8;
    auto rp = run_block(*sys, hier, sys->initial_state(), 0.0, dt, P, opt);

    State y = sys->initial_state();
    double t = 0.0;
    for (int p = 0; p < P; ++p) {
        auto r1 = run_block(*sys, hier, y, t, dt, 1, opt);
        y = r1.y_end;
        t += dt;
    }
    CHECK(std::abs(rp.y_end[0] - y[0]) <= 10.0 * opt.tol * std::abs(y[0]) + 10.0 * opt.tol);
}

TEST_CASE("run_block: one extra cycle leaves an exactly solved block unchanged") {
    auto sys = make_dahlquist(-1.0, -0.3, -5.0, 1.0);
    LevelHierarchy hier({4, 2});
    RunOptions opt;
    opt.tol = 1e-14;
    opt.max_iters = 300;
    BlockState blk;
    auto r = run_block(*sys, hier, sys->initial_state(), 0.0, 0.08, 3, opt, &blk);
    CHECK(r.converged);

    std::vector<double> before;
    for (int p = 0; p < 3; ++p)
        for (int i = 0; i <= 4; ++i) before.push_back(blk.steps[0][p].node(i)[0]);

    block_iteration(*sys, hier, blk, sys->initial_state(), nullptr, 0);

    std::size_t idx = 0;
    for (int p = 0; p < 3; ++p)
        for (int i = 0; i <= 4; ++i)
            CHECK(std::abs(blk.steps[0][p].node(i)[0] - before[idx++]) <= 1e-12);
}

TEST_CASE("run_block: deterministic across repeats and worker counts") {
    // a stiff decaying problem iterated a fixed number of cycles; scheduling
    // must not change a single bit of the result
    auto sys = make_dahlquist(-2.0, -1.0, -100.0, 1.0);
    LevelHierarchy hier({6, 3});
    RunOptions opt;
    opt.tol = 1e-11;
    opt.max_iters = 25;
    opt.cap_is_normal = true;

    auto ra = run_block(*sys, hier, sys->initial_state(), 0.0, 0.1, 8, opt);
    auto rb = run_block(*sys, hier, sys->initial_state(), 0.0, 0.1, 8, opt);
    CHECK(ra.y_end[0] == rb.y_end[0]);
    CHECK(ra.final_residuals == rb.final_residuals);

    for (int workers : {2, 4, 16}) {
        WorkerPool pool(workers);
        RunOptions optw = opt;
        optw.pool = &pool;
        auto rc = run_block(*sys, hier, sys->initial_state(), 0.0, 0.1, 8, optw);
        CHECK(ra.y_end[0] == rc.y_end[0]);
        CHECK(ra.final_residuals == rc.final_residuals);
        CHECK(ra.step_iterations == rc.step_iterations);
    }
}

TEST_CASE("run_block: iteration cap raises with residual traces attached") {
    auto sys = make_dahlquist(-1.0, -0.9, -200.0, 1.0);
    LevelHierarchy hier({3, 1});
    RunOptions opt;
    opt.tol = 1e-14;
    opt.max_iters = 2;
    bool threw = false;
    try {
        run_block(*sys, hier, sys->initial_state(), 0.0, 0.5, 4, opt);
    } catch (const MaxIterationsError& e) {
        threw = true;
        CHECK(e.residual_traces.size() == 4);
        CHECK(e.residual_traces[0].size() == 2);
    }
    CHECK(threw);

    opt.cap_is_normal = true;
    auto r = run_block(*sys, hier, sys->initial_state(), 0.0, 0.5, 4, opt);
    CHECK(!r.converged);
    CHECK(r.iterations == 2);
}

TEST_CASE("run_block: frozen prefix matches lockstep at convergence") {
    auto sys = make_dahlquist(-3.0, -0.2, -20.0, 1.0);
    LevelHierarchy hier({4, 2});
    RunOptions lockstep;
    lockstep.tol = 1e-11;
    lockstep.max_iters = 200;
    RunOptions frozen = lockstep;
    frozen.frozen_prefix = true;

    auto ra = run_block(*sys, hier, sys->initial_state(), 0.0, 0.05, 6, lockstep);
    auto rb = run_block(*sys, hier, sys->initial_state(), 0.0, 0.05, 6, frozen);
    CHECK(ra.converged);
    CHECK(rb.converged);
    CHECK(std::abs(ra.y_end[0] - rb.y_end[0]) <= 10.0 * lockstep.tol);
    CHECK(rb.iterations <= ra.iterations + 2);
}

TEST_CASE("run_many_blocks: chaining and statistics") {
    auto sys = make_dahlquist(-1.0, -0.5, -4.0, 1.0);
    LevelHierarchy hier({4, 2});
    RunOptions opt;
    opt.tol = 1e-11;
    opt.max_iters = 100;

    auto one = run_block(*sys, hier, sys->initial_state(), 0.0, 0.1, 4, opt);
    auto many = run_many_blocks(*sys, hier, sys->initial_state(), 0.0, 0.1, 4, 1, opt);
    CHECK(one.y_end[0] == many.y_final[0]);

    auto still = make_dahlquist(0, 0, 0, 1.0);
    auto quiet = run_many_blocks(*still, hier, still->initial_state(), 0.0, 0.1, 4, 3, opt);
    CHECK(quiet.y_final[0] == 1.0);
    CHECK(quiet.mean_iterations == 1.0);

    auto chained = run_many_blocks(*sys, hier, sys->initial_state(), 0.0, 0.1, 4, 3, opt);
    const double exact = std::exp(-5.5 * 1.2);
    CHECK(std::abs(chained.y_final[0] - exact) < 1e-7);
    CHECK(chained.t_final == doctest::Approx(1.2));
}
