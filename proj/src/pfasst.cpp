#include "hsdc/pfasst.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hsdc/errors.hpp"

namespace hsdc {

LevelHierarchy::LevelHierarchy(const std::vector<int>& nodes_per_level) {
    if (nodes_per_level.empty())
        throw std::invalid_argument("hierarchy: at least one level required");
    for (std::size_t l = 0; l < nodes_per_level.size(); ++l) {
        if (nodes_per_level[l] < 1)
            throw std::invalid_argument("hierarchy: node counts must be >= 1");
        if (l > 0 && nodes_per_level[l] >= nodes_per_level[l - 1])
            throw std::invalid_argument("hierarchy: node counts must be strictly decreasing");
        levels_.push_back(CollocationLevel::radau(nodes_per_level[l]));
    }
    for (std::size_t l = 0; l + 1 < levels_.size(); ++l) {
        const auto& fine = levels_[l];
        const auto& coarse = levels_[l + 1];
        Matrix ri = interp_matrix(fine.nodes, coarse.nodes);
        Matrix R(coarse.M + 1, fine.M + 1);
        R(0, 0) = 1.0;
        for (int i = 1; i <= coarse.M; ++i)
            for (int j = 1; j <= fine.M; ++j) R(i, j) = ri(i - 1, j - 1);
        restrict_.push_back(std::move(R));

        Matrix pi = interp_matrix(coarse.nodes, fine.nodes);
        Matrix T(fine.M + 1, coarse.M + 1);
        T(0, 0) = 1.0;
        for (int i = 1; i <= fine.M; ++i)
            for (int j = 1; j <= coarse.M; ++j) T(i, j) = pi(i - 1, j - 1);
        prolong_.push_back(std::move(T));
    }
}

void apply_transfer(const Matrix& op, const std::vector<State>& in, std::vector<State>& out) {
    if (in.size() != op.cols)
        throw ShapeError("apply_transfer: node count does not match operator");
    out.assign(op.rows, State(in[0].layout()));
    for (std::size_t r = 0; r < op.rows; ++r)
        for (std::size_t c = 0; c < op.cols; ++c)
            if (op(r, c) != 0.0) axpy(op(r, c), in[c], out[r]);
}

BlockState make_block(const SplitSystem& sys, const LevelHierarchy& hier, int P, double t0,
                      double dt, Variant variant) {
    BlockState b;
    const int L = hier.levels();
    b.steps.resize(L);
    b.restricted.resize(L);
    b.tau.resize(L);
    for (int l = 0; l < L; ++l) {
        for (int p = 0; p < P; ++p) {
            b.steps[l].emplace_back(hier.level(l), sys.layout(), t0 + p * dt, dt, variant);
            if (l >= 1) {
                b.restricted[l].emplace_back(hier.level(l), sys.layout(), t0 + p * dt, dt,
                                             variant);
                b.tau[l].emplace_back(hier.level(l).M, State(sys.layout()));
            }
        }
    }
    b.residuals.assign(P, 0.0);
    b.first_converged.assign(P, 0);
    b.residual_history.assign(P, {});
    return b;
}

namespace {

// converged end value of a frozen neighbor: node M is shared across levels,
// so the finest level's value is the authoritative one
const State& frozen_end(const BlockState& block, int p) {
    const StepNodes& fine = block.steps[0][p];
    return fine.node(fine.node_count());
}

std::vector<State> gather_nodes(const StepNodes& s) {
    std::vector<State> v;
    v.reserve(s.node_count() + 1);
    for (int i = 0; i <= s.node_count(); ++i) v.push_back(s.node(i));
    return v;
}

void scatter_nodes(StepNodes& s, const std::vector<State>& v) {
    s.set_node0(v[0]);
    for (int i = 1; i <= s.node_count(); ++i) s.set_node(i, v[i]);
}

void run_pass(WorkerPool* pool, int begin, int end, const std::function<void(std::size_t)>& fn) {
    if (end <= begin) return;
    if (pool) {
        pool->parallel_for(static_cast<std::size_t>(end - begin),
                           [&](std::size_t i) { fn(begin + i); });
    } else {
        for (int p = begin; p < end; ++p) fn(static_cast<std::size_t>(p));
    }
}

void restrict_steps(const LevelHierarchy& hier, BlockState& block, int fine_level,
                    WorkerPool* pool, int frozen) {
    const Matrix& R = hier.restriction(fine_level);
    const int P = static_cast<int>(block.steps[fine_level].size());
    run_pass(pool, frozen, P, [&](std::size_t p) {
        std::vector<State> out;
        apply_transfer(R, gather_nodes(block.steps[fine_level][p]), out);
        scatter_nodes(block.restricted[fine_level + 1][p], out);
    });
}

void compute_tau(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                 int fine_level, WorkerPool* pool, int frozen) {
    const int cl = fine_level + 1;
    const Matrix& R = hier.restriction(fine_level);
    const int Mc = hier.level(cl).M;
    const int Mf = hier.level(fine_level).M;
    const int P = static_cast<int>(block.steps[fine_level].size());
    run_pass(pool, frozen, P, [&](std::size_t p) {
        StepNodes& fine = block.steps[fine_level][p];
        StepNodes& coarse = block.restricted[cl][p];
        std::vector<State> cf, cc;
        eval_collocation_rows(sys, fine, cf);   // rows 1..Mf
        eval_collocation_rows(sys, coarse, cc); // rows 1..Mc
        // tau_{l+1} = C_{l+1}(R z) - R C_l(z) + R tau_l; the cross-step H
        // terms cancel because restriction preserves nodes 0 and M.
        const std::vector<std::vector<State>>* tau_fine =
            (fine_level >= 1) ? &block.tau[fine_level] : nullptr;
        for (int i = 1; i <= Mc; ++i) {
            State& t = block.tau[cl][p][i - 1];
            copy_into(cc[i - 1], t);
            // q = 0 column: C row 0 is the node-0 value, but R(i,0) = 0 for i >= 1
            for (int q = 1; q <= Mf; ++q) {
                const double r = R(i, q);
                if (r == 0.0) continue;
                axpy(-r, cf[q - 1], t);
                if (tau_fine) axpy(r, (*tau_fine)[p][q - 1], t);
            }
        }
    });
}

// One sweep per step against a separate source (restricted fine values);
// node-0 values come from the source's neighbor node M (the H term of the
// parallel preconditioner applied to the restricted iterate).
void parallel_pass_from_source(const SplitSystem& sys, BlockState& block, int level,
                               const State& y0, WorkerPool* pool, int frozen) {
    const int P = static_cast<int>(block.steps[level].size());
    const int M = block.steps[level][0].node_count();
    const std::vector<std::vector<StepNodes>>& src = block.restricted;
    run_pass(pool, frozen, P, [&](std::size_t p) {
        StepNodes& tgt = block.steps[level][p];
        const StepNodes& s = src[level][p];
        const State& init = (p == 0) ? y0
                            : (static_cast<int>(p) - 1 < frozen)
                                ? frozen_end(block, static_cast<int>(p) - 1)
                                : src[level][p - 1].node(M);
        tgt.set_node0(init);
        try {
            sweep(sys, tgt, s, &block.tau[level][p]);
        } catch (DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " (step " + std::to_string(p) + ")",
                                  e.node_index, static_cast<int>(p));
        }
    });
}

// One sweep per step against the step's own current values (the fine level
// and the upward leg); node-0 values come from the pre-sweep node M of the
// neighbor, so the pass is communication-free once the heads are collected.
void parallel_pass_in_place(const SplitSystem& sys, BlockState& block, int level,
                            const State& y0, WorkerPool* pool, int frozen) {
    const int P = static_cast<int>(block.steps[level].size());
    const int M = block.steps[level][0].node_count();
    std::vector<State> heads;
    heads.reserve(P);
    for (int p = 0; p < P; ++p)
        heads.push_back(p < frozen ? frozen_end(block, p) : block.steps[level][p].node(M));
    const std::vector<std::vector<State>>* tau = (level >= 1) ? &block.tau[level] : nullptr;
    run_pass(pool, frozen, P, [&](std::size_t p) {
        StepNodes& tgt = block.steps[level][p];
        tgt.set_node0((p == 0) ? y0 : heads[p - 1]);
        try {
            sweep(sys, tgt, tgt, tau ? &(*tau)[p] : nullptr);
        } catch (DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " (step " + std::to_string(p) + ")",
                                  e.node_index, static_cast<int>(p));
        }
    });
}

void sequential_pass(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                     const State& y0, int frozen) {
    const int cl = hier.levels() - 1;
    const int P = static_cast<int>(block.steps[cl].size());
    const int M = hier.level(cl).M;
    const bool has_src = cl >= 1;
    for (int p = frozen; p < P; ++p) {
        StepNodes& tgt = block.steps[cl][p];
        const State* init;
        if (p == 0) {
            init = &y0;
        } else if (p - 1 < frozen) {
            init = &frozen_end(block, p - 1); // converged neighbor
        } else {
            init = &block.steps[cl][p - 1].node(M); // freshly updated
        }
        const std::vector<State>* shift = has_src ? &block.tau[cl][p] : nullptr;
        try {
            tgt.set_node0(*init);
            if (has_src) {
                sweep(sys, tgt, block.restricted[cl][p], shift);
            } else {
                sweep(sys, tgt, tgt, shift);
            }
        } catch (DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " (step " + std::to_string(p) + ")",
                                  e.node_index, p);
        }
    }
}

// Coarse-grid correction: steps[l] += T (steps[l+1] - restricted[l+1]).
void apply_cgc(const LevelHierarchy& hier, BlockState& block, int level, WorkerPool* pool,
               int frozen) {
    const Matrix& T = hier.prolongation(level);
    const int P = static_cast<int>(block.steps[level].size());
    const int Mc = hier.level(level + 1).M;
    run_pass(pool, frozen, P, [&](std::size_t p) {
        std::vector<State> diff = gather_nodes(block.steps[level + 1][p]);
        for (int i = 0; i <= Mc; ++i) axpy(-1.0, block.restricted[level + 1][p].node(i), diff[i]);
        std::vector<State> corr;
        apply_transfer(T, diff, corr);
        std::vector<State> cur = gather_nodes(block.steps[level][p]);
        for (std::size_t i = 0; i < cur.size(); ++i) axpy(1.0, corr[i], cur[i]);
        scatter_nodes(block.steps[level][p], cur);
    });
}

} // namespace

void restrict_block(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                    int from_level) {
    (void)sys;
    if (from_level < 0 || from_level + 1 >= hier.levels())
        throw std::invalid_argument("restrict_block: levels must be adjacent and in range");
    restrict_steps(hier, block, from_level, nullptr, 0);
}

void prolong_block(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                   int from_level) {
    if (from_level < 1 || from_level >= hier.levels())
        throw std::invalid_argument("prolong_block: levels must be adjacent and in range");
    const Matrix& T = hier.prolongation(from_level - 1);
    const int P = static_cast<int>(block.steps[from_level].size());
    for (int p = 0; p < P; ++p) {
        std::vector<State> out;
        apply_transfer(T, gather_nodes(block.steps[from_level][p]), out);
        scatter_nodes(block.steps[from_level - 1][p], out);
    }
    (void)sys;
}

void fas_tau(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
             int fine_level) {
    if (fine_level < 0 || fine_level + 1 >= hier.levels())
        throw std::invalid_argument("fas_tau: levels must be adjacent and in range");
    compute_tau(sys, hier, block, fine_level, nullptr, 0);
}

void coarse_sequential_pass(const SplitSystem& sys, const LevelHierarchy& hier,
                            BlockState& block, const State& y0) {
    sequential_pass(sys, hier, block, y0, 0);
}

void fine_parallel_pass(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                        int level, const State& y0, WorkerPool* pool) {
    (void)hier;
    parallel_pass_in_place(sys, block, level, y0, pool, 0);
}

void burn_in(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
             const State& y0, WorkerPool* pool) {
    const int L = hier.levels();
    const int P = static_cast<int>(block.steps[0].size());
    for (int p = 0; p < P; ++p) block.steps[0][p].spread(y0);
    for (int l = 0; l + 1 < L; ++l) {
        restrict_steps(hier, block, l, pool, 0);
        for (int p = 0; p < P; ++p)
            scatter_nodes(block.steps[l + 1][p], gather_nodes(block.restricted[l + 1][p]));
    }
    // tau is zero before the first iteration
    for (int l = 1; l < L; ++l)
        for (int p = 0; p < P; ++p)
            for (State& s : block.tau[l][p]) set_zero(s);
    sequential_pass(sys, hier, block, y0, 0);
    for (int l = L - 2; l >= 0; --l) {
        const Matrix& T = hier.prolongation(l);
        run_pass(pool, 0, P, [&](std::size_t p) {
            std::vector<State> out;
            apply_transfer(T, gather_nodes(block.steps[l + 1][p]), out);
            scatter_nodes(block.steps[l][p], out);
        });
    }
}

void block_iteration(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                     const State& y0, WorkerPool* pool, int frozen) {
    const int L = hier.levels();
    // downward leg: tau corrections and parallel sweeps on intermediate
    // levels, the finest level is left untouched
    for (int l = 0; l + 1 < L; ++l) {
        restrict_steps(hier, block, l, pool, frozen);
        compute_tau(sys, hier, block, l, pool, frozen);
        if (l + 1 < L - 1) parallel_pass_from_source(sys, block, l + 1, y0, pool, frozen);
    }
    // sequential solve on the coarsest level
    sequential_pass(sys, hier, block, y0, frozen);
    // upward leg: coarse-grid correction then one parallel sweep
    for (int l = L - 2; l >= 0; --l) {
        apply_cgc(hier, block, l, pool, frozen);
        parallel_pass_in_place(sys, block, l, y0, pool, frozen);
    }
}

BlockResult run_block(const SplitSystem& sys, const LevelHierarchy& hier, const State& y0,
                      double t0, double dt, int P, const RunOptions& opt,
                      BlockState* out_block) {
    if (!(opt.tol > 0.0)) throw std::invalid_argument("run_block: tol must be positive");
    if (opt.max_iters < 1) throw std::invalid_argument("run_block: max_iters must be >= 1");
    if (P < 1) throw std::invalid_argument("run_block: P must be >= 1");
    if (y0.layout() != sys.layout()) throw ShapeError("run_block: initial state layout mismatch");

    const int L = hier.levels();
    WorkerPool* pool = opt.pool;
    BlockState block = make_block(sys, hier, P, t0, dt, opt.variant);

    if (P == 1) {
        // the predictor pass is not needed for a single step; starting from
        // the spread guess keeps the trajectory identical to solve_step
        for (int l = 0; l < L; ++l) block.steps[l][0].spread(y0);
        (void)L;
    } else {
        burn_in(sys, hier, block, y0, pool);
    }

    BlockResult res;
    res.residual_history.assign(P, {});
    std::vector<double> initial_res(P, -1.0);
    int frozen = 0;
    bool converged = false;
    int k = 0;

    while (!converged && k < opt.max_iters) {
        block_iteration(sys, hier, block, y0, pool, frozen);
        ++k;

        run_pass(pool, frozen, P, [&](std::size_t p) {
            // full composite residual of Algorithm's block system: the
            // per-step collocation defect plus the step-linkage row
            // y_{p,0} - y_{p-1,M} (y_0 for the first step)
            StepNodes& step = block.steps[0][p];
            const int Mf = step.node_count();
            ResidualInfo info = collocation_residual(sys, step);
            const State& prev_end = (p == 0) ? y0 : block.steps[0][p - 1].node(Mf);
            const double link = max_abs_diff(step.node(0), prev_end);
            double scale = 0.0;
            for (int i = 1; i <= Mf; ++i) scale = std::max(scale, max_abs(step.node(i)));
            const double norm = std::max(info.norm, link);
            block.residuals[p] = (scale > 0.0) ? norm / scale : norm;
        });
        for (int p = frozen; p < P; ++p) {
            res.residual_history[p].push_back(block.residuals[p]);
            if (initial_res[p] < 0.0) initial_res[p] = block.residuals[p];
        }

        // a step counts as converged once it and every step before it pass
        int prefix = frozen;
        while (prefix < P && std::isfinite(block.residuals[prefix]) &&
               block.residuals[prefix] < opt.tol)
            ++prefix;
        for (int p = 0; p < prefix; ++p)
            if (block.first_converged[p] == 0) block.first_converged[p] = k;
        converged = (prefix == P);
        if (opt.frozen_prefix) frozen = prefix;

        if (!converged && k < opt.max_iters) {
            for (int p = frozen; p < P; ++p) {
                if (!std::isfinite(block.residuals[p]) ||
                    (initial_res[p] > 0.0 && block.residuals[p] > 1e6 * initial_res[p]))
                    throw DivergenceError("run_block: residual diverged at step " +
                                              std::to_string(p),
                                          -1, p);
            }
        }
    }

    res.converged = converged;
    res.iterations = k;
    res.final_residuals = block.residuals;
    res.step_iterations = block.first_converged;
    for (int p = 0; p < P; ++p)
        if (res.step_iterations[p] == 0) res.step_iterations[p] = k;
    res.y_end = block.steps[0][P - 1].node(hier.level(0).M);
    if (out_block) *out_block = std::move(block);

    if (!converged && !opt.cap_is_normal)
        throw MaxIterationsError("run_block: tolerance not met within " +
                                     std::to_string(opt.max_iters) + " iterations",
                                 res.residual_history);
    return res;
}

TrajectoryStats run_many_blocks(
    const SplitSystem& sys, const LevelHierarchy& hier, const State& y0, double t0, double dt,
    int P, int n_blocks, const RunOptions& opt,
    const std::function<void(int, double, const BlockResult&)>& on_block) {
    if (n_blocks < 1) throw std::invalid_argument("run_many_blocks: n_blocks must be >= 1");

    TrajectoryStats stats;
    State y = y0;
    double t = t0;
    double sum = 0.0, sum_sq = 0.0;
    for (int b = 0; b < n_blocks; ++b) {
        BlockResult r = run_block(sys, hier, y, t, dt, P, opt);
        y = r.y_end;
        t += P * dt;
        stats.blocks++;
        stats.total_steps += P;
        stats.converged = stats.converged && r.converged;
        stats.max_iterations = std::max(stats.max_iterations, r.iterations);
        for (int ksteps : r.step_iterations) {
            sum += ksteps;
            sum_sq += static_cast<double>(ksteps) * ksteps;
        }
        if (on_block) on_block(b, t, r);
    }
    stats.y_final = std::move(y);
    stats.t_final = t;
    const double n = static_cast<double>(stats.total_steps);
    stats.mean_iterations = sum / n;
    const double var = std::max(0.0, sum_sq / n - stats.mean_iterations * stats.mean_iterations);
    stats.std_iterations = std::sqrt(var);
    return stats;
}

} // namespace hsdc
