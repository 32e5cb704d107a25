#pragma once

#include <functional>
#include <vector>

#include "hsdc/parallel.hpp"
#include "hsdc/split_system.hpp"
#include "hsdc/sweeper.hpp"

namespace hsdc {

/// Collocation hierarchy with Lagrange transfer operators in node space.
/// Level 0 is the finest; node counts strictly decrease. Restriction and
/// prolongation act on full node vectors (node 0 included) and map node 0
/// identically; node M is shared exactly since c_M = 1 at every level.
class LevelHierarchy {
public:
    explicit LevelHierarchy(const std::vector<int>& nodes_per_level);

    int levels() const { return static_cast<int>(levels_.size()); }
    const CollocationLevel& level(int l) const { return levels_[l]; }
    /// (M_{l+1}+1) x (M_l+1) operator from level l to the coarser level l+1.
    const Matrix& restriction(int l) const { return restrict_[l]; }
    /// (M_l+1) x (M_{l+1}+1) operator from level l+1 back to level l.
    const Matrix& prolongation(int l) const { return prolong_[l]; }

private:
    std::vector<CollocationLevel> levels_;
    std::vector<Matrix> restrict_, prolong_;
};

/// Apply a node-space transfer operator to the M+1 node values of one step.
void apply_transfer(const Matrix& op, const std::vector<State>& in, std::vector<State>& out);

/// All node values for P steps on every hierarchy level, plus FAS tau
/// corrections, restricted snapshots and per-step residual bookkeeping.
struct BlockState {
    /// steps[l][p]: level-l nodes of step p (level 0 finest)
    std::vector<std::vector<StepNodes>> steps;
    /// restricted[l][p], l >= 1: restriction of level l-1's current values
    std::vector<std::vector<StepNodes>> restricted;
    /// tau[l][p], l >= 1: FAS correction, nodes 1..M_l (tau at level 0 is 0)
    std::vector<std::vector<std::vector<State>>> tau;
    std::vector<double> residuals;         ///< latest per-step relative residual
    std::vector<int> first_converged;      ///< first iteration with residual < tol (0 = never)
    std::vector<std::vector<double>> residual_history; ///< [p][k]
};

struct RunOptions {
    double tol = 5e-8;
    int max_iters = 100;
    Variant variant = Variant::hsdc;
    /// Stop iterating steps once every step before them has converged
    /// (printed-algorithm lockstep when false).
    bool frozen_prefix = false;
    /// When true, hitting max_iters returns the capped result instead of
    /// throwing MaxIterationsError (used by stability scans).
    bool cap_is_normal = false;
    WorkerPool* pool = nullptr; ///< null -> run passes inline
};

struct BlockResult {
    State y_end;
    bool converged = false;
    int iterations = 0;                    ///< block iterations performed
    std::vector<int> step_iterations;      ///< k_n per step
    std::vector<double> final_residuals;   ///< per-step relative residual
    std::vector<std::vector<double>> residual_history; ///< [p][k]
};

/// Restrict (or prolong) all P steps of `from_level` into the adjacent
/// target level of `block`; node-0 values are carried over verbatim.
void restrict_block(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                    int from_level);
void prolong_block(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                   int from_level);

/// FAS correction for the level below `fine_level`:
/// tau_{l+1} = C_{l+1}(R z_l) - R C_l(z_l) + R tau_l, evaluated stepwise.
/// Requires block.restricted[fine_level+1] to be current.
void fas_tau(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
             int fine_level);

/// Sequential pass on the coarsest level: each step takes its node-0 value
/// from the previous step's freshly updated node M, then performs one sweep
/// against the restricted right-hand side with the FAS shift.
void coarse_sequential_pass(const SplitSystem& sys, const LevelHierarchy& hier,
                            BlockState& block, const State& y0);

/// One sweep on every step of `level`, no intra-pass communication: node-0
/// values come from the pre-sweep node-M value of each step's neighbor.
void fine_parallel_pass(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                        int level, const State& y0, WorkerPool* pool);

/// Predictor: spread the initial value, restrict to the coarsest level, one
/// sequential pass to propagate y0 across the P steps, prolong back up.
void burn_in(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
             const State& y0, WorkerPool* pool);

/// Allocate a BlockState for P steps starting at t0.
BlockState make_block(const SplitSystem& sys, const LevelHierarchy& hier, int P, double t0,
                      double dt, Variant variant);

/// One full multilevel iteration (V-cycle) on an initialized block: FAS
/// restriction with tau accumulation and parallel sweeps going down, the
/// sequential solve on the coarsest level, coarse-grid correction and
/// parallel sweeps going back up. Steps before `frozen` are left untouched.
void block_iteration(const SplitSystem& sys, const LevelHierarchy& hier, BlockState& block,
                     const State& y0, WorkerPool* pool = nullptr, int frozen = 0);

/// P steps of the split system computed parallel-in-time (one block of the
/// multilevel iteration). Returns the final state y_P = y_{P-1,M} plus
/// per-step iteration counts and residual traces. When out_block is non-null
/// it receives the converged node values of every level.
BlockResult run_block(const SplitSystem& sys, const LevelHierarchy& hier, const State& y0,
                      double t0, double dt, int P, const RunOptions& opt,
                      BlockState* out_block = nullptr);

struct TrajectoryStats {
    State y_final;
    double t_final = 0.0;
    int blocks = 0;
    long total_steps = 0;
    double mean_iterations = 0.0;
    double std_iterations = 0.0;
    int max_iterations = 0;
    bool converged = true;
};

/// Chain run_block over n_blocks consecutive windows, feeding each block's
/// final state into the next; aggregates per-step iteration statistics.
/// on_block, when set, observes every finished block.
TrajectoryStats run_many_blocks(
    const SplitSystem& sys, const LevelHierarchy& hier, const State& y0, double t0, double dt,
    int P, int n_blocks, const RunOptions& opt,
    const std::function<void(int, double, const BlockResult&)>& on_block = nullptr);

} // namespace hsdc
