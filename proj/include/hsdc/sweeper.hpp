#pragma once

#include <vector>

#include "hsdc/collocation.hpp"
#include "hsdc/split_system.hpp"

namespace hsdc {

/// hsdc: gating terms integrated exponentially against the frozen diagonal
/// Lambda_n. naive_sdc: Lambda_n forced to zero everywhere, which reduces the
/// scheme to semi-implicit SDC with the gating terms handled explicitly.
enum class Variant { hsdc, naive_sdc };

/// Node values y_{n,0..M} of one time step together with the step's
/// linearization caches: Lambda_n = Lambda(y_{n,0}), the exponential
/// quadrature matrix a_ij(dt Lambda_n) and the phi_1 substep factors.
/// Node 0 holds the step's initial value; writing it invalidates the caches,
/// which must be refreshed before any operator evaluation. A StepNodes
/// instance is owned by exactly one worker at a time.
class StepNodes {
public:
    StepNodes(const CollocationLevel& level, const BlockLayout& layout, double t0, double dt,
              Variant variant = Variant::hsdc);

    int node_count() const { return level_->M; }
    const CollocationLevel& level() const { return *level_; }
    double dt() const { return dt_; }
    double t0() const { return t0_; }
    void set_t0(double t0) { t0_ = t0; }
    double node_time(int i) const { return t0_ + (i == 0 ? 0.0 : level_->nodes[i - 1]) * dt_; }
    Variant variant() const { return variant_; }

    const State& node(int i) const { return y_[i]; }
    /// Write node i >= 1; invalidates cached g-evaluations of that node.
    void set_node(int i, const State& v);
    /// Write the step's initial value; marks the linearization stale.
    void set_node0(const State& v);
    /// Set every node (0..M) to the same value (the spread initial guess).
    void spread(const State& y0);

    /// Recompute Lambda_n and the quadrature caches if node 0 changed since
    /// the last refresh. Cheap when the linearization point is unchanged.
    void refresh_linearization(const SplitSystem& sys);
    bool linearization_fresh() const { return lin_fresh_; }

    /// Lambda_n diagonal (state-shaped); requires a fresh linearization.
    const State& lambda_n() const;

    /// g(y_j) = f_I + f_E + f_e + Lambda_n (y_0 - y_j), cached per node.
    /// Throws InternalStateError if the linearization is stale.
    const State& eval_g(const SplitSystem& sys, int j);

    /// out = dt * sum_j (a_ij - a_{i-1,j}) g[j-1]  (diff=true, a_0j = 0)
    /// or    dt * sum_j  a_ij            g[j-1]  (diff=false), i in 1..M.
    void quadrature_combo(int i, bool diff, const std::vector<State>& g, State& out) const;

    /// out = phi_1(d_i dt Lambda_n) * in, entrywise; identity off the
    /// exponential block. i in 1..M.
    void phi1_apply(int i, const State& in, State& out) const;

private:
    void invalidate_g();

    const CollocationLevel* level_;
    BlockLayout layout_;
    double t0_, dt_;
    Variant variant_;
    std::vector<State> y_; // M+1 node values

    // linearization caches
    bool lin_fresh_ = false;
    bool caches_built_ = false;
    State lin_point_;   // node-0 value the caches were built at
    State lambda_;      // Lambda_n
    bool lambda_zero_ = true;
    std::vector<double> aw_;   // gating a_ij(dt lambda_e): [(i*M+j)*n_wg + e]
    std::vector<double> phi1_; // phi_1(d_i dt lambda_e): [i*n_wg + e]

    std::vector<State> g_; // cached g at nodes 1..M
    std::vector<char> g_ok_;
    State g0_; // scratch for eval_g(0)
};

/// One preconditioned Picard sweep on a single step, forward substitution
/// over the nodes: per node one explicit f_E accumulation, one entrywise
/// exponential update of the gating terms, and one implicit solve with
/// alpha = d_i dt. Node 0 of `target` is never modified and must already
/// hold the step's initial value; both operator sides are anchored at it.
/// `source` supplies the state the residual side is evaluated at (usually
/// `target` itself, or restricted fine values on a level transfer) and may
/// alias `target`. `shift` holds optional per-node right-hand-side
/// corrections (FAS tau), nodes 1..M.
void sweep(const SplitSystem& sys, StepNodes& target, const StepNodes& source,
           const std::vector<State>* shift = nullptr);

struct ResidualInfo {
    double norm = 0.0; ///< max over nodes of the per-node infinity norm
    double rel = 0.0;  ///< norm / max_i ||y_i||_inf
};

/// Collocation rows C_i(y) = y_i - dt sum_j a_ij g(y_j), i = 1..M.
void eval_collocation_rows(const SplitSystem& sys, StepNodes& step, std::vector<State>& rows);

/// Residual of the collocation system: r_i = y_0 - C_i(y). If out_rows is
/// non-null it receives the per-node residual states.
ResidualInfo collocation_residual(const SplitSystem& sys, StepNodes& step,
                                  std::vector<State>* out_rows = nullptr);

struct StepResult {
    StepNodes nodes;
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
};

/// Iterate sweeps from the spread initial guess until the relative residual
/// drops below tol or K sweeps were performed. Returns the populated nodes;
/// y_{n+1} is node M since c_M = 1.
StepResult solve_step(const SplitSystem& sys, const CollocationLevel& level, const State& y0,
                      double t0, double dt, double tol, int K,
                      Variant variant = Variant::hsdc);

} // namespace hsdc
