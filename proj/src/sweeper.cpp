#include "hsdc/sweeper.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "hsdc/errors.hpp"

namespace hsdc {

StepNodes::StepNodes(const CollocationLevel& level, const BlockLayout& layout, double t0,
                     double dt, Variant variant)
    : level_(&level), layout_(layout), t0_(t0), dt_(dt), variant_(variant) {
    y_.assign(level.M + 1, State(layout));
    lin_point_ = State(layout);
    lambda_ = State(layout);
    g_.assign(level.M, State(layout));
    g_ok_.assign(level.M, 0);
}

void StepNodes::set_node(int i, const State& v) {
    if (i < 1 || i > level_->M)
        throw std::invalid_argument("StepNodes::set_node: index out of range");
    require_same_layout(v, y_[i], "StepNodes::set_node");
    copy_into(v, y_[i]);
    g_ok_[i - 1] = 0;
}

void StepNodes::set_node0(const State& v) {
    require_same_layout(v, y_[0], "StepNodes::set_node0");
    copy_into(v, y_[0]);
    lin_fresh_ = false;
    invalidate_g();
}

void StepNodes::spread(const State& y0) {
    set_node0(y0);
    for (int i = 1; i <= level_->M; ++i) set_node(i, y0);
}

void StepNodes::invalidate_g() {
    std::fill(g_ok_.begin(), g_ok_.end(), char(0));
}

void StepNodes::refresh_linearization(const SplitSystem& sys) {
    // Lambda_n is pinned to the step's current initial value; recompute only
    // when node 0 actually changed (it never does within a serial step).
    if (lin_fresh_ && lin_point_ == y_[0]) return;
    copy_into(y_[0], lin_point_);

    State fresh_lambda(layout_);
    if (variant_ == Variant::hsdc) sys.lambda_diag(y_[0], fresh_lambda);
    // else: naive variant keeps Lambda_n = 0

    if (caches_built_ && fresh_lambda == lambda_) {
        // node 0 moved but Lambda(y0) did not; the quadrature caches stand
        lin_fresh_ = true;
        return;
    }
    copy_into(fresh_lambda, lambda_);

    lambda_zero_ = true;
    for (double v : lambda_.wg())
        if (v != 0.0) { lambda_zero_ = false; break; }

    const int M = level_->M;
    const std::size_t n_wg = layout_.n_wg;
    if (!lambda_zero_) {
        aw_.resize(static_cast<std::size_t>(M) * M * n_wg);
        phi1_.resize(static_cast<std::size_t>(M) * n_wg);
        const double* lam = lambda_.wg().data();
        std::vector<long double> phi(M);
        std::vector<double> row(M);
        // One phi batch per (node row, gating entry); a_ij shares it across j.
        for (std::size_t e = 0; e < n_wg; ++e) {
            const double z = dt_ * lam[e];
            for (int i = 1; i <= M; ++i) {
                detail::phi_all_ld(level_->nodes[i - 1] * static_cast<long double>(z), M,
                                   phi.data());
                for (int j = 1; j <= M; ++j) {
                    long double s = 0.0L;
                    long double cpow = 1.0L;
                    for (int k = 1; k <= M; ++k) {
                        cpow *= level_->nodes[i - 1];
                        s += cpow * static_cast<long double>(level_->fornberg(k - 1, j - 1)) *
                             phi[k - 1];
                    }
                    aw_[(static_cast<std::size_t>(i - 1) * M + (j - 1)) * n_wg + e] =
                        static_cast<double>(s);
                }
                long double p1;
                detail::phi_all_ld(level_->deltas[i - 1] * static_cast<long double>(z), 1, &p1);
                phi1_[static_cast<std::size_t>(i - 1) * n_wg + e] = static_cast<double>(p1);
            }
        }
    } else {
        aw_.clear();
        phi1_.clear();
    }
    caches_built_ = true;
    lin_fresh_ = true;
}

const State& StepNodes::lambda_n() const {
    if (!lin_fresh_)
        throw InternalStateError("StepNodes: initial value changed without refresh");
    return lambda_;
}

const State& StepNodes::eval_g(const SplitSystem& sys, int j) {
    if (j < 0 || j > level_->M)
        throw std::invalid_argument("StepNodes::eval_g: node index out of range");
    if (!lin_fresh_)
        throw InternalStateError("StepNodes: stale Lambda_n cache in eval_g; refresh first");
    if (j == 0 || !g_ok_[j - 1]) {
        if (g0_.layout() != layout_) g0_ = State(layout_);
        State& slot = (j == 0) ? g0_ : g_[j - 1];
        const State& yj = y_[j];
        State tmp(layout_);
        sys.eval_f_I(node_time(j), yj, slot);
        sys.eval_f_E(node_time(j), yj, tmp);
        axpy(1.0, tmp, slot);
        eval_f_e(sys, yj, tmp);
        axpy(1.0, tmp, slot);
        const State& lam = lambda_;
        for (std::size_t e = 0; e < slot.size(); ++e)
            slot[e] += lam[e] * (y_[0][e] - yj[e]);
        if (j == 0) return slot;
        g_ok_[j - 1] = 1;
    }
    return g_[j - 1];
}

void StepNodes::quadrature_combo(int i, bool diff, const std::vector<State>& g,
                                 State& out) const {
    if (!lin_fresh_)
        throw InternalStateError("StepNodes: stale Lambda_n cache in quadrature_combo");
    const int M = level_->M;
    if (i < 1 || i > M) throw std::invalid_argument("quadrature_combo: row out of range");
    set_zero(out);
    const std::size_t n_wg = layout_.n_wg;
    const std::size_t n_sc = layout_.n_vm + layout_.n_wa;
    for (int j = 1; j <= M; ++j) {
        const State& gj = g[j - 1];
        double c = level_->a0(i - 1, j - 1);
        if (diff && i > 1) c -= level_->a0(i - 2, j - 1);
        // scalar weight on the non-exponential blocks
        for (std::size_t e = 0; e < n_sc; ++e) out[e] += c * gj[e];
        if (n_wg == 0) continue;
        if (lambda_zero_) {
            for (std::size_t e = 0; e < n_wg; ++e) out[n_sc + e] += c * gj[n_sc + e];
        } else {
            const double* wij = &aw_[(static_cast<std::size_t>(i - 1) * M + (j - 1)) * n_wg];
            const double* wpj = (diff && i > 1)
                                    ? &aw_[(static_cast<std::size_t>(i - 2) * M + (j - 1)) * n_wg]
                                    : nullptr;
            for (std::size_t e = 0; e < n_wg; ++e) {
                const double w = wpj ? (wij[e] - wpj[e]) : wij[e];
                out[n_sc + e] += w * gj[n_sc + e];
            }
        }
    }
    for (std::size_t e = 0; e < out.size(); ++e) out[e] *= dt_;
}

void StepNodes::phi1_apply(int i, const State& in, State& out) const {
    if (!lin_fresh_)
        throw InternalStateError("StepNodes: stale Lambda_n cache in phi1_apply");
    const std::size_t n_wg = layout_.n_wg;
    const std::size_t n_sc = layout_.n_vm + layout_.n_wa;
    for (std::size_t e = 0; e < n_sc; ++e) out[e] = in[e];
    if (n_wg == 0) return;
    if (lambda_zero_) {
        for (std::size_t e = 0; e < n_wg; ++e) out[n_sc + e] = in[n_sc + e];
    } else {
        const double* p1 = &phi1_[static_cast<std::size_t>(i - 1) * n_wg];
        for (std::size_t e = 0; e < n_wg; ++e) out[n_sc + e] = p1[e] * in[n_sc + e];
    }
}

void sweep(const SplitSystem& sys, StepNodes& target, const StepNodes& source,
           const std::vector<State>* shift) {
    const int M = target.node_count();
    const double dt = target.dt();
    const BlockLayout& layout = sys.layout();
    if (shift && static_cast<int>(shift->size()) != M)
        throw ShapeError("sweep: shift must hold one state per node 1..M");

    target.refresh_linearization(sys);
    const State& lam = target.lambda_n();

    // --- everything read from `source` is evaluated now, so that in-place
    // sweeps (source aliases target) see the pre-sweep values. The anchor of
    // both operator sides is the step's current initial value: whatever node
    // 0 was communicated into the target before this sweep. Keeping the
    // residual side anchored there (rather than at the source's own stale
    // node 0) is what keeps the block iteration contractive for stiff
    // exponential rates. ---
    const State src0 = target.node(0);
    std::vector<State> g(M, State(layout));
    std::vector<State> rl_src(M, State(layout)); // f_E + phi1*(f_e + Lam(src0 - y)) at node i-1
    std::vector<State> fi_src(M, State(layout));
    {
        State f_ex(layout), expo(layout);
        // f_E and f_e at source nodes 0..M-1 feed the substep terms; f at
        // nodes 1..M feeds g. Node 0 of the source is read through src0 so
        // an in-place pass keeps evaluating the pre-transfer iterate.
        auto src_node = [&](int j) -> const State& { return (j == 0) ? src0 : source.node(j); };
        std::vector<State> fE(M + 1, State(layout)), fe(M + 1, State(layout));
        for (int j = 0; j <= M; ++j) {
            sys.eval_f_E(source.node_time(j), src_node(j), fE[j]);
            eval_f_e(sys, src_node(j), fe[j]);
        }
        for (int j = 1; j <= M; ++j) {
            sys.eval_f_I(source.node_time(j), source.node(j), fi_src[j - 1]);
            copy_into(fi_src[j - 1], g[j - 1]);
            axpy(1.0, fE[j], g[j - 1]);
            axpy(1.0, fe[j], g[j - 1]);
            for (std::size_t e = 0; e < g[j - 1].size(); ++e)
                g[j - 1][e] += lam[e] * (src0[e] - source.node(j)[e]);
        }
        for (int i = 1; i <= M; ++i) {
            copy_into(fe[i - 1], expo);
            for (std::size_t e = 0; e < expo.size(); ++e)
                expo[e] += lam[e] * (src0[e] - src_node(i - 1)[e]);
            target.phi1_apply(i, expo, f_ex);
            copy_into(fE[i - 1], rl_src[i - 1]);
            axpy(1.0, f_ex, rl_src[i - 1]);
        }
    }

    // --- forward substitution over nodes; node 0 is never modified ---
    State rhs(layout), fE_new(layout), fe_new(layout), expo(layout), quad(layout);
    const State& y0 = target.node(0);
    for (int i = 1; i <= M; ++i) {
        const double di_dt = target.level().deltas[i - 1] * dt;
        const State& prev = target.node(i - 1);

        sys.eval_f_E(target.node_time(i - 1), prev, fE_new);
        eval_f_e(sys, prev, fe_new);
        for (std::size_t e = 0; e < fe_new.size(); ++e)
            fe_new[e] += lam[e] * (y0[e] - prev[e]);
        target.phi1_apply(i, fe_new, expo);

        copy_into(prev, rhs);
        axpy(di_dt, fE_new, rhs);
        axpy(di_dt, expo, rhs);
        axpy(-di_dt, rl_src[i - 1], rhs);
        axpy(-di_dt, fi_src[i - 1], rhs);
        target.quadrature_combo(i, /*diff=*/true, g, quad);
        axpy(1.0, quad, rhs);
        if (shift) {
            axpy(1.0, (*shift)[i - 1], rhs);
            if (i > 1) axpy(-1.0, (*shift)[i - 2], rhs);
        }

        if (!rhs.all_finite())
            throw DivergenceError("sweep: non-finite update at node " + std::to_string(i), i);
        State next(layout);
        sys.implicit_solve(di_dt, rhs, next);
        if (!next.all_finite())
            throw DivergenceError("sweep: non-finite update at node " + std::to_string(i), i);
        target.set_node(i, next);
    }
}

void eval_collocation_rows(const SplitSystem& sys, StepNodes& step, std::vector<State>& rows) {
    const int M = step.node_count();
    step.refresh_linearization(sys);
    std::vector<State> g;
    g.reserve(M);
    for (int j = 1; j <= M; ++j) g.push_back(step.eval_g(sys, j));
    rows.assign(M, State(sys.layout()));
    for (int i = 1; i <= M; ++i) {
        step.quadrature_combo(i, /*diff=*/false, g, rows[i - 1]);
        for (std::size_t e = 0; e < rows[i - 1].size(); ++e)
            rows[i - 1][e] = step.node(i)[e] - rows[i - 1][e];
    }
}

ResidualInfo collocation_residual(const SplitSystem& sys, StepNodes& step,
                                  std::vector<State>* out_rows) {
    const int M = step.node_count();
    std::vector<State> c_rows;
    eval_collocation_rows(sys, step, c_rows);
    ResidualInfo info;
    double scale = 0.0;
    const State& y0 = step.node(0);
    for (int i = 1; i <= M; ++i) {
        State& r = c_rows[i - 1];
        for (std::size_t e = 0; e < r.size(); ++e) r[e] = y0[e] - r[e];
        info.norm = std::max(info.norm, max_abs(r));
        scale = std::max(scale, max_abs(step.node(i)));
    }
    info.rel = (scale > 0.0) ? info.norm / scale : info.norm;
    if (out_rows) *out_rows = std::move(c_rows);
    return info;
}

StepResult solve_step(const SplitSystem& sys, const CollocationLevel& level, const State& y0,
                      double t0, double dt, double tol, int K, Variant variant) {
    if (!(tol > 0.0)) throw std::invalid_argument("solve_step: tol must be positive");
    if (K < 1) throw std::invalid_argument("solve_step: K must be >= 1");

    StepResult res{StepNodes(level, sys.layout(), t0, dt, variant)};
    res.nodes.spread(y0);
    res.nodes.refresh_linearization(sys);

    double initial_rel = -1.0;
    for (int k = 0; k < K; ++k) {
        sweep(sys, res.nodes, res.nodes);
        ResidualInfo info = collocation_residual(sys, res.nodes);
        res.iterations = k + 1;
        res.rel_residual = info.rel;
        if (initial_rel < 0.0) initial_rel = info.rel;
        if (info.rel < tol) {
            res.converged = true;
            break;
        }
        if (!std::isfinite(info.rel) || (initial_rel > 0.0 && info.rel > 1e6 * initial_rel))
            throw DivergenceError("solve_step: residual diverged (rel = " +
                                      std::to_string(info.rel) + ")",
                                  -1);
    }
    return res;
}

} // namespace hsdc
