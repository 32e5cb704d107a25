#pragma once

#include <memory>
#include <optional>

#include "hsdc/state.hpp"

namespace hsdc {

/// Problem contract for the three-way split ODE
///     y' = f_I(t,y) + f_E(t,y) + f_e(t,y),   f_e = Lambda(y) (y - y_inf(y)),
/// where f_I is stiff and linear, f_E nonstiff, and Lambda(y) is diagonal,
/// zero on the V_m and w_a blocks and nonpositive on the w_g block.
/// Instances are immutable and shareable across workers.
class SplitSystem {
public:
    virtual ~SplitSystem() = default;

    virtual const BlockLayout& layout() const = 0;

    virtual void eval_f_I(double t, const State& y, State& out) const = 0;
    virtual void eval_f_E(double t, const State& y, State& out) const = 0;

    /// Diagonal of Lambda(y), stored as a state-shaped vector.
    virtual void lambda_diag(const State& y, State& out) const = 0;
    virtual void y_inf(const State& y, State& out) const = 0;

    /// Solve (Id - alpha J_I) x = b, J_I being the linear operator inside f_I.
    /// implicit_solve(0, b) = b.
    virtual void implicit_solve(double alpha, const State& b, State& out) const = 0;

    /// Analytic solution for test problems, if one exists.
    virtual std::optional<State> exact_reference(double t) const { (void)t; return std::nullopt; }

    virtual State initial_state() const = 0;
};

/// f_e(y) = Lambda(y) * (y - y_inf(y)), entrywise. Zero wherever Lambda is.
void eval_f_e(const SplitSystem& sys, const State& y, State& out);

/// Scalar test equation y' = lambda_I y + lambda_E y + lambda_e y, y(0) = y0,
/// with the three rates assigned to the implicit, explicit and exponential
/// parts respectively (y_inf = 0, Lambda = lambda_e).
std::shared_ptr<SplitSystem> make_dahlquist(double lambda_I, double lambda_E, double lambda_e,
                                            double y0 = 1.0);

/// Pure-exponential gating problem y' = lambda (y - w_inf), y(0) = y0,
/// carried entirely in the w_g block.
std::shared_ptr<SplitSystem> make_linear_gating(double lambda, double w_inf, double y0 = 1.0);

} // namespace hsdc
