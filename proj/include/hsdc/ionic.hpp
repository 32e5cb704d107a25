#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace hsdc {

/// Rest state of a single cell: potential plus auxiliary and gating variables.
struct CellRest {
    double v = 0.0;
    std::vector<double> wa;
    std::vector<double> wg;
};

/// Ionic membrane model contract. All evaluations are node-wise over n
/// spatial points with structure-of-arrays layout: wa[a*n + i], wg[g*n + i].
/// Implementations are immutable after construction and shareable.
class IonicModel {
public:
    virtual ~IonicModel() = default;

    virtual int aux_count() const = 0;  ///< m1
    virtual int gate_count() const = 0; ///< m2
    virtual const std::string& name() const = 0;

    /// Transmembrane current density I_ion in uA/mm^2.
    virtual void ionic_current(std::size_t n, const double* v, const double* wa,
                               const double* wg, double* out) const = 0;

    /// Auxiliary-variable derivatives h_a; out holds m1*n entries.
    virtual void aux_rhs(std::size_t n, const double* v, const double* wa,
                         const double* wg, double* out) const = 0;

    /// Gating dynamics w' = Lambda_g(v) (w - w_inf(v)): fills the diagonal
    /// Lambda_g (negative) and the steady state w_inf in (0,1); m2*n entries each.
    virtual void gating_coeffs(std::size_t n, const double* v, double* lambda,
                               double* w_inf) const = 0;

    /// Equilibrium of the single-cell dynamics, found by damped Newton at
    /// construction time.
    virtual const CellRest& rest_state() const = 0;

    /// Approximate action-potential peak, used by front initializers.
    virtual double peak_voltage() const = 0;
};

/// Classical squid-axon Hodgkin-Huxley membrane (m1 = 0, m2 = 3: gates m, h, n),
/// parameterized so the resting potential is near -65 mV. Conductances are in
/// mS/mm^2 so currents pair with C_m ~ 0.01 uF/mm^2.
std::shared_ptr<IonicModel> hh_model();

/// Stiffness-tunable synthetic excitable membrane (m1 = 1, m2 = 2): a cubic
/// recovery-gated current plus two gates whose rates are scaled so that
/// max |Lambda_g| over an action potential equals rho_target.
std::shared_ptr<IonicModel> synthetic_stiff_model(double rho_target);

/// Right-hand side of the single-cell ODE (no stimulus, no diffusion):
/// x = (V, wa..., wg...), out likewise. cm is the membrane capacitance.
void cell_rhs(const IonicModel& model, double cm, const double* x, double* out);

/// Spectral radius of the finite-difference Jacobian of the single-cell
/// right-hand side, via power iteration; relative accuracy ~1e-3.
double cell_jacobian_spectral_radius(const IonicModel& model, double v,
                                     const std::vector<double>& wa,
                                     const std::vector<double>& wg,
                                     double cm = 0.01);

} // namespace hsdc
