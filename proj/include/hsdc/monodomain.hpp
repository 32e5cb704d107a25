#pragma once

#include <array>
#include <span>
#include <memory>
#include <string>
#include <utility>

#include "hsdc/ionic.hpp"
#include "hsdc/split_system.hpp"

namespace hsdc {

/// Box stimulus current, off by default.
struct Stimulus {
    bool enabled = false;
    double amplitude = 0.0; ///< uA/mm^2
    double t_on = 0.0, t_off = 0.0;
    std::array<double, 2> x_range{0.0, 0.0};
    std::array<double, 2> y_range{0.0, 0.0};
};

struct MonodomainParams {
    int dims = 1;
    std::array<double, 2> lengths{64.0, 0.0}; ///< mm
    std::array<int, 2> cells{160, 0};
    double sigma_i = 0.17; ///< mS/mm
    double sigma_e = 0.62; ///< mS/mm
    double chi = 140.0;    ///< 1/mm
    double cm = 0.01;      ///< uF/mm^2
    std::shared_ptr<const IonicModel> ionic;
    Stimulus stimulus;
    /// Front-initializer plateau; NaN means "use the ionic model's peak".
    double v_peak = std::numeric_limits<double>::quiet_NaN();
};

/// Finite-difference monodomain tissue on a 1D/2D rectangle. Cell-centered
/// uniform grid with a 4th-order Laplacian; the zero-flux boundary is
/// realized by even (mirror) reflection, which is exactly the operator the
/// DCT-II diagonalizes, so laplacian_apply and implicit_solve stay mutually
/// consistent. The problem object is immutable and shared; the SplitSystem
/// evaluations are pure and reentrant.
class MonodomainProblem final : public SplitSystem {
public:
    explicit MonodomainProblem(MonodomainParams params);
    ~MonodomainProblem() override;

    MonodomainProblem(const MonodomainProblem&) = delete;
    MonodomainProblem& operator=(const MonodomainProblem&) = delete;

    // SplitSystem contract
    const BlockLayout& layout() const override;
    void eval_f_I(double t, const State& y, State& out) const override;
    void eval_f_E(double t, const State& y, State& out) const override;
    void lambda_diag(const State& y, State& out) const override;
    void y_inf(const State& y, State& out) const override;
    void implicit_solve(double alpha, const State& b, State& out) const override;
    State initial_state() const override; ///< uniform rest state

    /// 4th-order discrete Laplacian (1/mm^2), mirror boundaries. field and
    /// out are nodal arrays of length n_dof().
    void laplacian_apply(std::span<const double> field, std::span<double> out) const;
    void laplacian_apply(const double* field, double* out) const;

    /// Laplacian symbol (eigenvalue) of mode (kx, ky) under the DCT-II basis.
    double laplacian_symbol(int kx, int ky = 0) const;

    /// Traveling-front initial condition: V follows a tanh profile from
    /// v_peak (left) to rest (right), gates at their V-local steady state.
    State planar_front_initial_state(double front_position, double width) const;

    const MonodomainParams& params() const { return params_; }
    std::size_t n_dof() const { return n_dof_; }
    double dx(int d) const { return dx_[d]; }
    double sigma() const { return sigma_; }
    double diffusion_coeff() const { return diff_; } ///< sigma/(chi cm), mm^2/ms

private:
    struct Fft;
    MonodomainParams params_;
    BlockLayout layout_;
    std::size_t n_dof_ = 0;
    std::array<double, 2> dx_{0.0, 0.0};
    double sigma_ = 0.0, diff_ = 0.0, v_peak_ = 0.0;
    std::unique_ptr<Fft> fft_;
};

/// Versioned little-endian binary state snapshot (bit-exact restarts).
void save_state(const std::string& path, const MonodomainProblem& prob, const State& s,
                double time = 0.0);

/// Load a snapshot written by save_state; validates header and mesh metadata
/// against the active problem. Returns the state and its stored time.
std::pair<State, double> load_state(const std::string& path, const MonodomainProblem& prob);

} // namespace hsdc
