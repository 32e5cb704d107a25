#include "hsdc/ionic.hpp"

#include <cmath>
#include <stdexcept>

#include "hsdc/errors.hpp"

namespace hsdc {

namespace {

// Solve the dense n x n system A x = b in place (partial pivoting).
void solve_dense(int n, std::vector<double>& A, std::vector<double>& b) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
        if (A[piv * n + col] == 0.0) throw std::runtime_error("solve_dense: singular matrix");
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(A[piv * n + c], A[col * n + c]);
            std::swap(b[piv], b[col]);
        }
        for (int r = col + 1; r < n; ++r) {
            double f = A[r * n + col] / A[col * n + col];
            for (int c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
            b[r] -= f * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= A[r * n + c] * b[c];
        b[r] = s / A[r * n + r];
    }
}

// Damped Newton on the full cell system, starting from a model-provided
// guess. Guarantees the equilibrium invariant for whatever parameters ship.
CellRest find_rest_state(const IonicModel& model, const std::vector<double>& x0, double cm) {
    const int n = 1 + model.aux_count() + model.gate_count();
    std::vector<double> x = x0, fx(n), xt(n), ft(n);
    cell_rhs(model, cm, x.data(), fx.data());
    auto norm = [&](const std::vector<double>& v) {
        double m = 0.0;
        for (double e : v) m = std::max(m, std::abs(e));
        return m;
    };
    double res = norm(fx);
    for (int it = 0; it < 100 && res > 1e-13; ++it) {
        // finite-difference Jacobian
        std::vector<double> J(static_cast<std::size_t>(n) * n);
        for (int c = 0; c < n; ++c) {
            double h = 1e-7 * std::max(1.0, std::abs(x[c]));
            xt = x;
            xt[c] += h;
            cell_rhs(model, cm, xt.data(), ft.data());
            for (int r = 0; r < n; ++r) J[r * n + c] = (ft[r] - fx[r]) / h;
        }
        std::vector<double> rhs(n);
        for (int r = 0; r < n; ++r) rhs[r] = -fx[r];
        solve_dense(n, J, rhs);
        double step = 1.0;
        for (int ls = 0; ls < 30; ++ls) {
            for (int r = 0; r < n; ++r) xt[r] = x[r] + step * rhs[r];
            cell_rhs(model, cm, xt.data(), ft.data());
            if (norm(ft) < res) break;
            step *= 0.5;
        }
        x = xt;
        fx = ft;
        res = norm(fx);
    }
    if (res > 1e-9) throw std::runtime_error("ionic rest state: Newton failed, residual " + std::to_string(res));

    CellRest rest;
    rest.v = x[0];
    rest.wa.assign(x.begin() + 1, x.begin() + 1 + model.aux_count());
    rest.wg.assign(x.begin() + 1 + model.aux_count(), x.end());
    return rest;
}

// x/(1 - exp(-x/10)) with the 0/0 limit handled by its series.
inline double rate_over_expm(double x) {
    if (std::abs(x) < 1e-5) return 10.0 + 0.5 * x + x * x / 120.0;
    return x / (1.0 - std::exp(-0.1 * x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Hodgkin-Huxley
// ---------------------------------------------------------------------------

class HodgkinHuxley final : public IonicModel {
public:
    HodgkinHuxley() : name_("hh") {
        std::vector<double> guess{-65.0, 0.05, 0.6, 0.32}; // V, m, h, n
        rest_ = find_rest_state(*this, guess, 0.01);
    }

    int aux_count() const override { return 0; }
    int gate_count() const override { return 3; }
    const std::string& name() const override { return name_; }
    double peak_voltage() const override { return 30.0; }
    const CellRest& rest_state() const override { return rest_; }

    void ionic_current(std::size_t n, const double* v, const double*, const double* wg,
                       double* out) const override {
        const double* m = wg;
        const double* h = wg + n;
        const double* nn = wg + 2 * n;
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = v[i];
            const double m3h = m[i] * m[i] * m[i] * h[i];
            const double n4 = nn[i] * nn[i] * nn[i] * nn[i];
            out[i] = g_na_ * m3h * (vi - e_na_) + g_k_ * n4 * (vi - e_k_) + g_l_ * (vi - e_l_);
        }
    }

    void aux_rhs(std::size_t, const double*, const double*, const double*, double*) const override {}

    void gating_coeffs(std::size_t n, const double* v, double* lambda, double* w_inf) const override {
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = v[i];
            const double am = 0.1 * rate_over_expm(vi + 40.0);
            const double bm = 4.0 * std::exp(-(vi + 65.0) / 18.0);
            const double ah = 0.07 * std::exp(-(vi + 65.0) / 20.0);
            const double bh = sigmoid((vi + 35.0) / 10.0);
            const double an = 0.01 * rate_over_expm(vi + 55.0);
            const double bn = 0.125 * std::exp(-(vi + 65.0) / 80.0);
            lambda[i] = -(am + bm);
            lambda[n + i] = -(ah + bh);
            lambda[2 * n + i] = -(an + bn);
            w_inf[i] = am / (am + bm);
            w_inf[n + i] = ah / (ah + bh);
            w_inf[2 * n + i] = an / (an + bn);
        }
    }

private:
    // mS/mm^2 and mV; classic values scaled from mS/cm^2
    static constexpr double g_na_ = 1.20, g_k_ = 0.36, g_l_ = 0.003;
    static constexpr double e_na_ = 50.0, e_k_ = -77.0, e_l_ = -54.387;
    std::string name_;
    CellRest rest_;
};

// ---------------------------------------------------------------------------
// Synthetic stiff membrane
// ---------------------------------------------------------------------------
//
// Cubic FitzHugh-style excitable current gated by a fast activation gate w1
// and a slower inactivation gate w2, plus one linear recovery variable. Gate
// rates carry the stiffness: |lambda_1| peaks at exactly rho_target at V = 0.

class SyntheticStiff final : public IonicModel {
public:
    explicit SyntheticStiff(double rho) : rho_(rho), name_("synthetic") {
        if (!(rho > 0.0)) throw std::invalid_argument("synthetic_stiff_model: rho_target must be positive");
        std::vector<double> guess{v_rest_, 0.0, w_inf1(v_rest_), w_inf2(v_rest_)};
        rest_ = find_rest_state(*this, guess, 0.01);
    }

    int aux_count() const override { return 1; }
    int gate_count() const override { return 2; }
    const std::string& name() const override { return name_; }
    double peak_voltage() const override { return v_peak_; }
    const CellRest& rest_state() const override { return rest_; }

    void ionic_current(std::size_t n, const double* v, const double* wa, const double* wg,
                       double* out) const override {
        const double* w1 = wg;
        const double* w2 = wg + n;
        const double a2 = amp_ * amp_;
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = v[i];
            const double cubic = k_ * (vi - v_rest_) * (vi - v_th_) * (v_peak_ - vi) / a2;
            const double inward = g_in_ * w1[i] * w2[i] * (v_peak_ - vi);
            const double outward = g_out_ * wa[i] * (vi - v_rest_) / amp_;
            // dV/dt contribution is -I_ion/C_m, so negate the rate and scale by C_m
            out[i] = -cm_ref_ * (cubic + inward - outward);
        }
    }

    void aux_rhs(std::size_t n, const double* v, const double* wa, const double*,
                 double* out) const override {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = eps_ * ((v[i] - v_rest_) - gamma_ * wa[i]);
    }

    void gating_coeffs(std::size_t n, const double* v, double* lambda, double* w_inf) const override {
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = v[i];
            const double b1 = (vi - 0.0) / 25.0;
            const double b2 = (vi + 55.0) / 30.0;
            lambda[i] = -rho_ * (0.02 + 0.98 * std::exp(-b1 * b1));
            lambda[n + i] = -(rho_ / 200.0) * (0.2 + 0.8 * std::exp(-b2 * b2));
            w_inf[i] = w_inf1(vi);
            w_inf[n + i] = w_inf2(vi);
        }
    }

private:
    static double w_inf1(double v) { return sigmoid((v + 40.0) / 6.0); }
    static double w_inf2(double v) { return sigmoid(-(v + 60.0) / 8.0); }

    double rho_;
    std::string name_;
    CellRest rest_;
    static constexpr double v_rest_ = -85.0, v_th_ = -60.0, v_peak_ = 40.0, amp_ = 125.0;
    static constexpr double k_ = 4.0;      // cubic rate scale, 1/ms
    static constexpr double g_in_ = 2.0;   // gated inward rate, 1/ms
    static constexpr double g_out_ = 6.0;  // recovery-coupled outward rate, 1/ms
    static constexpr double eps_ = 0.1;    // recovery rate, 1/ms
    static constexpr double gamma_ = 1.0;
    static constexpr double cm_ref_ = 0.01; // rates above are per-capacitance
};

} // namespace

std::shared_ptr<IonicModel> hh_model() { return std::make_shared<HodgkinHuxley>(); }

std::shared_ptr<IonicModel> synthetic_stiff_model(double rho_target) {
    return std::make_shared<SyntheticStiff>(rho_target);
}

void cell_rhs(const IonicModel& model, double cm, const double* x, double* out) {
    const int m1 = model.aux_count();
    const int m2 = model.gate_count();
    const double* v = x;
    const double* wa = x + 1;
    const double* wg = x + 1 + m1;

    double i_ion;
    model.ionic_current(1, v, wa, wg, &i_ion);
    out[0] = -i_ion / cm;
    if (m1 > 0) model.aux_rhs(1, v, wa, wg, out + 1);

    std::vector<double> lambda(m2), w_inf(m2);
    model.gating_coeffs(1, v, lambda.data(), w_inf.data());
    for (int g = 0; g < m2; ++g)
        out[1 + m1 + g] = lambda[g] * (wg[g] - w_inf[g]);
}

double cell_jacobian_spectral_radius(const IonicModel& model, double v,
                                     const std::vector<double>& wa,
                                     const std::vector<double>& wg, double cm) {
    const int m1 = model.aux_count();
    const int m2 = model.gate_count();
    if (static_cast<int>(wa.size()) != m1 || static_cast<int>(wg.size()) != m2)
        throw ShapeError("cell_jacobian_spectral_radius: block sizes do not match model");
    const int n = 1 + m1 + m2;

    std::vector<double> x(n);
    x[0] = v;
    for (int a = 0; a < m1; ++a) x[1 + a] = wa[a];
    for (int g = 0; g < m2; ++g) x[1 + m1 + g] = wg[g];
    for (double e : x)
        if (!std::isfinite(e)) throw NonFiniteError("cell_jacobian_spectral_radius: non-finite state");

    std::vector<double> f0(n), ft(n), xt(n);
    cell_rhs(model, cm, x.data(), f0.data());
    std::vector<double> J(static_cast<std::size_t>(n) * n);
    for (int c = 0; c < n; ++c) {
        double h = 1e-6 * std::max(1.0, std::abs(x[c]));
        xt = x;
        xt[c] += h;
        cell_rhs(model, cm, xt.data(), ft.data());
        for (int r = 0; r < n; ++r) J[r * n + c] = (ft[r] - f0[r]) / h;
    }

    // Power iteration; the spectral radius is read off the geometric mean of
    // the growth factors so complex-conjugate dominant pairs also converge.
    std::vector<double> vec(n, 1.0), nvec(n);
    double norm = std::sqrt(static_cast<double>(n));
    for (double& e : vec) e /= norm;
    double log_growth = 0.0;
    const int warmup = 200, sample = 100;
    for (int it = 0; it < warmup + sample; ++it) {
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int c = 0; c < n; ++c) s += J[r * n + c] * vec[c];
            nvec[r] = s;
        }
        double g = 0.0;
        for (double e : nvec) g += e * e;
        g = std::sqrt(g);
        if (g == 0.0) return 0.0;
        for (int r = 0; r < n; ++r) vec[r] = nvec[r] / g;
        if (it >= warmup) log_growth += std::log(g);
    }
    return std::exp(log_growth / sample);
}

} // namespace hsdc
