#include "hsdc/monodomain.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "hsdc/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "state files are little-endian; serialization assumes a little-endian host");

namespace hsdc {

namespace {
// 4th-order second-derivative stencil, to be divided by dx^2
constexpr double kSten0 = -5.0 / 2.0;
constexpr double kSten1 = 4.0 / 3.0;
constexpr double kSten2 = -1.0 / 12.0;

inline int mirror(int i, int n) {
    if (i < 0) return -1 - i;
    if (i >= n) return 2 * n - 1 - i;
    return i;
}
} // namespace

struct MonodomainProblem::Fft {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
    std::vector<double> sym_x, sym_y; // per-dimension Laplacian symbols
    double norm = 1.0;                // 1/(2Nx * 2Ny)

    ~Fft() {
        if (fwd) fftw_destroy_plan(fwd);
        if (inv) fftw_destroy_plan(inv);
    }
};

MonodomainProblem::MonodomainProblem(MonodomainParams params) : params_(std::move(params)) {
    if (params_.dims < 1 || params_.dims > 2)
        throw std::invalid_argument("monodomain: dims must be 1 or 2");
    if (!params_.ionic) throw std::invalid_argument("monodomain: ionic model required");
    for (int d = 0; d < params_.dims; ++d) {
        if (params_.cells[d] < 8)
            throw std::invalid_argument("monodomain: mesh counts must be >= 8 per dimension");
        if (!(params_.lengths[d] > 0.0))
            throw std::invalid_argument("monodomain: domain lengths must be positive");
        dx_[d] = params_.lengths[d] / params_.cells[d];
    }

    sigma_ = params_.sigma_i * params_.sigma_e / (params_.sigma_i + params_.sigma_e);
    diff_ = sigma_ / (params_.chi * params_.cm);

    n_dof_ = static_cast<std::size_t>(params_.cells[0]);
    if (params_.dims == 2) n_dof_ *= static_cast<std::size_t>(params_.cells[1]);

    const int m1 = params_.ionic->aux_count();
    const int m2 = params_.ionic->gate_count();
    layout_ = BlockLayout{n_dof_, static_cast<std::size_t>(m1) * n_dof_,
                          static_cast<std::size_t>(m2) * n_dof_};

    v_peak_ = std::isnan(params_.v_peak) ? params_.ionic->peak_voltage() : params_.v_peak;

    fft_ = std::make_unique<Fft>();
    std::vector<double> buf(n_dof_);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED; // deterministic plans
    if (params_.dims == 1) {
        fft_->fwd = fftw_plan_r2r_1d(params_.cells[0], buf.data(), buf.data(), FFTW_REDFT10, flags);
        fft_->inv = fftw_plan_r2r_1d(params_.cells[0], buf.data(), buf.data(), FFTW_REDFT01, flags);
        fft_->norm = 1.0 / (2.0 * params_.cells[0]);
    } else {
        fft_->fwd = fftw_plan_r2r_2d(params_.cells[0], params_.cells[1], buf.data(), buf.data(),
                                     FFTW_REDFT10, FFTW_REDFT10, flags);
        fft_->inv = fftw_plan_r2r_2d(params_.cells[0], params_.cells[1], buf.data(), buf.data(),
                                     FFTW_REDFT01, FFTW_REDFT01, flags);
        fft_->norm = 1.0 / (4.0 * params_.cells[0] * params_.cells[1]);
    }

    for (int d = 0; d < params_.dims; ++d) {
        std::vector<double>& sym = (d == 0) ? fft_->sym_x : fft_->sym_y;
        sym.resize(params_.cells[d]);
        for (int k = 0; k < params_.cells[d]; ++k) {
            const double th = M_PI * k / params_.cells[d];
            sym[k] = (kSten0 + 2.0 * kSten1 * std::cos(th) + 2.0 * kSten2 * std::cos(2.0 * th)) /
                     (dx_[d] * dx_[d]);
        }
    }
    if (params_.dims == 1) fft_->sym_y = {0.0};
}

MonodomainProblem::~MonodomainProblem() = default;

const BlockLayout& MonodomainProblem::layout() const { return layout_; }

double MonodomainProblem::laplacian_symbol(int kx, int ky) const {
    return fft_->sym_x[kx] + ((params_.dims == 2) ? fft_->sym_y[ky] : 0.0);
}

void MonodomainProblem::laplacian_apply(std::span<const double> field,
                                        std::span<double> out) const {
    if (field.size() != n_dof_ || out.size() != n_dof_)
        throw ShapeError("laplacian_apply: field length does not match the mesh");
    laplacian_apply(field.data(), out.data());
}

void MonodomainProblem::laplacian_apply(const double* field, double* out) const {
    const int nx = params_.cells[0];
    if (params_.dims == 1) {
        const double idx2 = 1.0 / (dx_[0] * dx_[0]);
        for (int i = 0; i < nx; ++i) {
            out[i] = idx2 * (kSten0 * field[i] +
                             kSten1 * (field[mirror(i - 1, nx)] + field[mirror(i + 1, nx)]) +
                             kSten2 * (field[mirror(i - 2, nx)] + field[mirror(i + 2, nx)]));
        }
        return;
    }
    const int ny = params_.cells[1];
    const double idx2 = 1.0 / (dx_[0] * dx_[0]);
    const double idy2 = 1.0 / (dx_[1] * dx_[1]);
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            const double lx =
                kSten0 * field[i * ny + j] +
                kSten1 * (field[mirror(i - 1, nx) * ny + j] + field[mirror(i + 1, nx) * ny + j]) +
                kSten2 * (field[mirror(i - 2, nx) * ny + j] + field[mirror(i + 2, nx) * ny + j]);
            const double ly =
                kSten0 * field[i * ny + j] +
                kSten1 * (field[i * ny + mirror(j - 1, ny)] + field[i * ny + mirror(j + 1, ny)]) +
                kSten2 * (field[i * ny + mirror(j - 2, ny)] + field[i * ny + mirror(j + 2, ny)]);
            out[i * ny + j] = idx2 * lx + idy2 * ly;
        }
    }
}

void MonodomainProblem::eval_f_I(double, const State& y, State& out) const {
    if (y.layout() != layout_) throw ShapeError("monodomain eval_f_I: layout mismatch");
    laplacian_apply(y.vm().data(), out.vm().data());
    for (double& v : out.vm()) v *= diff_;
    for (double& v : out.wa()) v = 0.0;
    for (double& v : out.wg()) v = 0.0;
}

void MonodomainProblem::eval_f_E(double t, const State& y, State& out) const {
    if (y.layout() != layout_) throw ShapeError("monodomain eval_f_E: layout mismatch");
    const std::size_t n = n_dof_;
    const double* v = y.vm().data();
    const double* wa = y.wa().data();
    const double* wg = y.wg().data();

    // -I_ion/C_m on the potential block
    params_.ionic->ionic_current(n, v, wa, wg, out.vm().data());
    const double icm = 1.0 / params_.cm;
    for (double& e : out.vm()) e *= -icm;

    const Stimulus& st = params_.stimulus;
    if (st.enabled && t >= st.t_on && t <= st.t_off && st.amplitude != 0.0) {
        const int nx = params_.cells[0];
        const int ny = (params_.dims == 2) ? params_.cells[1] : 1;
        double* fv = out.vm().data();
        for (int i = 0; i < nx; ++i) {
            const double x = (i + 0.5) * dx_[0];
            if (x < st.x_range[0] || x > st.x_range[1]) continue;
            for (int j = 0; j < ny; ++j) {
                if (params_.dims == 2) {
                    const double yy = (j + 0.5) * dx_[1];
                    if (yy < st.y_range[0] || yy > st.y_range[1]) continue;
                }
                fv[i * ny + j] += st.amplitude * icm;
            }
        }
    }

    if (layout_.n_wa > 0) params_.ionic->aux_rhs(n, v, wa, wg, out.wa().data());
    for (double& e : out.wg()) e = 0.0;
}

void MonodomainProblem::lambda_diag(const State& y, State& out) const {
    if (y.layout() != layout_) throw ShapeError("monodomain lambda_diag: layout mismatch");
    for (double& e : out.vm()) e = 0.0;
    for (double& e : out.wa()) e = 0.0;
    std::vector<double> w_inf(layout_.n_wg);
    params_.ionic->gating_coeffs(n_dof_, y.vm().data(), out.wg().data(), w_inf.data());
}

void MonodomainProblem::y_inf(const State& y, State& out) const {
    if (y.layout() != layout_) throw ShapeError("monodomain y_inf: layout mismatch");
    for (double& e : out.vm()) e = 0.0;
    for (double& e : out.wa()) e = 0.0;
    std::vector<double> lambda(layout_.n_wg);
    params_.ionic->gating_coeffs(n_dof_, y.vm().data(), lambda.data(), out.wg().data());
}

void MonodomainProblem::implicit_solve(double alpha, const State& b, State& out) const {
    if (b.layout() != layout_) throw ShapeError("monodomain implicit_solve: layout mismatch");
    if (alpha < 0.0) throw std::invalid_argument("monodomain implicit_solve: alpha must be >= 0");
    if (!b.all_finite()) throw NonFiniteError("monodomain implicit_solve: non-finite right-hand side");
    if (&out != &b) copy_into(b, out);
    if (alpha == 0.0) return;

    std::vector<double> work(b.vm().begin(), b.vm().end());
    fftw_execute_r2r(fft_->fwd, work.data(), work.data());
    const int nx = params_.cells[0];
    const int ny = (params_.dims == 2) ? params_.cells[1] : 1;
    for (int kx = 0; kx < nx; ++kx) {
        const double sx = fft_->sym_x[kx];
        for (int ky = 0; ky < ny; ++ky) {
            const double mu = sx + ((params_.dims == 2) ? fft_->sym_y[ky] : 0.0);
            work[kx * ny + ky] /= 1.0 - alpha * diff_ * mu;
        }
    }
    fftw_execute_r2r(fft_->inv, work.data(), work.data());
    double* ov = out.vm().data();
    for (std::size_t i = 0; i < n_dof_; ++i) ov[i] = work[i] * fft_->norm;
}

State MonodomainProblem::initial_state() const {
    const CellRest& rest = params_.ionic->rest_state();
    State s(layout_);
    for (double& e : s.vm()) e = rest.v;
    double* wa = s.wa().data();
    for (int a = 0; a < params_.ionic->aux_count(); ++a)
        for (std::size_t i = 0; i < n_dof_; ++i) wa[a * n_dof_ + i] = rest.wa[a];
    double* wg = s.wg().data();
    for (int g = 0; g < params_.ionic->gate_count(); ++g)
        for (std::size_t i = 0; i < n_dof_; ++i) wg[g * n_dof_ + i] = rest.wg[g];
    return s;
}

State MonodomainProblem::planar_front_initial_state(double front_position, double width) const {
    if (!(front_position > 0.0) || !(front_position < params_.lengths[0]))
        throw std::invalid_argument("planar front: position outside the domain");
    if (!(width > 0.0)) throw std::invalid_argument("planar front: width must be positive");

    const CellRest& rest = params_.ionic->rest_state();
    State s = initial_state();

    const int nx = params_.cells[0];
    const int ny = (params_.dims == 2) ? params_.cells[1] : 1;
    double* v = s.vm().data();
    for (int i = 0; i < nx; ++i) {
        const double x = (i + 0.5) * dx_[0];
        const double vi = rest.v + (v_peak_ - rest.v) * 0.5 * (1.0 - std::tanh((x - front_position) / width));
        for (int j = 0; j < ny; ++j) v[i * ny + j] = vi;
    }
    // gates follow the local potential's steady state
    std::vector<double> lambda(layout_.n_wg);
    params_.ionic->gating_coeffs(n_dof_, v, lambda.data(), s.wg().data());
    return s;
}

// ---------------------------------------------------------------------------
// State snapshots
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'H', 'S', 'D', 'C', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

struct SnapshotHeader {
    char magic[8];
    std::uint32_t version;
    std::uint32_t dims;
    std::uint64_t cells[2];
    double lengths[2];
    std::uint64_t n_vm, n_wa, n_wg;
    double time;
};
static_assert(sizeof(SnapshotHeader) == 8 + 4 + 4 + 16 + 16 + 24 + 8);
} // namespace

void save_state(const std::string& path, const MonodomainProblem& prob, const State& s,
                double time) {
    if (s.layout() != prob.layout()) throw ShapeError("save_state: layout mismatch");
    SnapshotHeader h{};
    std::memcpy(h.magic, kMagic, 8);
    h.version = kVersion;
    h.dims = static_cast<std::uint32_t>(prob.params().dims);
    for (int d = 0; d < 2; ++d) {
        h.cells[d] = static_cast<std::uint64_t>(prob.params().cells[d]);
        h.lengths[d] = prob.params().lengths[d];
    }
    h.n_vm = s.layout().n_vm;
    h.n_wa = s.layout().n_wa;
    h.n_wg = s.layout().n_wg;
    h.time = time;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FileFormatError("save_state: cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    f.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * 8));
    if (!f) throw FileFormatError("save_state: short write to '" + path + "'");
}

std::pair<State, double> load_state(const std::string& path, const MonodomainProblem& prob) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileFormatError("load_state: cannot open '" + path + "'");
    SnapshotHeader h{};
    f.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!f) throw FileFormatError("load_state: truncated header in '" + path + "'");
    if (std::memcmp(h.magic, kMagic, 8) != 0)
        throw FileFormatError("load_state: bad magic in '" + path + "'");
    if (h.version != kVersion)
        throw FileFormatError("load_state: unsupported version " + std::to_string(h.version));

    const auto& p = prob.params();
    const bool mesh_ok = h.dims == static_cast<std::uint32_t>(p.dims) &&
                         h.cells[0] == static_cast<std::uint64_t>(p.cells[0]) &&
                         h.cells[1] == static_cast<std::uint64_t>(p.cells[1]) &&
                         h.lengths[0] == p.lengths[0] && h.lengths[1] == p.lengths[1] &&
                         h.n_vm == prob.layout().n_vm && h.n_wa == prob.layout().n_wa &&
                         h.n_wg == prob.layout().n_wg;
    if (!mesh_ok) throw ShapeError("load_state: mesh metadata does not match the active problem");

    State s(prob.layout());
    f.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(s.size() * 8));
    if (!f || f.gcount() != static_cast<std::streamsize>(s.size() * 8))
        throw FileFormatError("load_state: truncated payload in '" + path + "'");
    return {std::move(s), h.time};
}

} // namespace hsdc
