#include "hsdc/analysis.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "hsdc/errors.hpp"
#include "hsdc/split_system.hpp"

namespace hsdc {

namespace {

double stability_value(const StabilityScanSpec& spec, const LevelHierarchy& hier,
                       double lambda_I, double lambda_e) {
    auto sys = make_dahlquist(lambda_I, spec.lambda_E, lambda_e, 1.0);
    RunOptions opt;
    opt.tol = spec.tol;
    opt.max_iters = spec.K;
    opt.variant = spec.variant;
    opt.cap_is_normal = true; // K caps the iteration, reaching it is not an error
    try {
        BlockResult r = run_block(*sys, hier, sys->initial_state(), 0.0, spec.dt, spec.P, opt);
        const double v = std::abs(r.y_end[0]);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const DivergenceError&) {
        return std::numeric_limits<double>::infinity();
    }
}

long steps_for(double t_end, double dt, const char* what) {
    const double raw = t_end / dt;
    const long n = std::lround(raw);
    if (n < 1 || std::abs(raw - n) > 1e-9 * std::max(1.0, raw))
        throw std::invalid_argument(std::string(what) + ": t_end is not a multiple of dt");
    return n;
}

void open_csv(std::ofstream& f, const std::string& path, const Metadata& meta) {
    f.open(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& [k, v] : meta) f << "# " << k << ": " << v << "\n";
    f.precision(17);
}

} // namespace

std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 1) throw std::invalid_argument("linspace: n must be >= 1");
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    return v;
}

double stability_function(const StabilityScanSpec& spec, double lambda_I, double lambda_e) {
    if (!std::isfinite(lambda_I) || !std::isfinite(lambda_e) || !std::isfinite(spec.lambda_E))
        throw NonFiniteError("stability_function: non-finite rate");
    LevelHierarchy hier(spec.nodes);
    return stability_value(spec, hier, lambda_I, lambda_e);
}

StabilityScanResult stability_scan(const StabilityScanSpec& spec, WorkerPool* pool) {
    if (spec.lambda_I_grid.empty() || spec.lambda_e_grid.empty())
        throw std::invalid_argument("stability_scan: grids must be non-empty");
    LevelHierarchy hier(spec.nodes);

    StabilityScanResult res;
    res.lambda_I = spec.lambda_I_grid;
    res.lambda_e = spec.lambda_e_grid;
    const std::size_t ni = res.lambda_I.size();
    const std::size_t ne = res.lambda_e.size();
    res.values = Matrix(ni, ne);

    auto cell = [&](std::size_t flat) {
        const std::size_t r = flat / ne, c = flat % ne;
        res.values(r, c) = stability_value(spec, hier, res.lambda_I[r], res.lambda_e[c]);
    };
    if (pool) {
        pool->parallel_for(ni * ne, cell);
    } else {
        for (std::size_t i = 0; i < ni * ne; ++i) cell(i);
    }

    for (std::size_t i = 0; i < ni * ne; ++i) {
        const double v = res.values.a[i];
        res.max_value = std::max(res.max_value, v);
        if (v > 1.0) ++res.count_above_one;
    }
    return res;
}

ConvergenceResult convergence_study(const SplitSystem& sys, const LevelHierarchy& hier,
                                    const State& y0, double t_end,
                                    const std::vector<double>& dts, int P,
                                    const RunOptions& opt, double ref_tol) {
    if (dts.size() < 2) throw std::invalid_argument("convergence_study: need at least 2 step sizes");

    ConvergenceResult out;
    out.reference_dt = dts.back() / 4.0;

    // reference: same scheme, serial, four times finer than the smallest dt,
    // iterated to ref_tol
    RunOptions ref_opt = opt;
    ref_opt.tol = ref_tol;
    ref_opt.max_iters = std::max(opt.max_iters, 200);
    ref_opt.frozen_prefix = false;
    const long ref_steps = steps_for(t_end, out.reference_dt, "convergence_study reference");
    TrajectoryStats ref =
        run_many_blocks(sys, hier, y0, 0.0, out.reference_dt, 1, static_cast<int>(ref_steps),
                        ref_opt);
    const double ref_scale = max_abs(ref.y_final);

    for (std::size_t i = 0; i < dts.size(); ++i) {
        const double dt = dts[i];
        const long n = steps_for(t_end, dt, "convergence_study");
        if (n % P != 0)
            throw std::invalid_argument("convergence_study: step count not divisible by P");
        RunOptions ropt = opt;
        ropt.cap_is_normal = true; // fixed-K order studies hit the cap by design
        TrajectoryStats run =
            run_many_blocks(sys, hier, y0, 0.0, dt, P, static_cast<int>(n / P), ropt);
        ConvergenceRow row;
        row.dt = dt;
        row.error = max_abs_diff(run.y_final, ref.y_final) / ref_scale;
        if (i > 0) {
            const ConvergenceRow& prev = out.rows.back();
            row.order = std::log(prev.error / row.error) / std::log(prev.dt / dt);
        }
        out.rows.push_back(row);
    }
    return out;
}

std::vector<IterationCell> iteration_stats(const SplitSystem& sys, const LevelHierarchy& hier,
                                           const State& y0, const std::vector<double>& dts,
                                           const std::vector<int>& procs, const RunOptions& opt) {
    std::vector<IterationCell> cells;
    for (double dt : dts) {
        for (int P : procs) {
            IterationCell cell;
            cell.dt = dt;
            cell.P = P;
            try {
                TrajectoryStats s = run_many_blocks(sys, hier, y0, 0.0, dt, P, 1, opt);
                cell.mean = s.mean_iterations;
                cell.stddev = s.std_iterations;
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

ResidualTrace residual_trace(const SplitSystem& sys, const LevelHierarchy& hier, const State& y0,
                             double t0, double dt, int P, int n_blocks, const RunOptions& opt) {
    ResidualTrace trace;
    auto on_block = [&](int block, double, const BlockResult& r) {
        for (int p = 0; p < P; ++p) {
            const long step = static_cast<long>(block) * P + p;
            for (std::size_t k = 0; k < r.residual_history[p].size(); ++k)
                trace.rows.push_back({step, static_cast<int>(k + 1), r.residual_history[p][k]});
            trace.step_iters.emplace_back(t0 + step * dt, r.step_iterations[p]);
        }
        trace.converged = trace.converged && r.converged;
    };
    run_many_blocks(sys, hier, y0, t0, dt, P, n_blocks, opt, on_block);
    return trace;
}

void write_scan_csv(const std::string& path, const StabilityScanResult& scan, const Metadata& meta) {
    std::ofstream f;
    open_csv(f, path, meta);
    f << "lambda_I\\lambda_e";
    for (double le : scan.lambda_e) f << "," << le;
    f << "\n";
    for (std::size_t r = 0; r < scan.lambda_I.size(); ++r) {
        f << scan.lambda_I[r];
        for (std::size_t c = 0; c < scan.lambda_e.size(); ++c) f << "," << scan.values(r, c);
        f << "\n";
    }
    f << "# max_abs_R: " << scan.max_value << "\n";
    f << "# entries_above_one: " << scan.count_above_one << "\n";
}

void write_convergence_csv(const std::string& path, const ConvergenceResult& res,
                           const Metadata& meta) {
    std::ofstream f;
    open_csv(f, path, meta);
    f << "# reference_dt: " << res.reference_dt << "\n";
    f << "dt,error,observed_order\n";
    for (const auto& row : res.rows)
        f << row.dt << "," << row.error << "," << row.order << "\n";
}

void write_iterations_csv(const std::string& path, const std::vector<IterationCell>& cells,
                          const Metadata& meta) {
    std::ofstream f;
    open_csv(f, path, meta);
    f << "dt,P,mean_iterations,std_iterations,status\n";
    for (const auto& c : cells) {
        f << c.dt << "," << c.P << ",";
        if (c.ok)
            f << c.mean << "," << c.stddev << ",ok\n";
        else
            f << ",," << "failed: " << c.error << "\n";
    }
}

void write_residuals_csv(const std::string& path, const ResidualTrace& trace, const Metadata& meta) {
    std::ofstream f;
    open_csv(f, path, meta);
    f << "step,iteration,residual\n";
    for (const auto& row : trace.rows)
        f << row.step << "," << row.iteration << "," << row.residual << "\n";
    f << "# steps: " << trace.step_iters.size() << "\n";
}

} // namespace hsdc
