#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hsdc/pfasst.hpp"

namespace hsdc {

/// One stability-domain scan: lambda_E fixed, (lambda_I, lambda_e) gridded,
/// steps of size dt = 1 per the scalar test equation convention.
struct StabilityScanSpec {
    double lambda_E = -2.0;
    std::vector<double> lambda_I_grid;
    std::vector<double> lambda_e_grid;
    double dt = 1.0;
    int P = 1;
    std::vector<int> nodes = {6};
    int K = 100;
    double tol = 1e-10;
    Variant variant = Variant::hsdc;
};

/// |R_P| for one (lambda_I, lambda_e) pair: |y_P| after P unit steps of the
/// scalar test equation computed in one block, K capping iterations.
/// Divergence is reported as +infinity so scans stay total.
double stability_function(const StabilityScanSpec& spec, double lambda_I, double lambda_e);

struct StabilityScanResult {
    std::vector<double> lambda_I; ///< row coordinates
    std::vector<double> lambda_e; ///< column coordinates
    Matrix values;                ///< |R_P|, indexed (row: lambda_I, col: lambda_e)
    double max_value = 0.0;
    long count_above_one = 0;
};

StabilityScanResult stability_scan(const StabilityScanSpec& spec, WorkerPool* pool = nullptr);

/// Uniform grid helper: n points from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, int n);

struct ConvergenceRow {
    double dt = 0.0;
    double error = 0.0; ///< relative max-norm difference to the reference at T
    double order = 0.0; ///< log2 ratio against the previous row (0 for the first)
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;
    double reference_dt = 0.0;
};

/// Self-convergence study over a dyadic step-size ladder: the reference is
/// the same scheme at dts.back()/4 iterated to ref_tol.
ConvergenceResult convergence_study(const SplitSystem& sys, const LevelHierarchy& hier,
                                    const State& y0, double t_end,
                                    const std::vector<double>& dts, int P,
                                    const RunOptions& opt, double ref_tol = 1e-13);

struct IterationCell {
    double dt = 0.0;
    int P = 0;
    double mean = 0.0;
    double stddev = 0.0;
    bool ok = false;
    std::string error;
};

/// Mean/std of per-step iteration counts over one block of P steps per cell
/// (T = P dt). Per-cell failures are recorded and the scan continues.
std::vector<IterationCell> iteration_stats(const SplitSystem& sys, const LevelHierarchy& hier,
                                           const State& y0, const std::vector<double>& dts,
                                           const std::vector<int>& procs, const RunOptions& opt);

struct ResidualTrace {
    struct Row {
        long step = 0;
        int iteration = 0;
        double residual = 0.0;
    };
    std::vector<Row> rows;                          ///< long format
    std::vector<std::pair<double, int>> step_iters; ///< (t_n, k_n) per step
    bool converged = true;
};

/// Relative residual after each iteration for each step over n_blocks
/// chained blocks of P steps.
ResidualTrace residual_trace(const SplitSystem& sys, const LevelHierarchy& hier, const State& y0,
                             double t0, double dt, int P, int n_blocks, const RunOptions& opt);

// CSV emission; every file starts with a metadata comment block and carries
// no timestamps so identical configs produce identical bytes.
using Metadata = std::vector<std::pair<std::string, std::string>>;
void write_scan_csv(const std::string& path, const StabilityScanResult& scan, const Metadata& meta);
void write_convergence_csv(const std::string& path, const ConvergenceResult& res, const Metadata& meta);
void write_iterations_csv(const std::string& path, const std::vector<IterationCell>& cells,
                          const Metadata& meta);
void write_residuals_csv(const std::string& path, const ResidualTrace& trace, const Metadata& meta);

} // namespace hsdc
