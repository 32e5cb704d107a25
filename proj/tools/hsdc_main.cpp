// Command-line driver: simulate | converge | stability | iterations | residuals.
// Each subcommand reads an optional JSON config, applies flag overrides,
// writes a config.resolved.json snapshot for exact replay, and emits CSV/JSON
// results without timestamps so identical configs give identical bytes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsdc/analysis.hpp"
#include "hsdc/config.hpp"
#include "hsdc/errors.hpp"
#include "hsdc/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hsdc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitMaxIterations = 3;
constexpr int kExitDivergence = 4;

struct FlagOverrides {
    std::string config_path;
    std::optional<double> dt, tol, t_end;
    std::optional<long> n_steps;
    std::optional<int> levels, procs, max_iters, workers, snapshot_every;
    std::optional<std::string> nodes, variant, out, problem, ionic, initial_state;
    std::optional<double> rho, lambda_I, lambda_E, lambda_e, w_inf, y0;
    bool frozen_prefix = false;
};

std::vector<int> parse_int_list(const std::string& s, const char* what) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (...) {
            throw std::invalid_argument(std::string(what) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (...) {
            throw std::invalid_argument(std::string(what) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
    return out;
}

// lo:hi:n
std::vector<double> parse_range(const std::string& s, const char* what) {
    double lo, hi;
    int n;
    char c1, c2;
    std::stringstream ss(s);
    if (!(ss >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1)
        throw std::invalid_argument(std::string(what) + ": expected lo:hi:n, got '" + s + "'");
    return linspace(lo, hi, n);
}

RunConfig assemble_config(const FlagOverrides& f) {
    RunConfig cfg;
    if (!f.config_path.empty()) cfg = parse_config_file(f.config_path);
    if (f.problem) cfg.problem = *f.problem;
    if (f.ionic) cfg.ionic = *f.ionic;
    if (f.rho) cfg.rho = *f.rho;
    if (f.dt) cfg.dt = *f.dt;
    if (f.t_end) cfg.t_end = *f.t_end;
    if (f.n_steps) cfg.n_steps = *f.n_steps;
    if (f.nodes) cfg.nodes = parse_int_list(*f.nodes, "--nodes");
    if (f.levels) cfg.levels = *f.levels;
    if (f.procs) cfg.procs = *f.procs;
    if (f.tol) cfg.tol = *f.tol;
    if (f.max_iters) cfg.max_iters = *f.max_iters;
    if (f.variant) cfg.variant = *f.variant;
    if (f.out) cfg.out_dir = *f.out;
    if (f.workers) cfg.workers = *f.workers;
    if (f.snapshot_every) cfg.snapshot_every = *f.snapshot_every;
    if (f.initial_state) cfg.initial_state = *f.initial_state;
    if (f.lambda_I) cfg.lambda_I = *f.lambda_I;
    if (f.lambda_E) cfg.lambda_E = *f.lambda_E;
    if (f.lambda_e) cfg.lambda_e = *f.lambda_e;
    if (f.w_inf) cfg.w_inf = *f.w_inf;
    if (f.y0) cfg.y0 = *f.y0;
    if (f.frozen_prefix) cfg.frozen_prefix = true;
    validate_config(cfg);
    return cfg;
}

fs::path resolve_out_dir(RunConfig& cfg, const std::string& subcommand) {
    fs::path dir;
    if (!cfg.out_dir.empty()) {
        dir = cfg.out_dir;
    } else {
        const char* root = std::getenv("HSDC_OUT_ROOT");
        dir = fs::path(root ? root : ".") / ("hsdc_" + subcommand);
        cfg.out_dir = dir.string();
    }
    fs::create_directories(dir);
    return dir;
}

void write_resolved(const RunConfig& cfg, const fs::path& dir) {
    std::ofstream f(dir / "config.resolved.json");
    if (!f) throw std::runtime_error("cannot write config.resolved.json");
    f << resolved_json(cfg) << "\n";
}

Metadata make_metadata(const RunConfig& cfg, const std::string& subcommand) {
    return {{"generator", std::string("hsdc ") + kVersion},
            {"subcommand", subcommand},
            {"config-hash", config_hash(cfg)}};
}

void add_common_flags(CLI::App* cmd, FlagOverrides& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--problem", f.problem, "problem: dahlquist|linear_gating|monodomain_1d|monodomain_2d");
    cmd->add_option("--ionic", f.ionic, "ionic model: hh|synthetic");
    cmd->add_option("--rho", f.rho, "synthetic-model stiffness target");
    cmd->add_option("--dt", f.dt, "step size (ms)");
    cmd->add_option("--t-end", f.t_end, "end time (ms)");
    cmd->add_option("--n-steps", f.n_steps, "number of steps");
    cmd->add_option("--nodes", f.nodes, "collocation nodes per level, e.g. 6,3");
    cmd->add_option("--levels", f.levels, "number of levels (must match --nodes)");
    cmd->add_option("--procs", f.procs, "parallel steps per block (P)");
    cmd->add_option("--tol", f.tol, "relative residual tolerance");
    cmd->add_option("--max-iters", f.max_iters, "iteration cap (K)");
    cmd->add_option("--variant", f.variant, "hsdc|naive_sdc");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--workers", f.workers, "worker threads (0 = logical emulation)");
    cmd->add_option("--initial-state", f.initial_state, "state file to start from");
    cmd->add_option("--snapshot-every", f.snapshot_every, "snapshot cadence in blocks");
    cmd->add_option("--lambda-I", f.lambda_I, "implicit rate of the scalar test problems");
    cmd->add_option("--lambda-E", f.lambda_E, "explicit rate of the scalar test problems");
    cmd->add_option("--lambda-e", f.lambda_e, "exponential rate of the scalar test problems");
    cmd->add_option("--w-inf", f.w_inf, "gating equilibrium of the linear gating problem");
    cmd->add_option("--y0", f.y0, "initial value of the scalar test problems");
    cmd->add_flag("--frozen-prefix", f.frozen_prefix,
                  "stop iterating steps once all earlier steps converged");
}

int run_simulate(const FlagOverrides& flags) {
    RunConfig cfg = assemble_config(flags);
    fs::path dir = resolve_out_dir(cfg, "simulate");
    write_resolved(cfg, dir);

    BuiltProblem built = build_problem(cfg);
    WorkerPool pool(cfg.workers);
    RunOptions opt = run_options(cfg);
    opt.pool = &pool;
    opt.cap_is_normal = true; // exit code reports the cap; outputs still flush

    const bool tissue = static_cast<bool>(built.tissue);
    std::ofstream traj;
    if (!tissue) {
        traj.open(dir / "trajectory.csv");
        traj.precision(17);
        traj << "t,y\n" << built.t0 << "," << built.y0[0] << "\n";
    }

    json summary;
    summary["config_hash"] = config_hash(cfg);
    summary["version"] = kVersion;

    if (cfg.n_steps == 0) {
        if (tissue) save_state((dir / "final_state.bin").string(), *built.tissue, built.y0, built.t0);
        summary["converged"] = true;
        summary["blocks"] = 0;
        summary["final_time"] = built.t0;
        summary["exit_code"] = kExitOk;
        std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
        return kExitOk;
    }

    std::ofstream stats(dir / "iterations.csv");
    stats.precision(17);
    stats << "block,t_end,iterations,mean_step_iterations,converged,max_residual\n";

    State y = built.y0;
    double t = built.t0;
    long remaining = cfg.n_steps;
    int block = 0;
    bool all_converged = true;
    int exit_code = kExitOk;
    double sum_k = 0, sum_k2 = 0;
    long count_k = 0;
    std::vector<double> last_residuals;

    try {
        while (remaining > 0) {
            const int P = static_cast<int>(std::min<long>(cfg.procs, remaining));
            BlockResult r = run_block(*built.system, *built.hierarchy, y, t, cfg.dt, P, opt);
            y = r.y_end;
            t += P * cfg.dt;
            remaining -= P;
            ++block;
            all_converged = all_converged && r.converged;
            double maxres = 0, meank = 0;
            for (double v : r.final_residuals) maxres = std::max(maxres, v);
            for (int kk : r.step_iterations) {
                meank += kk;
                sum_k += kk;
                sum_k2 += double(kk) * kk;
                ++count_k;
            }
            meank /= P;
            last_residuals = r.final_residuals;
            stats << block << "," << t << "," << r.iterations << "," << meank << ","
                  << (r.converged ? 1 : 0) << "," << maxres << "\n";
            if (!tissue) traj << t << "," << y[0] << "\n";
            if (tissue && cfg.snapshot_every > 0 && block % cfg.snapshot_every == 0)
                save_state((dir / ("state_block_" + std::to_string(block) + ".bin")).string(),
                           *built.tissue, y, t);
        }
    } catch (const DivergenceError& e) {
        std::cerr << "simulate: " << e.what() << "\n";
        exit_code = kExitDivergence;
        all_converged = false;
    }

    if (!all_converged && exit_code == kExitOk) exit_code = kExitMaxIterations;
    if (tissue) save_state((dir / "final_state.bin").string(), *built.tissue, y, t);

    summary["converged"] = all_converged;
    summary["blocks"] = block;
    summary["final_time"] = t;
    summary["mean_iterations"] = count_k ? sum_k / count_k : 0.0;
    summary["std_iterations"] =
        count_k ? std::sqrt(std::max(0.0, sum_k2 / count_k - (sum_k / count_k) * (sum_k / count_k)))
                : 0.0;
    summary["final_residuals"] = last_residuals;
    summary["exit_code"] = exit_code;
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    return exit_code;
}

int run_stability(const FlagOverrides& flags, const std::string& li_range,
                  const std::string& le_range) {
    RunConfig cfg = assemble_config(flags);
    fs::path dir = resolve_out_dir(cfg, "stability");
    write_resolved(cfg, dir);

    StabilityScanSpec spec;
    spec.lambda_E = cfg.lambda_E;
    spec.lambda_I_grid = parse_range(li_range, "--li-grid");
    spec.lambda_e_grid = parse_range(le_range, "--le-grid");
    spec.nodes = cfg.nodes;
    spec.P = cfg.procs;
    spec.K = cfg.max_iters;
    spec.tol = cfg.tol;
    spec.variant = (cfg.variant == "hsdc") ? Variant::hsdc : Variant::naive_sdc;

    WorkerPool pool(cfg.workers);
    StabilityScanResult scan = stability_scan(spec, &pool);
    write_scan_csv((dir / "stability.csv").string(), scan, make_metadata(cfg, "stability"));
    std::cout << "max|R_P| = " << scan.max_value << ", entries above one: " << scan.count_above_one
              << "\n";
    return kExitOk;
}

int run_converge(const FlagOverrides& flags, const std::string& dts_arg) {
    RunConfig cfg = assemble_config(flags);
    fs::path dir = resolve_out_dir(cfg, "converge");
    write_resolved(cfg, dir);

    std::vector<double> dts = parse_double_list(dts_arg, "--dts");
    BuiltProblem built = build_problem(cfg);
    WorkerPool pool(cfg.workers);
    RunOptions opt = run_options(cfg);
    opt.pool = &pool;

    ConvergenceResult res = convergence_study(*built.system, *built.hierarchy, built.y0,
                                              cfg.t_end, dts, cfg.procs, opt);
    write_convergence_csv((dir / "convergence.csv").string(), res, make_metadata(cfg, "converge"));
    for (const auto& row : res.rows)
        std::cout << "dt=" << row.dt << " error=" << row.error << " order=" << row.order << "\n";
    return kExitOk;
}

int run_iterations(const FlagOverrides& flags, const std::string& dts_arg,
                   const std::string& procs_arg) {
    RunConfig cfg = assemble_config(flags);
    fs::path dir = resolve_out_dir(cfg, "iterations");
    write_resolved(cfg, dir);

    BuiltProblem built = build_problem(cfg);
    WorkerPool pool(cfg.workers);
    RunOptions opt = run_options(cfg);
    opt.pool = &pool;

    auto cells = iteration_stats(*built.system, *built.hierarchy, built.y0,
                                 parse_double_list(dts_arg, "--dts"),
                                 parse_int_list(procs_arg, "--procs-list"), opt);
    write_iterations_csv((dir / "iterations.csv").string(), cells, make_metadata(cfg, "iterations"));
    for (const auto& c : cells)
        std::cout << "dt=" << c.dt << " P=" << c.P << " "
                  << (c.ok ? "mean=" + std::to_string(c.mean) : "failed: " + c.error) << "\n";
    return kExitOk;
}

int run_residuals(const FlagOverrides& flags) {
    RunConfig cfg = assemble_config(flags);
    fs::path dir = resolve_out_dir(cfg, "residuals");
    write_resolved(cfg, dir);

    BuiltProblem built = build_problem(cfg);
    WorkerPool pool(cfg.workers);
    RunOptions opt = run_options(cfg);
    opt.pool = &pool;
    opt.cap_is_normal = true;

    if (cfg.n_steps % cfg.procs != 0)
        throw std::invalid_argument("residuals: n_steps must be a multiple of procs");
    ResidualTrace trace = residual_trace(*built.system, *built.hierarchy, built.y0, built.t0,
                                         cfg.dt, cfg.procs,
                                         static_cast<int>(cfg.n_steps / cfg.procs), opt);
    write_residuals_csv((dir / "residuals.csv").string(), trace, make_metadata(cfg, "residuals"));
    std::cout << "steps: " << trace.step_iters.size() << ", converged: " << trace.converged
              << "\n";
    return trace.converged ? kExitOk : kExitMaxIterations;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parallel-in-time hybrid spectral-deferred-correction integrator"};
    app.require_subcommand(1);

    FlagOverrides f_sim, f_stab, f_conv, f_iter, f_res;
    std::string li_range = "-1000:0:51", le_range = "-1000:0:51";
    std::string dts_conv, dts_iter, procs_iter = "1,2,4,8,16,32";

    CLI::App* sim = app.add_subcommand("simulate", "integrate a configured problem");
    add_common_flags(sim, f_sim);

    CLI::App* stab = app.add_subcommand("stability", "scan |R_P| over a (lambda_I, lambda_e) grid");
    add_common_flags(stab, f_stab);
    stab->add_option("--li-grid", li_range, "lambda_I grid lo:hi:n");
    stab->add_option("--le-grid", le_range, "lambda_e grid lo:hi:n");

    CLI::App* conv = app.add_subcommand("converge", "step-size convergence study");
    add_common_flags(conv, f_conv);
    conv->add_option("--dts", dts_conv, "comma-separated step sizes (dyadic ladder)")->required();

    CLI::App* iter = app.add_subcommand("iterations", "iteration statistics over (dt, P) cells");
    add_common_flags(iter, f_iter);
    iter->add_option("--dts", dts_iter, "comma-separated step sizes")->required();
    iter->add_option("--procs-list", procs_iter, "comma-separated processor counts");

    CLI::App* res = app.add_subcommand("residuals", "per-step residual traces");
    add_common_flags(res, f_res);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return run_simulate(f_sim);
        if (stab->parsed()) return run_stability(f_stab, li_range, le_range);
        if (conv->parsed()) return run_converge(f_conv, dts_conv);
        if (iter->parsed()) return run_iterations(f_iter, dts_iter, procs_iter);
        if (res->parsed()) return run_residuals(f_res);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FileFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const MaxIterationsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMaxIterations;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}
