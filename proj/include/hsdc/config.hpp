#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "hsdc/monodomain.hpp"
#include "hsdc/pfasst.hpp"
#include "hsdc/split_system.hpp"

namespace hsdc {

/// Flat run configuration shared by every subcommand. Defaults follow the
/// documented schema; validate() fills derived fields and rejects
/// inconsistent combinations with diagnostics naming the offending field.
struct RunConfig {
    std::string problem = "dahlquist"; ///< dahlquist | linear_gating | monodomain_1d | monodomain_2d
    std::string ionic = "hh";          ///< hh | synthetic
    double rho = 1000.0;               ///< synthetic-model stiffness target

    std::vector<int> mesh = {160};
    std::vector<double> domain = {64.0}; ///< mm

    double dt = 0.1;     ///< ms
    double t_end = -1.0; ///< ms; derived from n_steps when unset
    long n_steps = -1;   ///< derived from t_end when unset

    std::vector<int> nodes = {6, 3}; ///< collocation nodes per level, decreasing
    int levels = 0;                  ///< 0: derived from nodes
    int procs = 1;
    double tol = 5e-8;
    int max_iters = 100;
    std::string variant = "hsdc"; ///< hsdc | naive_sdc
    int workers = 0;              ///< 0: logical emulation mode
    bool frozen_prefix = false;
    long seed = 0; ///< reserved; core math never consumes randomness

    std::string out_dir;
    std::string initial_state; ///< optional state file to start from
    int snapshot_every = 0;    ///< state snapshot cadence in blocks (0: final only)

    // scalar test problems
    double lambda_I = -1.0, lambda_E = 0.0, lambda_e = 0.0;
    double w_inf = 0.0;
    double y0 = 1.0;

    // monodomain extras
    double front_position = -1.0; ///< mm; <0 means lengths[0]/4
    double front_width = 1.5;     ///< mm
    double v_peak = std::numeric_limits<double>::quiet_NaN();
    double stim_amplitude = 0.0;
    double stim_t_on = 0.0, stim_t_off = 0.0;
    std::vector<double> stim_box; ///< [x0,x1] or [x0,x1,y0,y1]
};

/// Parse a JSON config file; unknown keys are rejected. The result is not
/// yet validated (flags may still override fields).
RunConfig parse_config_file(const std::string& path);

/// Parse a JSON string (same schema and strictness as the file form).
RunConfig parse_config_string(const std::string& text);

/// Validate and fill derived fields (t_end/n_steps, levels). Throws
/// std::invalid_argument with the field name on any violation.
void validate_config(RunConfig& cfg);

/// Canonical resolved-config JSON (sorted keys) for exact replay.
std::string resolved_json(const RunConfig& cfg);

/// FNV-1a hash of the resolved config, hex-encoded.
std::string config_hash(const RunConfig& cfg);

/// Everything needed to run a configured problem.
struct BuiltProblem {
    std::shared_ptr<SplitSystem> system;
    std::shared_ptr<MonodomainProblem> tissue; ///< null for scalar problems
    std::shared_ptr<LevelHierarchy> hierarchy;
    State y0;
    double t0 = 0.0;
};

/// Instantiate the configured system, hierarchy and initial state.
BuiltProblem build_problem(const RunConfig& cfg);

/// RunOptions matching the config (tol, cap, variant, frozen prefix).
RunOptions run_options(const RunConfig& cfg);

} // namespace hsdc
