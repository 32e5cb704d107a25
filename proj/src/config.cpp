#include "hsdc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hsdc {

namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "problem", "ionic", "rho", "mesh", "domain", "dt", "t_end", "n_steps", "nodes",
        "levels", "procs", "tol", "max_iters", "variant", "workers", "frozen_prefix", "seed",
        "out_dir", "initial_state", "snapshot_every", "lambda_I", "lambda_E", "lambda_e",
        "w_inf", "y0", "front_position", "front_width", "v_peak", "stim_amplitude",
        "stim_t_on", "stim_t_off", "stim_box"};
    return keys;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("config field '") + key + "' has the wrong type");
    }
}

RunConfig from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    for (const auto& item : j.items())
        if (known_keys().find(item.key()) == known_keys().end())
            throw std::invalid_argument("config: unknown key '" + item.key() + "'");

    RunConfig c;
    read_field(j, "problem", c.problem);
    read_field(j, "ionic", c.ionic);
    read_field(j, "rho", c.rho);
    read_field(j, "mesh", c.mesh);
    read_field(j, "domain", c.domain);
    read_field(j, "dt", c.dt);
    read_field(j, "t_end", c.t_end);
    read_field(j, "n_steps", c.n_steps);
    read_field(j, "nodes", c.nodes);
    read_field(j, "levels", c.levels);
    read_field(j, "procs", c.procs);
    read_field(j, "tol", c.tol);
    read_field(j, "max_iters", c.max_iters);
    read_field(j, "variant", c.variant);
    read_field(j, "workers", c.workers);
    read_field(j, "frozen_prefix", c.frozen_prefix);
    read_field(j, "seed", c.seed);
    read_field(j, "out_dir", c.out_dir);
    read_field(j, "initial_state", c.initial_state);
    read_field(j, "snapshot_every", c.snapshot_every);
    read_field(j, "lambda_I", c.lambda_I);
    read_field(j, "lambda_E", c.lambda_E);
    read_field(j, "lambda_e", c.lambda_e);
    read_field(j, "w_inf", c.w_inf);
    read_field(j, "y0", c.y0);
    read_field(j, "front_position", c.front_position);
    read_field(j, "front_width", c.front_width);
    read_field(j, "v_peak", c.v_peak);
    read_field(j, "stim_amplitude", c.stim_amplitude);
    read_field(j, "stim_t_on", c.stim_t_on);
    read_field(j, "stim_t_off", c.stim_t_off);
    read_field(j, "stim_box", c.stim_box);
    return c;
}

} // namespace

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: malformed JSON in '" + path + "': " + e.what());
    }
    return from_json(j);
}

RunConfig parse_config_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
    return from_json(j);
}

void validate_config(RunConfig& cfg) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };

    if (cfg.problem != "dahlquist" && cfg.problem != "linear_gating" &&
        cfg.problem != "monodomain_1d" && cfg.problem != "monodomain_2d")
        fail("problem must be one of dahlquist|linear_gating|monodomain_1d|monodomain_2d");
    if (cfg.ionic != "hh" && cfg.ionic != "synthetic") fail("ionic must be hh or synthetic");
    if (cfg.variant != "hsdc" && cfg.variant != "naive_sdc")
        fail("variant must be hsdc or naive_sdc");
    if (!(cfg.rho > 0.0)) fail("rho must be positive");
    if (!(cfg.dt > 0.0)) fail("dt must be positive");
    if (!(cfg.tol > 0.0)) fail("tol must be positive");
    if (cfg.max_iters < 1) fail("max_iters must be >= 1");
    if (cfg.procs < 1) fail("procs must be >= 1");
    if (cfg.workers < 0) fail("workers must be >= 0");
    if (cfg.nodes.empty()) fail("nodes must list at least one level");
    for (std::size_t l = 0; l < cfg.nodes.size(); ++l) {
        if (cfg.nodes[l] < 1) fail("nodes must be >= 1");
        if (l > 0 && cfg.nodes[l] >= cfg.nodes[l - 1]) fail("nodes must be strictly decreasing");
    }
    if (cfg.levels == 0) cfg.levels = static_cast<int>(cfg.nodes.size());
    if (cfg.levels != static_cast<int>(cfg.nodes.size()))
        fail("levels does not match the nodes list");

    const bool is_monodomain = cfg.problem.rfind("monodomain", 0) == 0;
    if (is_monodomain) {
        const std::size_t dims = (cfg.problem == "monodomain_2d") ? 2 : 1;
        if (cfg.mesh.size() != dims) fail("mesh must list one count per dimension");
        if (cfg.domain.size() != dims) fail("domain must list one length per dimension");
    }

    // t_end / n_steps consistency
    if (cfg.t_end < 0.0 && cfg.n_steps < 0) cfg.n_steps = cfg.procs; // one block by default
    if (cfg.n_steps >= 0 && cfg.t_end >= 0.0) {
        if (std::abs(cfg.t_end - cfg.n_steps * cfg.dt) > 1e-9 * std::max(1.0, cfg.t_end))
            fail("t_end is inconsistent with dt*n_steps");
    } else if (cfg.t_end >= 0.0) {
        const double raw = cfg.t_end / cfg.dt;
        cfg.n_steps = std::lround(raw);
        if (cfg.t_end > 0.0 &&
            (cfg.n_steps < 1 || std::abs(raw - cfg.n_steps) > 1e-9 * std::max(1.0, raw)))
            fail("t_end must be a positive multiple of dt");
    }
    if (cfg.t_end < 0.0) cfg.t_end = cfg.n_steps * cfg.dt;
    if (cfg.n_steps < 0) fail("n_steps must be >= 0");

    if (cfg.front_position >= 0.0 && is_monodomain &&
        cfg.front_position >= cfg.domain[0])
        fail("front_position must lie inside the domain");
    if (!cfg.stim_box.empty() && cfg.stim_box.size() != 2 && cfg.stim_box.size() != 4)
        fail("stim_box must hold [x0,x1] or [x0,x1,y0,y1]");
}

std::string resolved_json(const RunConfig& c) {
    json j;
    j["problem"] = c.problem;
    j["ionic"] = c.ionic;
    j["rho"] = c.rho;
    j["mesh"] = c.mesh;
    j["domain"] = c.domain;
    j["dt"] = c.dt;
    j["t_end"] = c.t_end;
    j["n_steps"] = c.n_steps;
    j["nodes"] = c.nodes;
    j["levels"] = c.levels;
    j["procs"] = c.procs;
    j["tol"] = c.tol;
    j["max_iters"] = c.max_iters;
    j["variant"] = c.variant;
    j["workers"] = c.workers;
    j["frozen_prefix"] = c.frozen_prefix;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["initial_state"] = c.initial_state;
    j["snapshot_every"] = c.snapshot_every;
    j["lambda_I"] = c.lambda_I;
    j["lambda_E"] = c.lambda_E;
    j["lambda_e"] = c.lambda_e;
    j["w_inf"] = c.w_inf;
    j["y0"] = c.y0;
    j["front_position"] = c.front_position;
    j["front_width"] = c.front_width;
    j["v_peak"] = std::isnan(c.v_peak) ? json() : json(c.v_peak);
    j["stim_amplitude"] = c.stim_amplitude;
    j["stim_t_on"] = c.stim_t_on;
    j["stim_t_off"] = c.stim_t_off;
    j["stim_box"] = c.stim_box;
    return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string s = resolved_json(cfg);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

BuiltProblem build_problem(const RunConfig& cfg) {
    BuiltProblem built;
    built.hierarchy = std::make_shared<LevelHierarchy>(cfg.nodes);

    if (cfg.problem == "dahlquist") {
        built.system = make_dahlquist(cfg.lambda_I, cfg.lambda_E, cfg.lambda_e, cfg.y0);
        built.y0 = built.system->initial_state();
        return built;
    }
    if (cfg.problem == "linear_gating") {
        built.system = make_linear_gating(cfg.lambda_e, cfg.w_inf, cfg.y0);
        built.y0 = built.system->initial_state();
        return built;
    }

    MonodomainParams p;
    p.dims = (cfg.problem == "monodomain_2d") ? 2 : 1;
    for (int d = 0; d < p.dims; ++d) {
        p.cells[d] = cfg.mesh[d];
        p.lengths[d] = cfg.domain[d];
    }
    p.ionic = (cfg.ionic == "hh") ? hh_model()
                                  : std::static_pointer_cast<const IonicModel>(
                                        synthetic_stiff_model(cfg.rho));
    p.v_peak = cfg.v_peak;
    if (cfg.stim_amplitude != 0.0 && !cfg.stim_box.empty()) {
        p.stimulus.enabled = true;
        p.stimulus.amplitude = cfg.stim_amplitude;
        p.stimulus.t_on = cfg.stim_t_on;
        p.stimulus.t_off = cfg.stim_t_off;
        p.stimulus.x_range = {cfg.stim_box[0], cfg.stim_box[1]};
        if (cfg.stim_box.size() == 4) p.stimulus.y_range = {cfg.stim_box[2], cfg.stim_box[3]};
    }
    auto tissue = std::make_shared<MonodomainProblem>(std::move(p));
    built.tissue = tissue;
    built.system = tissue;

    if (!cfg.initial_state.empty()) {
        auto [state, time] = load_state(cfg.initial_state, *tissue);
        built.y0 = std::move(state);
        built.t0 = time;
    } else {
        const double pos = (cfg.front_position >= 0.0) ? cfg.front_position
                                                       : 0.25 * cfg.domain[0];
        built.y0 = tissue->planar_front_initial_state(pos, cfg.front_width);
    }
    return built;
}

RunOptions run_options(const RunConfig& cfg) {
    RunOptions opt;
    opt.tol = cfg.tol;
    opt.max_iters = cfg.max_iters;
    opt.variant = (cfg.variant == "hsdc") ? Variant::hsdc : Variant::naive_sdc;
    opt.frozen_prefix = cfg.frozen_prefix;
    return opt;
}

} // namespace hsdc
