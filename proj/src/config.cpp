#include "ergo/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ergo {

const std::vector<std::string> kExperimentNames = {
    "noise_selftest", "kernel",  "gradient", "irreducibility",
    "coupling",       "harris",  "mixing"};

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError(path + ": " + msg);
}

const json& at(const json& j, const std::string& path, const std::string& key) {
    if (!j.contains(key)) fail(path + "." + key, "missing");
    return j.at(key);
}

double num(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

double pos_num(const json& j, const std::string& path) {
    const double v = num(j, path);
    if (!(v > 0.0)) fail(path, "must be positive");
    return v;
}

std::size_t pos_int(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() <= 0)
        fail(path, "must be a positive integer");
    return static_cast<std::size_t>(j.get<long long>());
}

std::string str(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

std::vector<double> num_array(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) fail(path, "expected a nonempty array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

// Fills missing keys of j from defaults (one level deep per call).
void merge_defaults(json& j, const json& defaults) {
    for (auto it = defaults.begin(); it != defaults.end(); ++it) {
        if (!j.contains(it.key())) {
            j[it.key()] = it.value();
        } else if (it.value().is_object() && j[it.key()].is_object()) {
            merge_defaults(j[it.key()], it.value());
        }
    }
}

// Horizon defaults snap to the step grid; never below one step.
double snap(double t, double dt) {
    const double k = std::max(1.0, std::round(t / dt));
    return k * dt;
}

DriftSpec build_drift(const json& d, std::size_t dim, const std::string& path) {
    const std::string family = str(at(d, path, "family"), path + ".family");
    if (family == "zero") return DriftSpec::zero(dim);
    if (family == "constant") {
        const auto vals = num_array(at(d, path, "value"), path + ".value");
        if (vals.size() != dim) fail(path + ".value", "length must match the model dimension");
        State c(static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < dim; ++i) c[static_cast<Eigen::Index>(i)] = vals[i];
        return DriftSpec::constant(std::move(c));
    }
    const double s = num(at(d, path, "sup_norm"), path + ".sup_norm");
    if (!(s >= 0.0)) fail(path + ".sup_norm", "must be nonnegative");
    if (family == "tanh") return DriftSpec::tanh_family(dim, s);
    if (family == "signed_power") {
        const double eta = num(at(d, path, "holder_exponent"), path + ".holder_exponent");
        try {
            return DriftSpec::signed_power_family(dim, s, eta);
        } catch (const std::invalid_argument& e) {
            fail(path + ".holder_exponent", e.what());
        }
    }
    fail(path + ".family", "unknown drift family '" + family + "'");
}

ModelSpec build_model(json& m) {
    const std::string kind = str(at(m, "model", "kind"), "model.kind");
    if (kind != "galerkin" && kind != "finite")
        fail("model.kind", "must be 'galerkin' or 'finite'");

    double alpha_val = num(at(m, "model", "alpha"), "model.alpha");
    std::optional<StableIndex> alpha;
    try {
        alpha.emplace(alpha_val);
    } catch (const std::invalid_argument& e) {
        fail("model.alpha", e.what());
    }
    const double dt = pos_num(at(m, "model", "dt"), "model.dt");

    if (kind == "galerkin") {
        if (!m.contains("scheme")) m["scheme"] = "exponential_euler";
        const std::string scheme_s = str(m.at("scheme"), "model.scheme");
        Scheme scheme;
        if (scheme_s == "exponential_euler") scheme = Scheme::exponential_euler;
        else if (scheme_s == "euler") scheme = Scheme::euler;
        else fail("model.scheme", "must be 'exponential_euler' or 'euler'");

        json& g = m["galerkin"];
        const auto d_raw = at(g, "model.galerkin", "d");
        if (!d_raw.is_number_integer()) fail("model.galerkin.d", "must be an integer");
        const int d = d_raw.get<int>();
        const double theta = num(at(g, "model.galerkin", "theta"), "model.galerkin.theta");
        const double eps = num(at(g, "model.galerkin", "eps"), "model.galerkin.eps");
        const std::size_t K = pos_int(at(g, "model.galerkin", "modes"), "model.galerkin.modes");
        try {
            DiagonalGenerator gen = heat_example_config(d, *alpha, theta, eps, K);
            DriftSpec drift = build_drift(at(m, "model", "drift"), K, "model.drift");
            return ModelSpec::galerkin(std::move(gen), std::move(drift), scheme, dt);
        } catch (const std::invalid_argument& e) {
            fail("model.galerkin", e.what());
        }
    }

    if (!m.contains("scheme")) m["scheme"] = "euler";
    if (str(m.at("scheme"), "model.scheme") != "euler")
        fail("model.scheme", "exponential_euler requires the diagonal generator");
    json& f = m["finite"];
    const json& mat = at(f, "model.finite", "matrix");
    if (!mat.is_array() || mat.empty()) fail("model.finite.matrix", "expected a square matrix");
    const std::size_t n = mat.size();
    Eigen::MatrixXd A(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = num_array(mat.at(r), "model.finite.matrix");
        if (row.size() != n) fail("model.finite.matrix", "expected a square matrix");
        for (std::size_t c = 0; c < n; ++c)
            A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    const json& atoms_j = at(f, "model.finite", "atoms");
    if (!atoms_j.is_array() || atoms_j.empty())
        fail("model.finite.atoms", "expected a nonempty array");
    std::vector<SpectralMeasure::Atom> atoms;
    for (const auto& a : atoms_j) {
        SpectralMeasure::Atom atom;
        atom.direction = num_array(at(a, "model.finite.atoms", "direction"),
                                   "model.finite.atoms.direction");
        atom.weight = num(at(a, "model.finite.atoms", "weight"),
                          "model.finite.atoms.weight");
        atoms.push_back(std::move(atom));
    }
    try {
        MatrixGenerator gen(std::move(A));
        SpectralMeasure noise(n, std::move(atoms));
        DriftSpec drift = build_drift(at(m, "model", "drift"), n, "model.drift");
        return ModelSpec::finite(std::move(gen), std::move(noise), *alpha,
                                 std::move(drift), dt);
    } catch (const std::invalid_argument& e) {
        fail("model.finite", e.what());
    }
}

json experiment_defaults(const std::string& name, const ModelSpec& model,
                         double slowest) {
    const double dt = model.dt();
    if (name == "noise_selftest")
        return {{"alphas", {0.8, 1.2, 1.5, 1.9}},
                {"lambdas", {0.5, 1.0, 2.0}},
                {"samples", 100000}};
    if (name == "kernel")
        return {{"x_scales", 0.0},
                {"T", snap(1.0 / slowest, dt)},
                {"samples", 20000}};
    if (name == "gradient") {
        json times = json::array();
        for (double k : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
            const double t = snap(k / (10.0 * slowest), dt);
            if (times.empty() || times.back().get<double>() < t) times.push_back(t);
        }
        return {{"x_scales", 0.0},
                {"offset_scales", 0.2},
                {"wave_scales", 1.0},
                {"times", times},
                {"samples", 20000}};
    }
    if (name == "irreducibility")
        return {{"center_scales", 5.0},
                {"radius_scales", 1.0},
                {"T", snap(3.0 / slowest, dt)},
                {"samples", 100000}};
    if (name == "coupling")
        return {{"x1_scales", 6.0},
                {"x2_scales", -6.0},
                {"T", snap(0.5 / slowest, dt)},
                {"r0_scales", 3.0},
                {"M_scales", 6.0},
                {"n_runs", 1000},
                {"max_steps", 40},
                {"n_kernel", 2000},
                {"calibration_pairs", 8}};
    if (name == "harris") {
        const double p = model.alpha() / 2.0;
        return {{"p", p},
                {"T0", snap(2.0 * std::log(2.0) / (p * slowest), dt)},
                {"probe_count", 8},
                {"probe_lo_scales", 0.5},
                {"probe_hi_scales", 32.0},
                {"samples", 10000},
                {"levels_scales", {2.0, 4.0}},
                {"pairs", 12},
                {"kernel_samples", 8000}};
    }
    if (name == "mixing") {
        const double step = snap(0.5 / slowest, dt);
        json times = json::array();
        for (int k = 1; k <= 10; ++k) times.push_back(step * k);
        return {{"x1_scales", 3.0},
                {"x2_scales", -3.0},
                {"times", times},
                {"samples", 20000}};
    }
    fail("experiment", "unknown experiment '" + name + "'");
}

void validate_experiment_block(const std::string& name, const json& b,
                               const ModelSpec& model) {
    const std::string p = name;
    auto check_T = [&](const std::string& key) {
        const double t = pos_num(at(b, p, key), p + "." + key);
        try {
            steps_for(t, model.dt());
        } catch (const std::invalid_argument& e) {
            fail(p + "." + key, e.what());
        }
    };
    if (name == "noise_selftest") {
        for (double a : num_array(at(b, p, "alphas"), p + ".alphas"))
            if (!(a > 0.0 && a < 2.0)) fail(p + ".alphas", "index out of range");
        num_array(at(b, p, "lambdas"), p + ".lambdas");
        pos_int(at(b, p, "samples"), p + ".samples");
    } else if (name == "kernel") {
        num(at(b, p, "x_scales"), p + ".x_scales");
        check_T("T");
        pos_int(at(b, p, "samples"), p + ".samples");
    } else if (name == "gradient") {
        num(at(b, p, "x_scales"), p + ".x_scales");
        if (!(std::abs(num(at(b, p, "offset_scales"), p + ".offset_scales")) > 0.0))
            fail(p + ".offset_scales", "must be nonzero");
        pos_num(at(b, p, "wave_scales"), p + ".wave_scales");
        const auto ts = num_array(at(b, p, "times"), p + ".times");
        for (double t : ts) {
            if (!(t > 0.0)) fail(p + ".times", "must be positive");
            try {
                steps_for(t, model.dt());
            } catch (const std::invalid_argument& e) {
                fail(p + ".times", e.what());
            }
        }
        pos_int(at(b, p, "samples"), p + ".samples");
    } else if (name == "irreducibility") {
        num(at(b, p, "center_scales"), p + ".center_scales");
        pos_num(at(b, p, "radius_scales"), p + ".radius_scales");
        check_T("T");
        pos_int(at(b, p, "samples"), p + ".samples");
    } else if (name == "coupling") {
        num(at(b, p, "x1_scales"), p + ".x1_scales");
        num(at(b, p, "x2_scales"), p + ".x2_scales");
        check_T("T");
        if (b.contains("r")) pos_num(b.at("r"), p + ".r");
        pos_num(at(b, p, "r0_scales"), p + ".r0_scales");
        pos_num(at(b, p, "M_scales"), p + ".M_scales");
        pos_int(at(b, p, "n_runs"), p + ".n_runs");
        pos_int(at(b, p, "max_steps"), p + ".max_steps");
        pos_int(at(b, p, "n_kernel"), p + ".n_kernel");
        pos_int(at(b, p, "calibration_pairs"), p + ".calibration_pairs");
    } else if (name == "harris") {
        const double pp = pos_num(at(b, p, "p"), p + ".p");
        if (pp >= model.alpha()) fail(p + ".p", "moment may be infinite");
        check_T("T0");
        pos_int(at(b, p, "probe_count"), p + ".probe_count");
        const double lo = pos_num(at(b, p, "probe_lo_scales"), p + ".probe_lo_scales");
        const double hi = pos_num(at(b, p, "probe_hi_scales"), p + ".probe_hi_scales");
        if (!(hi > lo)) fail(p + ".probe_hi_scales", "must exceed probe_lo_scales");
        pos_int(at(b, p, "samples"), p + ".samples");
        for (double l : num_array(at(b, p, "levels_scales"), p + ".levels_scales"))
            if (!(l > 0.0)) fail(p + ".levels_scales", "must be positive");
        pos_int(at(b, p, "pairs"), p + ".pairs");
        pos_int(at(b, p, "kernel_samples"), p + ".kernel_samples");
    } else if (name == "mixing") {
        num(at(b, p, "x1_scales"), p + ".x1_scales");
        num(at(b, p, "x2_scales"), p + ".x2_scales");
        const auto ts = num_array(at(b, p, "times"), p + ".times");
        for (std::size_t i = 0; i < ts.size(); ++i) {
            if (!(ts[i] > 0.0)) fail(p + ".times", "must be positive");
            if (i > 0 && ts[i] <= ts[i - 1]) fail(p + ".times", "must increase");
            try {
                steps_for(ts[i], model.dt());
            } catch (const std::invalid_argument& e) {
                fail(p + ".times", e.what());
            }
        }
        pos_int(at(b, p, "samples"), p + ".samples");
    }
}

} // namespace

ExperimentConfig load_config_json(json j, const CliOverrides& ov) {
    if (j.is_null()) j = json::object();
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");

    json model_defaults = {
        {"kind", "galerkin"},
        {"alpha", 1.5},
        {"dt", 0.01},
        {"galerkin", {{"d", 1}, {"theta", 0.5}, {"eps", 0.1}, {"modes", 64}}},
        {"drift", {{"family", "tanh"}, {"sup_norm", 1.0}}},
    };
    json defaults = {
        {"model", model_defaults},
        {"grid", {{"bins", 64}, {"half_width_scales", 8.0}, {"dims", 2}}},
        {"run", {{"seed", 1}, {"workers", 1}, {"out", "ergo_out"}}},
    };
    merge_defaults(j, defaults);

    if (ov.experiment) j["experiment"] = *ov.experiment;
    if (ov.seed) j["run"]["seed"] = *ov.seed;
    if (ov.out_dir) j["run"]["out"] = *ov.out_dir;
    if (ov.workers) j["run"]["workers"] = *ov.workers;

    if (!j.contains("experiment")) fail("experiment", "missing");
    const std::string experiment = str(j.at("experiment"), "experiment");
    if (std::find(kExperimentNames.begin(), kExperimentNames.end(), experiment) ==
        kExperimentNames.end())
        fail("experiment", "unknown experiment '" + experiment + "'");

    ModelSpec model = build_model(j["model"]);

    const double scale = model.state_scale();
    const double slowest = model.is_diagonal()
                               ? model.diagonal().gammas()[0]
                               : model.matrix_part().slowest_rate();

    // Grid: box of half_width_scales stationary scales on the first
    // min(dims, model dim) coordinates.
    json& gj = j["grid"];
    const std::size_t bins = pos_int(at(gj, "grid", "bins"), "grid.bins");
    const double hws = pos_num(at(gj, "grid", "half_width_scales"), "grid.half_width_scales");
    std::size_t dims = pos_int(at(gj, "grid", "dims"), "grid.dims");
    if (dims > 3) fail("grid.dims", "at most 3 coordinates can be binned");
    dims = std::min<std::size_t>(dims, model.dim());
    gj["dims"] = dims;
    Grid grid = Grid::centered(dims, hws * scale, bins);

    json& rj = j["run"];
    if (!rj.at("seed").is_number_integer() || rj.at("seed").get<long long>() < 0)
        fail("run.seed", "must be a nonnegative integer");
    const auto seed = rj.at("seed").get<std::uint64_t>();
    const auto workers = static_cast<unsigned>(pos_int(at(rj, "run", "workers"), "run.workers"));
    const std::string out_dir = str(at(rj, "run", "out"), "run.out");
    if (out_dir.empty()) fail("run.out", "must not be empty");

    json& block = j[experiment];
    if (block.is_null()) block = json::object();
    if (!block.is_object()) fail(experiment, "expected an object");
    merge_defaults(block, experiment_defaults(experiment, model, slowest));
    validate_experiment_block(experiment, block, model);

    // Derived read-only quantities, echoed for the record.
    json derived = {{"state_scale", scale},
                    {"slowest_rate", slowest},
                    {"dimension", model.dim()}};
    if (model.is_diagonal()) {
        const auto& gen = model.diagonal();
        derived["gamma_1"] = gen.gammas()[0];
        derived["admissibility_sum"] = gen.admissibility_sum();
        if (gen.series_convergent())
            derived["series_convergent"] = *gen.series_convergent();
        derived["amplitude_floor_constant"] = gen.amplitude_floor_constant();
    }
    j["derived"] = derived;

    ExperimentConfig cfg(std::move(model), std::move(grid));
    cfg.experiment = experiment;
    cfg.seed = seed;
    cfg.workers = workers;
    cfg.out_dir = out_dir;
    cfg.state_scale = scale;
    cfg.slowest_rate = slowest;
    cfg.effective = std::move(j);
    return cfg;
}

ExperimentConfig load_config(const std::string& path, const CliOverrides& ov) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return load_config_json(std::move(j), ov);
}

} // namespace ergo
