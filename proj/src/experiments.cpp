#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "ergo/config.hpp"

namespace ergo {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Tracks emitted files so a failed run can remove its partial outputs.
struct Emitter {
    fs::path dir;
    std::vector<std::string> names;

    explicit Emitter(const std::string& out_dir) : dir(out_dir) {
        fs::create_directories(dir);
    }
    std::string path(const std::string& name) {
        names.push_back(name);
        return (dir / name).string();
    }
    void discard() {
        for (const auto& n : names) {
            std::error_code ec;
            fs::remove(dir / n, ec);
        }
    }
};

State axis_point(const ExperimentConfig& cfg, double scales) {
    State x = State::Zero(static_cast<Eigen::Index>(cfg.model.dim()));
    x[0] = scales * cfg.state_scale;
    return x;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

json fit_to_json(const ExpMomentFit& f) {
    return {{"eta_hat", f.eta_hat},
            {"c_hat", f.c_hat},
            {"r_squared", f.r_squared},
            {"exp_moment_half", f.exp_moment_half},
            {"n_finite", f.n_finite},
            {"n_censored", f.n_censored},
            {"degenerate", f.degenerate}};
}

std::string run_noise_selftest(const ExperimentConfig& cfg, Emitter& em) {
    const auto& b = cfg.block();
    const auto alphas = b.at("alphas").get<std::vector<double>>();
    const auto lambdas = b.at("lambdas").get<std::vector<double>>();
    const auto n = b.at("samples").get<std::size_t>();

    std::ofstream csv(em.path("noise_cf.csv"));
    csv << "alpha,lambda,empirical_cf,analytic_cf,se,empirical_sin\n";
    double max_err = 0.0;
    std::uint64_t resamples = 0;
    const double tol = 3.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        const StableIndex alpha(alphas[ai]);
        std::vector<double> draws(n);
        std::vector<std::uint64_t> res(n, 0);
        const std::uint64_t root = derive_root(cfg.seed, ai);
        parallel_for(n, cfg.workers, [&](std::size_t i) {
            RngStream s = stream_at(root, i);
            draws[i] = sample_standard_stable(alpha, s);
            res[i] = s.resamples;
        });
        for (auto r : res) resamples += r;
        for (const double lam : lambdas) {
            std::vector<double> cosv(n), sinv(n);
            for (std::size_t i = 0; i < n; ++i) {
                cosv[i] = std::cos(lam * draws[i]);
                sinv[i] = std::sin(lam * draws[i]);
            }
            const MeanSE mc = mean_se(cosv), ms = mean_se(sinv);
            const double analytic = std::exp(-std::pow(std::abs(lam), alpha.alpha));
            max_err = std::max(max_err, std::abs(mc.mean - analytic));
            csv << format_double(alpha.alpha) << "," << format_double(lam) << ","
                << format_double(mc.mean) << "," << format_double(analytic) << ","
                << format_double(mc.se) << "," << format_double(ms.mean) << "\n";
        }
    }
    csv.close();
    const bool pass = max_err <= tol;
    write_json_file(em.path("noise_selftest.json"),
                    {{"max_abs_error", max_err},
                     {"tolerance", tol},
                     {"samples", n},
                     {"resamples", resamples},
                     {"pass", pass}});
    return "noise selftest: max |cf error| = " + format_double(max_err) +
           (pass ? " within " : " EXCEEDS ") + format_double(tol);
}

std::string run_kernel(const ExperimentConfig& cfg, Emitter& em) {
    const auto& b = cfg.block();
    const EmpiricalKernel k = estimate_kernel(
        cfg.model, axis_point(cfg, b.at("x_scales").get<double>()),
        b.at("T").get<double>(), b.at("samples").get<std::size_t>(), cfg.grid,
        derive_root(cfg.seed, 1), cfg.workers);
    write_kernel_json(em.path("kernel.json"), k);
    return "kernel: " + std::to_string(k.sample_count) + " endpoint draws binned on " +
           std::to_string(k.grid.cells()) + " cells";
}

std::string run_gradient(const ExperimentConfig& cfg, Emitter& em) {
    const auto& b = cfg.block();
    const State x = axis_point(cfg, b.at("x_scales").get<double>());
    State y = x;
    y[0] += b.at("offset_scales").get<double>() * cfg.state_scale;
    const double wave = 1.0 / (b.at("wave_scales").get<double>() * cfg.state_scale);
    auto f = [wave](const State& s) { return std::cos(wave * s[0]); };
    const auto times = b.at("times").get<std::vector<double>>();
    const auto scan =
        gradient_scan(cfg.model, f, x, y, times, b.at("samples").get<std::size_t>(),
                      derive_root(cfg.seed, 1), cfg.workers);

    std::ofstream csv(em.path("gradient.csv"));
    csv << "T,ratio,se,reliable\n";
    std::vector<double> lt, lr;
    for (const auto& g : scan) {
        csv << format_double(g.horizon) << "," << format_double(g.ratio) << ","
            << format_double(g.se) << "," << (g.reliable ? 1 : 0) << "\n";
        if (g.reliable && g.ratio > 0.0) {
            lt.push_back(std::log(g.horizon));
            lr.push_back(std::log(g.ratio));
        }
    }
    csv.close();
    const LinearFit fit = linear_fit(lt, lr);
    write_json_file(em.path("gradient.json"),
                    {{"slope", fit.slope},
                     {"se_slope", fit.se_slope},
                     {"r_squared", fit.r_squared},
                     {"points_used", lt.size()},
                     {"reference_slope", -1.0 / cfg.model.alpha()}});
    return "gradient: log-log slope " + format_double(fit.slope) +
           " (reference " + format_double(-1.0 / cfg.model.alpha()) + ")";
}

std::string run_irreducibility(const ExperimentConfig& cfg, Emitter& em) {
    const auto& b = cfg.block();
    const double radius = b.at("radius_scales").get<double>() * cfg.state_scale;
    const HitFrequency h = irreducibility_probe(
        cfg.model, State::Zero(static_cast<Eigen::Index>(cfg.model.dim())),
        b.at("T").get<double>(),
        axis_point(cfg, b.at("center_scales").get<double>()), radius,
        b.at("samples").get<std::size_t>(), derive_root(cfg.seed, 1), cfg.workers);
    write_json_file(em.path("irreducibility.json"),
                    {{"hits", h.hits},
                     {"samples", h.n},
                     {"frequency", h.frequency},
                     {"wilson_lower", h.wilson_lower},
                     {"wilson_upper", h.wilson_upper},
                     {"T", b.at("T").get<double>()},
                     {"radius", radius}});
    return "irreducibility: " + std::to_string(h.hits) + "/" + std::to_string(h.n) +
           " hits, Wilson lower bound " + format_double(h.wilson_lower);
}

std::string run_coupling(const ExperimentConfig& cfg, Emitter& em) {
    const auto& b = cfg.block();
    CouplingConfig cc(cfg.grid);
    cc.T = b.at("T").get<double>();
    cc.M = b.at("M_scales").get<double>() * cfg.state_scale;
    cc.eps = cfg.model.is_diagonal() ? cfg.model.diagonal().eps() : 0.0;
    cc.n_kernel = b.at("n_kernel").get<std::size_t>();
    cc.max_steps = b.at("max_steps").get<std::size_t>();
    const auto pairs = b.at("calibration_pairs").get<std::size_t>();

    json calibration;
    if (b.contains("r")) {
        cc.r = b.at("r").get<double>();
        const ProximityCheck chk =
            check_proximity_ball(cfg.model, cc, pairs, derive_root(cfg.seed, 7));
        calibration = {{"r", cc.r},
                       {"trace", {{{"r", chk.r}, {"max_tv", chk.max_tv}, {"ok", chk.ok}}}}};
        if (!chk.ok)
            throw ConfigError("coupling.r: measured kernel TV " +
                              format_double(chk.max_tv) +
                              " exceeds 1/2; omit r to auto-calibrate");
    } else {
        const RCalibration cal =
            calibrate_r(cfg.model, cc, b.at("r0_scales").get<double>() * cfg.state_scale,
                        pairs, derive_root(cfg.seed, 7));
        cc.r = cal.r;
        json trace = json::array();
        for (const auto& c : cal.trace)
            trace.push_back({{"r", c.r}, {"max_tv", c.max_tv}, {"ok", c.ok}});
        calibration = {{"r", cal.r}, {"trace", trace}};
    }
    write_json_file(em.path("calibration.json"), calibration);

    const auto runs = run_coupled_ensemble(
        cfg.model, cc, axis_point(cfg, b.at("x1_scales").get<double>()),
        axis_point(cfg, b.at("x2_scales").get<double>()),
        b.at("n_runs").get<std::size_t>(), derive_root(cfg.seed, 8), cfg.workers);
    write_runs_jsonl(em.path("runs.jsonl"), runs, cc);

    std::vector<std::ptrdiff_t> tau_eps, rho;
    for (const auto& r : runs) {
        tau_eps.push_back(r.tau_eps);
        rho.push_back(r.rho);
    }
    const ExpMomentFit fe = exp_moment_fit(tau_eps, cc.T, cc.max_steps);
    const ExpMomentFit fr = exp_moment_fit(rho, cc.T, cc.max_steps);
    write_json_file(em.path("hitting.json"),
                    {{"tau_eps", fit_to_json(fe)}, {"rho", fit_to_json(fr)}});
    return "coupling: r = " + format_double(cc.r) + ", coalescence rate " +
           format_double(fr.eta_hat) + " per unit time";
}

std::string run_harris(const ExperimentConfig& cfg, Emitter& em, int& exit_code) {
    const auto& b = cfg.block();
    const double p = b.at("p").get<double>();
    const auto count = b.at("probe_count").get<std::size_t>();
    const double lo = b.at("probe_lo_scales").get<double>() * cfg.state_scale;
    const double hi = b.at("probe_hi_scales").get<double>() * cfg.state_scale;
    std::vector<State> probes;
    for (std::size_t i = 0; i < count; ++i) {
        const double frac = count == 1 ? 0.0
                                       : static_cast<double>(i) /
                                             static_cast<double>(count - 1);
        State pt = State::Zero(static_cast<Eigen::Index>(cfg.model.dim()));
        pt[0] = lo * std::pow(hi / lo, frac);
        probes.push_back(std::move(pt));
    }
    std::vector<double> levels;
    for (double ls : b.at("levels_scales").get<std::vector<double>>())
        levels.push_back(2.0 * std::pow(ls * cfg.state_scale, p));

    const HarrisReport rep = harris_certify(
        cfg.model, p, b.at("T0").get<double>(), probes,
        b.at("samples").get<std::size_t>(), levels,
        b.at("pairs").get<std::size_t>(), b.at("kernel_samples").get<std::size_t>(),
        cfg.grid, derive_root(cfg.seed, 1), cfg.workers);
    write_harris_json(em.path("harris.json"), rep);
    if (rep.verdict == "inconclusive") exit_code = 4;
    return "harris: " + rep.verdict + " (gamma_hat = " +
           format_double(rep.lyapunov.gamma_hat) + ")";
}

std::string run_mixing(const ExperimentConfig& cfg, Emitter& em) {
    const auto& b = cfg.block();
    const State x1 = axis_point(cfg, b.at("x1_scales").get<double>());
    const State x2 = axis_point(cfg, b.at("x2_scales").get<double>());
    const MixingFit fit = mixing_fit(
        cfg.model, [&](RngStream&) { return x1; }, [&](RngStream&) { return x2; },
        b.at("times").get<std::vector<double>>(),
        b.at("samples").get<std::size_t>(), cfg.grid, derive_root(cfg.seed, 1),
        cfg.workers);
    write_mixing_csv(em.path("mixing_curve.csv"), fit);
    write_mixing_json(em.path("mixing_fit.json"), fit);
    if (!fit.ok) return "mixing: " + fit.note;
    return "mixing: rate " + format_double(fit.c_hat) + ", R^2 " +
           format_double(fit.r_squared);
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    Emitter em(cfg.out_dir);
    RunResult result;
    const std::string started = iso_utc_now();
    try {
        if (cfg.experiment == "noise_selftest")
            result.summary = run_noise_selftest(cfg, em);
        else if (cfg.experiment == "kernel")
            result.summary = run_kernel(cfg, em);
        else if (cfg.experiment == "gradient")
            result.summary = run_gradient(cfg, em);
        else if (cfg.experiment == "irreducibility")
            result.summary = run_irreducibility(cfg, em);
        else if (cfg.experiment == "coupling")
            result.summary = run_coupling(cfg, em);
        else if (cfg.experiment == "harris")
            result.summary = run_harris(cfg, em, result.exit_code);
        else if (cfg.experiment == "mixing")
            result.summary = run_mixing(cfg, em);
        else
            throw ConfigError("experiment: unknown experiment '" + cfg.experiment + "'");
    } catch (...) {
        em.discard();
        throw;
    }

    json manifest;
    manifest["schema"] = "ergo.manifest.v1";
    manifest["code_version"] = kCodeVersion;
    manifest["experiment"] = cfg.experiment;
    manifest["seed"] = cfg.seed;
    manifest["workers"] = cfg.workers;
    manifest["out_dir"] = cfg.out_dir;
    manifest["started"] = started;
    manifest["finished"] = iso_utc_now();
    manifest["exit_code"] = result.exit_code;
    manifest["config"] = cfg.effective;
    json files = json::array();
    std::vector<std::string> names = em.names;
    std::sort(names.begin(), names.end());
    for (const auto& n : names) {
        const auto full = (std::filesystem::path(cfg.out_dir) / n).string();
        files.push_back({{"name", n},
                         {"bytes", std::filesystem::file_size(full)},
                         {"fnv1a64", hex64(fnv1a64_file(full))}});
        result.files.push_back(n);
    }
    manifest["files"] = files;
    write_json_file((std::filesystem::path(cfg.out_dir) / "manifest.json").string(),
                    manifest);
    result.files.push_back("manifest.json");
    result.manifest = std::move(manifest);
    return result;
}

} // namespace ergo
