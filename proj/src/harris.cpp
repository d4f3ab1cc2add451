#include "ergo/harris.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ergo {

LyapunovCheck lyapunov_check(const ModelSpec& model, double p, double T0,
                             const std::vector<State>& probes, std::size_t n,
                             std::uint64_t root, unsigned workers) {
    if (!(p > 0.0)) throw std::invalid_argument("lyapunov_check: p must be positive");
    if (T0 < 0.0) throw std::invalid_argument("lyapunov_check: T0 must be nonnegative");
    if (probes.size() < 2)
        throw std::invalid_argument("lyapunov_check: need at least two probes");

    LyapunovCheck out;
    out.p = p;
    out.T0 = T0;
    for (const auto& x : probes) out.vx.push_back(std::pow(x.norm(), p));
    const double vmin = *std::min_element(out.vx.begin(), out.vx.end());
    const double vmax = *std::max_element(out.vx.begin(), out.vx.end());
    if (!(vmin > 0.0) || vmax / vmin < 10.0)
        throw std::invalid_argument("lyapunov_check: probe spread too small");

    for (std::size_t j = 0; j < probes.size(); ++j) {
        if (T0 == 0.0) {
            out.m_hat.push_back(out.vx[j]);
            out.se.push_back(0.0);
            continue;
        }
        std::vector<double> vals(n);
        const std::uint64_t probe_root = derive_root(root, j);
        parallel_for(n, workers, [&](std::size_t i) {
            RngStream s = stream_at(probe_root, i);
            vals[i] = std::pow(evolve(model, probes[j], T0, s).norm(), p);
        });
        const MeanSE m = mean_se(vals);
        out.m_hat.push_back(m.mean);
        out.se.push_back(m.se);
    }
    const LinearFit fit = linear_fit(out.vx, out.m_hat);
    out.gamma_hat = fit.slope;
    out.K_hat = fit.intercept;
    out.se_gamma = fit.se_slope;
    out.se_K = fit.se_intercept;
    out.contraction = out.gamma_hat + 3.0 * out.se_gamma < 1.0;
    return out;
}

namespace {

// Probe pair on the level set V(x)+V(y) <= R, with directions supported on
// the first three coordinates (where the default grids resolve mass).
std::pair<State, State> level_set_pair(double R, double p, std::size_t dim,
                                       RngStream& rng) {
    const auto span = static_cast<Eigen::Index>(std::min<std::size_t>(dim, 3));
    auto direction = [&]() {
        State u = State::Zero(static_cast<Eigen::Index>(dim));
        double n2 = 0.0;
        do {
            for (Eigen::Index c = 0; c < span; ++c) u[c] = 2.0 * rng.uniform() - 1.0;
            n2 = u.squaredNorm();
        } while (n2 < 1e-12 || n2 > 1.0);
        return State(u / std::sqrt(n2));
    };
    const double w1 = rng.uniform() * R;
    const double w2 = rng.uniform() * (R - w1);
    return {std::pow(w1, 1.0 / p) * direction(), std::pow(w2, 1.0 / p) * direction()};
}

} // namespace

MinorizationCheck minorization_check(const ModelSpec& model, double T, double R,
                                     double p, std::size_t n_pairs,
                                     std::size_t n, const Grid& grid,
                                     std::uint64_t root, unsigned workers) {
    if (!(R > 0.0)) throw std::invalid_argument("minorization_check: R must be positive");
    if (!(p > 0.0)) throw std::invalid_argument("minorization_check: p must be positive");
    if (n_pairs == 0)
        throw std::invalid_argument("minorization_check: need at least one pair");
    MinorizationCheck out;
    out.T = T;
    out.R = R;
    out.n_pairs = n_pairs;
    double worst_tv = 0.0, worst_se = 0.0;
    RngStream pair_rng = stream_at(derive_root(root, 0), 0);
    for (std::size_t j = 0; j < n_pairs; ++j) {
        const auto [x, y] = level_set_pair(R, p, model.dim(), pair_rng);
        const auto kx = estimate_kernel(model, x, T, n, grid,
                                        derive_root(root, 2 * j + 1), workers);
        const auto ky = estimate_kernel(model, y, T, n, grid,
                                        derive_root(root, 2 * j + 2), workers);
        const double tv = tv_discrete(kx.weights, ky.weights);
        if (tv > worst_tv || j == 0) {
            worst_tv = tv;
            worst_se = tv_noise_scale(kx.weights, ky.weights, n, n);
            out.worst_x = x;
            out.worst_y = y;
        }
    }
    out.delta_hat = 1.0 - worst_tv;
    out.se = worst_se;
    if (out.delta_hat <= 0.0) {
        out.conclusive = false;
        out.note = "inconclusive at this grid";
    } else {
        out.conclusive = true;
    }
    return out;
}

InvariantMoment invariant_moment(const ModelSpec& model, double p,
                                 double burn_in, std::size_t n_samples,
                                 std::uint64_t root) {
    if (p < 0.0) throw std::invalid_argument("invariant_moment: order must be nonnegative");
    if (p >= model.alpha())
        throw std::invalid_argument("invariant_moment: moment may be infinite");
    InvariantMoment out;
    if (p == 0.0) {
        out.value = out.partial_quarter = out.partial_half = 1.0;
        out.stabilized = true;
        return out;
    }
    const double slowest = model.is_diagonal() ? model.diagonal().gammas()[0]
                                               : model.matrix_part().slowest_rate();
    if (!(burn_in >= 10.0 / slowest))
        throw std::invalid_argument("invariant_moment: burn-in shorter than 10 relaxation times");
    if (n_samples < 8)
        throw std::invalid_argument("invariant_moment: need at least 8 samples");

    RngStream rng = stream_at(root, 0);
    State x = State::Zero(static_cast<Eigen::Index>(model.dim()));
    x = evolve(model, x, std::ceil(burn_in / model.dt()) * model.dt(), rng);

    double acc = 0.0;
    const std::size_t q1 = n_samples / 4, q2 = n_samples / 2;
    for (std::size_t i = 0; i < n_samples; ++i) {
        x = model.step(x, rng);
        if (!x.allFinite()) throw SimulationError(i + 1, static_cast<double>(i + 1) * model.dt());
        acc += std::pow(x.norm(), p);
        if (i + 1 == q1) out.partial_quarter = acc / static_cast<double>(q1);
        if (i + 1 == q2) out.partial_half = acc / static_cast<double>(q2);
    }
    out.value = acc / static_cast<double>(n_samples);
    const double d1 = std::abs(out.partial_quarter - out.partial_half) /
                      std::max(out.partial_half, 1e-300);
    const double d2 = std::abs(out.partial_half - out.value) /
                      std::max(out.value, 1e-300);
    out.stabilized = d1 < 0.1 && d2 < 0.1;
    return out;
}

MixingFit mixing_fit(const ModelSpec& model,
                     const std::function<State(RngStream&)>& initial1,
                     const std::function<State(RngStream&)>& initial2,
                     const std::vector<double>& times, std::size_t n,
                     const Grid& grid, std::uint64_t root, unsigned workers) {
    if (times.empty()) throw std::invalid_argument("mixing_fit: no times");
    for (std::size_t i = 0; i < times.size(); ++i) {
        steps_for(times[i], model.dt());
        if (i > 0 && times[i] <= times[i - 1])
            throw std::invalid_argument("mixing_fit: times must increase");
        if (times[i] <= 0.0)
            throw std::invalid_argument("mixing_fit: times must be positive");
    }
    MixingFit out;
    out.times = times;

    // Cell index of each trajectory at each requested time, one ensemble per
    // initial law. Trajectory i of ensemble e uses stream split(root_e, i).
    std::vector<std::vector<std::size_t>> cells[2];
    for (int e = 0; e < 2; ++e) {
        cells[e].assign(times.size(), std::vector<std::size_t>(n));
        const std::uint64_t ens_root = derive_root(root, static_cast<std::uint64_t>(e));
        const auto& init = (e == 0) ? initial1 : initial2;
        parallel_for(n, workers, [&](std::size_t i) {
            RngStream s = stream_at(ens_root, i);
            State x = init(s);
            double t_prev = 0.0;
            for (std::size_t ti = 0; ti < times.size(); ++ti) {
                x = evolve(model, x, times[ti] - t_prev, s);
                t_prev = times[ti];
                cells[e][ti][i] = grid.cell_of(x);
            }
        });
    }

    std::vector<double> fit_t, fit_y, fit_w;
    const double hard_floor = 10.0 / std::sqrt(static_cast<double>(n));
    bool any_above_floor = false;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        std::vector<double> pw(grid.cells(), 0.0), qw(grid.cells(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            pw[cells[0][ti][i]] += 1.0;
            qw[cells[1][ti][i]] += 1.0;
        }
        for (auto& v : pw) v /= static_cast<double>(n);
        for (auto& v : qw) v /= static_cast<double>(n);
        const double tv = tv_discrete(pw, qw);
        const double se = tv_noise_scale(pw, qw, n, n);
        out.tv.push_back(tv);
        out.se.push_back(se);
        const double floor = std::max(hard_floor, 3.0 * se);
        if (tv < floor) continue;
        any_above_floor = true;
        if (tv > 0.9) continue;
        fit_t.push_back(times[ti]);
        fit_y.push_back(std::log(tv));
        // Delta-method precision of log tv.
        const double rel = se / tv;
        fit_w.push_back(1.0 / (rel * rel));
    }
    out.n_used = fit_t.size();
    if (!any_above_floor) {
        out.ok = false;
        out.note = "already mixed; increase initial separation";
        return out;
    }
    if (fit_t.size() < 2) {
        out.ok = false;
        out.note = "not enough usable decay points";
        return out;
    }
    const LinearFit fit = linear_fit_weighted(fit_t, fit_y, fit_w);
    out.c_hat = -fit.slope;
    out.C_hat = std::exp(fit.intercept);
    out.r_squared = fit.r_squared;
    out.ok = fit.ok && fit.slope < 0.0;
    if (!out.ok && out.note.empty()) out.note = "no decay trend in range";
    return out;
}

HarrisReport harris_certify(const ModelSpec& model, double p, double T0,
                            const std::vector<State>& probes,
                            std::size_t n_lyapunov,
                            const std::vector<double>& levels,
                            std::size_t n_pairs, std::size_t n_kernel,
                            const Grid& grid, std::uint64_t root,
                            unsigned workers) {
    HarrisReport rep;
    rep.lyapunov = lyapunov_check(model, p, T0, probes, n_lyapunov,
                                  derive_root(root, 0), workers);
    rep.conditions.push_back(
        "drift: gamma_hat + 3 se = " +
        format_double(rep.lyapunov.gamma_hat + 3.0 * rep.lyapunov.se_gamma) +
        (rep.lyapunov.contraction ? " < 1" : " >= 1"));

    bool all_overlap = true, any_inconclusive = false;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        MinorizationCheck mc =
            minorization_check(model, T0, levels[li], p, n_pairs, n_kernel, grid,
                               derive_root(root, 100 + li), workers);
        if (!mc.conclusive) {
            // Widen the window: overlap may need more than one period to
            // build up at this level.
            mc = minorization_check(model, 3.0 * T0, levels[li], p, n_pairs,
                                    n_kernel, grid,
                                    derive_root(root, 200 + li), workers);
            mc.note = mc.conclusive ? "conclusive at widened window 3*T0"
                                    : "inconclusive at this grid";
        }
        const bool positive = mc.conclusive && mc.delta_hat - 3.0 * mc.se > 0.0;
        rep.conditions.push_back(
            "overlap at R = " + format_double(levels[li]) + ": delta_hat - 3 se = " +
            format_double(mc.delta_hat - 3.0 * mc.se) +
            (mc.conclusive ? (positive ? " > 0" : " <= 0") : " (inconclusive)"));
        if (!mc.conclusive) any_inconclusive = true;
        if (!positive) all_overlap = false;
        rep.minorization.push_back(std::move(mc));
    }

    if (rep.lyapunov.contraction && all_overlap) rep.verdict = "certified";
    else if (any_inconclusive) rep.verdict = "inconclusive";
    else rep.verdict = "failed";
    return rep;
}

namespace {
nlohmann::json lyapunov_json(const LyapunovCheck& c) {
    return {{"p", c.p},
            {"T0", c.T0},
            {"gamma_hat", c.gamma_hat},
            {"K_hat", c.K_hat},
            {"se_gamma", c.se_gamma},
            {"se_K", c.se_K},
            {"contraction", c.contraction},
            {"vx", c.vx},
            {"m_hat", c.m_hat},
            {"se", c.se}};
}
} // namespace

void write_harris_json(const std::string& path, const HarrisReport& report) {
    nlohmann::json j;
    j["lyapunov"] = lyapunov_json(report.lyapunov);
    j["minorization"] = nlohmann::json::array();
    for (const auto& m : report.minorization) {
        nlohmann::json mj{{"T", m.T},
                          {"R", m.R},
                          {"delta_hat", m.delta_hat},
                          {"se", m.se},
                          {"n_pairs", m.n_pairs},
                          {"conclusive", m.conclusive},
                          {"note", m.note}};
        mj["worst_pair"] = {{"x", std::vector<double>(m.worst_x.data(),
                                                      m.worst_x.data() + m.worst_x.size())},
                            {"y", std::vector<double>(m.worst_y.data(),
                                                      m.worst_y.data() + m.worst_y.size())}};
        j["minorization"].push_back(std::move(mj));
    }
    j["verdict"] = report.verdict;
    j["conditions"] = report.conditions;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

void write_mixing_json(const std::string& path, const MixingFit& fit) {
    nlohmann::json j;
    j["times"] = fit.times;
    j["tv"] = fit.tv;
    j["se"] = fit.se;
    j["c_hat"] = fit.c_hat;
    j["C_hat"] = fit.C_hat;
    j["r_squared"] = fit.r_squared;
    j["n_used"] = fit.n_used;
    j["ok"] = fit.ok;
    j["note"] = fit.note;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

void write_mixing_csv(const std::string& path, const MixingFit& fit) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t,tv,se\n";
    for (std::size_t i = 0; i < fit.times.size(); ++i)
        out << format_double(fit.times[i]) << "," << format_double(fit.tv[i])
            << "," << format_double(fit.se[i]) << "\n";
}

} // namespace ergo
