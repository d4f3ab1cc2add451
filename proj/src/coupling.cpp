#include "ergo/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace ergo {

namespace {

// Stream tag for kernel-cache roots, disjoint from small per-run indices.
constexpr std::uint64_t kCacheTag = 0x6b65726e656c6373ULL;

std::size_t draw_from(const std::vector<double>& w, double total, RngStream& rng) {
    double t = rng.uniform() * total;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) continue;
        last_positive = i;
        if (t < w[i]) return i;
        t -= w[i];
    }
    return last_positive;   // guards against rounding at the upper edge
}

void check_prob_vector(const std::vector<double>& p, const char* who) {
    double s = 0.0;
    for (double v : p) {
        if (v < 0.0) throw std::invalid_argument(std::string(who) + ": negative mass");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(who) + ": input not normalized");
}

} // namespace

DiscreteCoupling maximal_coupling_discrete(const std::vector<double>& p,
                                           const std::vector<double>& q) {
    if (p.size() != q.size())
        throw std::invalid_argument("maximal_coupling_discrete: length mismatch");
    if (p.empty())
        throw std::invalid_argument("maximal_coupling_discrete: empty input");
    check_prob_vector(p, "maximal_coupling_discrete");
    check_prob_vector(q, "maximal_coupling_discrete");
    DiscreteCoupling c;
    c.overlap.resize(p.size());
    c.excess_p.resize(p.size());
    c.excess_q.resize(p.size());
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        c.overlap[i] = std::min(p[i], q[i]);
        c.excess_p[i] = std::max(p[i] - q[i], 0.0);
        c.excess_q[i] = std::max(q[i] - p[i], 0.0);
        tv += std::abs(p[i] - q[i]);
    }
    c.tv = 0.5 * tv;
    return c;
}

DiscreteCoupling::Draw DiscreteCoupling::sample(RngStream& rng) const {
    Draw d;
    if (rng.uniform() < 1.0 - tv) {
        d.i = d.j = draw_from(overlap, 1.0 - tv, rng);
        d.coalesced = true;
    } else {
        d.i = draw_from(excess_p, tv, rng);
        d.j = draw_from(excess_q, tv, rng);
        d.coalesced = false;
    }
    return d;
}

namespace {

KernelCache::Entry estimate_entry(const ModelSpec& model,
                                  const CouplingConfig& cfg,
                                  const State& origin, RngStream& rng) {
    KernelCache::Entry e;
    e.samples.resize(cfg.n_kernel);
    for (std::size_t i = 0; i < cfg.n_kernel; ++i)
        e.samples[i] = evolve(model, origin, cfg.T, rng);
    e.sample_cells.resize(cfg.n_kernel);
    std::vector<std::size_t> counts(cfg.grid.cells(), 0);
    for (std::size_t i = 0; i < cfg.n_kernel; ++i) {
        e.sample_cells[i] = cfg.grid.cell_of(e.samples[i]);
        ++counts[e.sample_cells[i]];
    }
    e.weights.resize(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c)
        e.weights[c] =
            static_cast<double>(counts[c]) / static_cast<double>(cfg.n_kernel);
    return e;
}

} // namespace

const KernelCache::Entry& KernelCache::get(const ModelSpec& model,
                                           const CouplingConfig& cfg,
                                           std::size_t cell, bool& was_new) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(cell);
    if (it != entries_.end()) {
        was_new = false;
        return it->second;
    }
    // The origin and the stream depend only on the cell, never on who asks.
    const State origin = cfg.grid.center_state(cell, model.dim());
    RngStream rng = stream_at(derive_root(root_, cell), 0);
    was_new = true;
    return entries_.emplace(cell, estimate_entry(model, cfg, origin, rng))
        .first->second;
}

const KernelCache::Entry* KernelCache::find(std::size_t cell) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(cell);
    return it == entries_.end() ? nullptr : &it->second;
}

const KernelCache::Entry& KernelCache::put(std::size_t cell, Entry e) {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.insert_or_assign(cell, std::move(e)).first->second;
}

std::size_t KernelCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

namespace {

// Kernel estimate of `origin` for the coupling branch. Interior cells go
// through the cache when caching is on; the overflow cell and uncached
// requests are estimated directly from the exact origin with the run's own
// stream, stored in `local` for the lifetime of the step.
const KernelCache::Entry& branch_kernel(const ModelSpec& model,
                                        const CouplingConfig& cfg,
                                        const State& origin, RngStream& rng,
                                        KernelCache* cache, KernelCache& local,
                                        CoupledRun* log) {
    const std::size_t cell = cfg.grid.cell_of(origin);
    if (cfg.cache_kernels && cache && cell != cfg.grid.overflow_cell()) {
        bool was_new = false;
        const auto& e = cache->get(model, cfg, cell, was_new);
        if (log) {
            if (was_new) ++log->kernel_estimates; else ++log->cache_hits;
        }
        return e;
    }
    if (log) ++log->kernel_estimates;
    // Key by insertion order: two origins can share a cell here.
    return local.put(local.size(), estimate_entry(model, cfg, origin, rng));
}

// Uniform draw among the entry's samples that landed in `cell`. The cell was
// drawn from this entry's weights, so at least one such sample exists.
const State& representative(const KernelCache::Entry& e, std::size_t cell,
                            RngStream& rng) {
    std::size_t count = 0;
    for (auto c : e.sample_cells)
        if (c == cell) ++count;
    std::size_t pick = static_cast<std::size_t>(rng.uniform() * static_cast<double>(count));
    if (pick >= count) pick = count - 1;
    for (std::size_t i = 0; i < e.sample_cells.size(); ++i) {
        if (e.sample_cells[i] != cell) continue;
        if (pick == 0) return e.samples[i];
        --pick;
    }
    throw std::logic_error("representative: drawn cell holds no samples");
}

bool bitwise_equal(const State& a, const State& b) {
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace

CoupledChainState coupled_step(const ModelSpec& model, const CouplingConfig& cfg,
                               const CoupledChainState& s, RngStream& rng,
                               KernelCache* cache, CoupledRun* log,
                               CoupleBranch* branch_out) {
    CoupledChainState next;
    CoupleBranch branch;
    if (s.coalesced || bitwise_equal(s.x1, s.x2)) {
        branch = CoupleBranch::synchronous;
        next.x1 = evolve(model, s.x1, cfg.T, rng);
        next.x2 = next.x1;
        next.coalesced = true;
    } else if (s.x1.norm() <= cfg.r && s.x2.norm() <= cfg.r) {
        branch = CoupleBranch::maximal;
        KernelCache local;
        const auto& k1 = branch_kernel(model, cfg, s.x1, rng, cache, local, log);
        const auto& k2 = branch_kernel(model, cfg, s.x2, rng, cache, local, log);
        const DiscreteCoupling mc = maximal_coupling_discrete(k1.weights, k2.weights);
        const auto draw = mc.sample(rng);
        if (draw.coalesced) {
            next.x1 = representative(k1, draw.i, rng);
            next.x2 = next.x1;
            next.coalesced = true;
        } else {
            next.x1 = representative(k1, draw.i, rng);
            next.x2 = representative(k2, draw.j, rng);
            next.coalesced = false;
        }
    } else {
        branch = CoupleBranch::independent;
        next.x1 = evolve(model, s.x1, cfg.T, rng);
        next.x2 = evolve(model, s.x2, cfg.T, rng);
        next.coalesced = false;
    }
    if (branch_out) *branch_out = branch;
    return next;
}

CoupledRun run_coupled(const ModelSpec& model, const CouplingConfig& cfg,
                       const State& x1, const State& x2, std::uint64_t root,
                       KernelCache* shared_cache) {
    steps_for(cfg.T, model.dt());   // validate the period up front
    CoupledRun run;
    KernelCache own(derive_root(root, kCacheTag));
    KernelCache* cache = shared_cache ? shared_cache : &own;
    RngStream rng = stream_at(root, 0);

    CoupledChainState s{x1, x2, bitwise_equal(x1, x2)};
    run.states.push_back(s);
    auto note_hits = [&](const CoupledChainState& st, std::ptrdiff_t k) {
        if (run.tau_eps < 0 &&
            model.norm_eps(st.x1, cfg.eps) + model.norm_eps(st.x2, cfg.eps) <= cfg.M)
            run.tau_eps = k;
        if (run.tau < 0 && st.x1.norm() + st.x2.norm() <= cfg.r) run.tau = k;
        if (run.rho < 0 && (st.coalesced || bitwise_equal(st.x1, st.x2)))
            run.rho = k;
    };
    note_hits(s, 0);
    for (std::size_t k = 0; k < cfg.max_steps; ++k) {
        CoupleBranch branch;
        s = coupled_step(model, cfg, s, rng, cache, &run, &branch);
        run.branches.push_back(branch);
        run.states.push_back(s);
        note_hits(s, static_cast<std::ptrdiff_t>(k) + 1);
    }
    return run;
}

std::vector<CoupledRun> run_coupled_ensemble(const ModelSpec& model,
                                             const CouplingConfig& cfg,
                                             const State& x1, const State& x2,
                                             std::size_t n_runs,
                                             std::uint64_t root,
                                             unsigned workers) {
    std::vector<CoupledRun> runs(n_runs);
    KernelCache shared(derive_root(root, kCacheTag));
    parallel_for(n_runs, workers, [&](std::size_t i) {
        runs[i] = run_coupled(model, cfg, x1, x2, derive_root(root, i), &shared);
    });
    return runs;
}

ProximityCheck check_proximity_ball(const ModelSpec& model,
                                    const CouplingConfig& cfg,
                                    std::size_t n_pairs, std::uint64_t root) {
    if (n_pairs == 0)
        throw std::invalid_argument("check_proximity_ball: need at least one pair");
    ProximityCheck out;
    out.r = cfg.r;
    const auto dim = static_cast<Eigen::Index>(model.dim());
    RngStream dirs = stream_at(root, 0);
    for (std::size_t j = 0; j < n_pairs; ++j) {
        // Diameter pair: antipodal points on the proximity sphere, the
        // largest separation the kernel-coupling branch can face. Gaussian
        // components keep the direction uniform in any dimension.
        State u(dim);
        double n2 = 0.0;
        do {
            for (Eigen::Index c = 0; c < dim; ++c) {
                const double r1 = dirs.uniform(), r2 = dirs.uniform();
                u[c] = std::sqrt(-2.0 * std::log(r1)) *
                       std::cos(2.0 * std::numbers::pi * r2);
            }
            n2 = u.squaredNorm();
        } while (n2 < 1e-12);
        u /= std::sqrt(n2);
        const State a = cfg.r * u;
        const State b = -a;
        KernelCache local;   // fresh estimates per pair, never shared
        CouplingConfig probe_cfg = cfg;
        probe_cfg.cache_kernels = false;
        RngStream rng = stream_at(derive_root(root, 1), j);
        const auto& k1 =
            branch_kernel(model, probe_cfg, a, rng, nullptr, local, nullptr);
        const auto& k2 =
            branch_kernel(model, probe_cfg, b, rng, nullptr, local, nullptr);
        out.max_tv = std::max(out.max_tv, tv_discrete(k1.weights, k2.weights));
    }
    out.ok = out.max_tv <= 0.5;
    return out;
}

RCalibration calibrate_r(const ModelSpec& model, CouplingConfig cfg, double r0,
                         std::size_t n_pairs, std::uint64_t root) {
    if (!(r0 > 0.0)) throw std::invalid_argument("calibrate_r: r0 must be positive");
    RCalibration cal;
    cfg.r = r0;
    for (int attempt = 0; attempt < 20; ++attempt) {
        const ProximityCheck c =
            check_proximity_ball(model, cfg, n_pairs, derive_root(root, static_cast<std::uint64_t>(attempt)));
        cal.trace.push_back(c);
        if (c.ok) {
            cal.r = c.r;
            return cal;
        }
        cfg.r *= 0.5;
    }
    throw std::runtime_error("calibrate_r: no admissible radius after 20 halvings");
}

ExpMomentFit exp_moment_fit(const std::vector<std::ptrdiff_t>& hit_steps,
                            double T, std::size_t max_steps) {
    if (!(T > 0.0)) throw std::invalid_argument("exp_moment_fit: T must be positive");
    ExpMomentFit out;
    const std::size_t n = hit_steps.size();
    for (auto k : hit_steps) {
        if (k >= 0) ++out.n_finite; else ++out.n_censored;
    }
    if (out.n_finite < 100)
        throw std::invalid_argument("exp_moment_fit: insufficient tail data");

    // Survival on the step grid; censored runs exceed every k below max_steps.
    std::vector<double> ks, logs;
    const double floor = 10.0 / static_cast<double>(n);
    std::vector<double> surv(max_steps, 0.0);
    for (std::size_t k = 0; k < max_steps; ++k) {
        std::size_t cnt = 0;
        for (auto h : hit_steps)
            if (h < 0 || h > static_cast<std::ptrdiff_t>(k)) ++cnt;
        surv[k] = static_cast<double>(cnt) / static_cast<double>(n);
        if (surv[k] >= floor && surv[k] > 0.0) {
            ks.push_back(static_cast<double>(k) * T);
            logs.push_back(std::log(surv[k]));
        }
    }
    const LinearFit fit = linear_fit(ks, logs);
    const bool flat =
        logs.empty() ||
        *std::max_element(logs.begin(), logs.end()) ==
            *std::min_element(logs.begin(), logs.end());
    out.degenerate = !fit.ok || flat || !(fit.slope < 0.0);
    if (fit.ok) {
        out.eta_hat = -fit.slope;
        out.c_hat = std::exp(fit.intercept);
        out.r_squared = fit.r_squared;
    }
    double acc = 0.0;
    for (auto h : hit_steps)
        if (h >= 0)
            acc += std::exp(0.5 * out.eta_hat * static_cast<double>(h) * T);
    out.exp_moment_half = acc / static_cast<double>(out.n_finite);
    return out;
}

double drift_recursion_minimal_level(double q, double C2, double p) {
    if (!(q > 0.0 && q < 1.0))
        throw std::invalid_argument("drift recursion: q must lie in (0,1)");
    if (!(C2 > 0.0)) throw std::invalid_argument("drift recursion: C2 must be positive");
    if (!(p > 0.0)) throw std::invalid_argument("drift recursion: p must be positive");
    return std::pow(2.0 * C2 / (q - q * q), 1.0 / p);
}

std::vector<std::pair<double, double>> drift_recursion_bound(
    double q, double C2, double M, double p, double e0, double p0,
    std::size_t k_max) {
    const double minimal = drift_recursion_minimal_level(q, C2, p);
    if (!(M > 0.0)) throw std::invalid_argument("drift recursion: M must be positive");
    if (!(e0 >= 0.0 && p0 >= 0.0))
        throw std::invalid_argument("drift recursion: nonnegative start required");
    const double mp = std::pow(M, p);
    if (!(2.0 * C2 / mp <= q - q * q))
        throw std::invalid_argument(
            "drift recursion: level too small; minimal admissible M = " +
            format_double(minimal));
    std::vector<std::pair<double, double>> out;
    out.reserve(k_max + 1);
    out.emplace_back(e0, p0);
    double e = e0, pk = p0;
    for (std::size_t k = 0; k < k_max; ++k) {
        const double s = q * q * e + 2.0 * C2 * pk;
        e = s;
        pk = s / mp;
        out.emplace_back(e, pk);
    }
    return out;
}

void write_runs_jsonl(const std::string& path,
                      const std::vector<CoupledRun>& runs,
                      const CouplingConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    for (const auto& run : runs) {
        nlohmann::json j;
        j["steps"] = run.branches.size();
        j["tau_eps"] = run.tau_eps;
        j["tau"] = run.tau;
        j["rho"] = run.rho;
        std::size_t sync = 0, maximal = 0, indep = 0;
        for (auto b : run.branches) {
            if (b == CoupleBranch::synchronous) ++sync;
            else if (b == CoupleBranch::maximal) ++maximal;
            else ++indep;
        }
        j["branches"] = {{"synchronous", sync},
                         {"maximal", maximal},
                         {"independent", indep}};
        j["kernel_estimates"] = run.kernel_estimates;
        j["cache_hits"] = run.cache_hits;
        j["calibration"] = {{"T", cfg.T},
                            {"r", cfg.r},
                            {"M", cfg.M},
                            {"eps", cfg.eps},
                            {"n_kernel", cfg.n_kernel}};
        out << j.dump() << "\n";
    }
}

} // namespace ergo
