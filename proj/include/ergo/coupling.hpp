#ifndef ERGO_COUPLING_HPP
#define ERGO_COUPLING_HPP

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "ergo/kernel.hpp"

namespace ergo {

// Maximal coupling of two discrete laws, decomposed into the overlap
// min(p,q) and the two normalized excess parts. A draw lands on the shared
// overlap with probability 1 - tv (then both coordinates agree) and
// otherwise draws the two coordinates independently from the excess parts.
struct DiscreteCoupling {
    std::vector<double> overlap;    // min(p_i, q_i)
    std::vector<double> excess_p;   // (p_i - q_i)+
    std::vector<double> excess_q;   // (q_i - p_i)+
    double tv = 0.0;

    double coalescence_probability() const { return 1.0 - tv; }

    struct Draw {
        std::size_t i = 0;
        std::size_t j = 0;
        bool coalesced = false;
    };
    Draw sample(RngStream& rng) const;
};

DiscreteCoupling maximal_coupling_discrete(const std::vector<double>& p,
                                           const std::vector<double>& q);

struct CoupledChainState {
    State x1, x2;
    bool coalesced = false;   // implies x1 == x2 bitwise; absorbing
};

struct CouplingConfig {
    explicit CouplingConfig(Grid g) : grid(std::move(g)) {}
    double T = 1.0;            // coupling period, a multiple of the model dt
    double r = 1.0;            // proximity ball radius for the kernel-coupling branch
    double M = 4.0;            // level radius for the weighted-norm hitting time
    double eps = 0.0;          // weight of the hitting-time norm
    Grid grid;                 // binning for kernel-level coupling
    std::size_t n_kernel = 2000;
    bool cache_kernels = true;
    std::size_t max_steps = 50;
};

enum class CoupleBranch { synchronous, maximal, independent };

struct CoupledRun {
    std::vector<CoupledChainState> states;   // states[k] at time k*T
    std::vector<CoupleBranch> branches;      // branch taken at step k -> k+1
    // Hitting times in units of T; -1 means not reached within max_steps.
    std::ptrdiff_t tau_eps = -1;   // |x1|_eps + |x2|_eps <= M
    std::ptrdiff_t tau = -1;       // |x1| + |x2| <= r
    std::ptrdiff_t rho = -1;       // coalescence
    std::size_t kernel_estimates = 0;
    std::size_t cache_hits = 0;
};

// Kernel estimates for the coupling branch, memoized per origin cell.
// A cached entry starts from the cell's center state and draws from a
// stream derived from the cell index alone, so it is identical whichever
// run or worker computes it first; the cache can therefore be shared
// across a whole ensemble. Entries keep their endpoint samples for
// representative draws.
class KernelCache {
public:
    explicit KernelCache(std::uint64_t root = 0) : root_(root) {}

    struct Entry {
        std::vector<double> weights;
        std::vector<State> samples;
        std::vector<std::size_t> sample_cells;
    };

    // Memoized deterministic entry for an interior cell.
    const Entry& get(const ModelSpec& model, const CouplingConfig& cfg,
                     std::size_t cell, bool& was_new);

    const Entry* find(std::size_t cell) const;
    const Entry& put(std::size_t cell, Entry e);
    std::size_t size() const;

private:
    std::uint64_t root_ = 0;
    mutable std::mutex mu_;
    std::map<std::size_t, Entry> entries_;
};

// One transition of the coupled chain over time T:
//   equal or coalesced components advance synchronously on shared draws;
//   distinct components inside the proximity ball attempt a maximal
//   coupling of their binned kernel estimates and then draw representative
//   endpoint samples (the same sample for both on coalescence);
//   everything else advances independently.
CoupledChainState coupled_step(const ModelSpec& model, const CouplingConfig& cfg,
                               const CoupledChainState& s, RngStream& rng,
                               KernelCache* cache, CoupledRun* log = nullptr,
                               CoupleBranch* branch_out = nullptr);

// Runs the coupled chain for max_steps periods. With no shared cache the
// run builds its own, seeded from its root.
CoupledRun run_coupled(const ModelSpec& model, const CouplingConfig& cfg,
                       const State& x1, const State& x2, std::uint64_t root,
                       KernelCache* shared_cache = nullptr);

std::vector<CoupledRun> run_coupled_ensemble(const ModelSpec& model,
                                             const CouplingConfig& cfg,
                                             const State& x1, const State& x2,
                                             std::size_t n_runs,
                                             std::uint64_t root,
                                             unsigned workers = 1);

// Largest kernel-level total variation over probe pairs at diameter
// separation inside the proximity ball; the coupling construction wants
// this at or below 1/2.
struct ProximityCheck {
    double r = 0.0;
    double max_tv = 0.0;
    bool ok = false;
};

ProximityCheck check_proximity_ball(const ModelSpec& model,
                                    const CouplingConfig& cfg,
                                    std::size_t n_pairs, std::uint64_t root);

// Halves r from r0 until the proximity check passes; the trace of attempts
// is returned for the run record.
struct RCalibration {
    double r = 0.0;
    std::vector<ProximityCheck> trace;
};

RCalibration calibrate_r(const ModelSpec& model, CouplingConfig cfg, double r0,
                         std::size_t n_pairs, std::uint64_t root);

// Exponential tail fit for a hitting time observed on the T-grid.
struct ExpMomentFit {
    double eta_hat = 0.0;        // fitted tail rate, per unit time
    double c_hat = 0.0;          // fitted tail prefactor
    double r_squared = 0.0;
    double exp_moment_half = 0.0;  // plug-in mean of exp(eta_hat * tau / 2)
    std::size_t n_finite = 0;
    std::size_t n_censored = 0;
    bool degenerate = false;     // survival not informative (e.g. a step function)
};

// hit_steps: hitting times in units of T, -1 for censored (not reached in
// max_steps). Censored runs enter the survival curve as right-censored.
ExpMomentFit exp_moment_fit(const std::vector<std::ptrdiff_t>& hit_steps,
                            double T, std::size_t max_steps);

// Certified geometric decay of the two-sequence drift recursion
//   e_{k+1} = q^2 e_k + 2 C2 p_k,   p_{k+1} = (q^2 e_k + 2 C2 p_k) / M^p,
// valid when q^2 + 2 C2 / M^p <= q; rejects inadmissible M with the minimal
// admissible level in the message.
std::vector<std::pair<double, double>> drift_recursion_bound(
    double q, double C2, double M, double p, double e0, double p0,
    std::size_t k_max);

// Minimal admissible level (2 C2 / (q - q^2))^{1/p}.
double drift_recursion_minimal_level(double q, double C2, double p);

void write_runs_jsonl(const std::string& path,
                      const std::vector<CoupledRun>& runs,
                      const CouplingConfig& cfg);

} // namespace ergo

#endif
