#ifndef ERGO_HARRIS_HPP
#define ERGO_HARRIS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ergo/kernel.hpp"

namespace ergo {

// Least-squares estimate of the one-window drift of V(x) = |x|^p:
//   E V(X_{T0}) ~ gamma * V(x) + K over the probe points.
struct LyapunovCheck {
    double p = 0.0;
    double T0 = 0.0;
    double gamma_hat = 0.0;
    double K_hat = 0.0;
    double se_gamma = 0.0;
    double se_K = 0.0;
    bool contraction = false;       // gamma_hat + 3 se_gamma < 1
    std::vector<double> vx;         // V at the probes
    std::vector<double> m_hat;      // estimated E V(X_{T0}) per probe
    std::vector<double> se;         // standard errors per probe
};

// Probe values |x|^p must spread by at least a factor 10, otherwise the fit
// cannot separate slope from intercept.
LyapunovCheck lyapunov_check(const ModelSpec& model, double p, double T0,
                             const std::vector<State>& probes, std::size_t n,
                             std::uint64_t root, unsigned workers = 1);

// Worst-pair overlap of kernel estimates over probe pairs drawn from the
// level set V(x) + V(y) <= R.
struct MinorizationCheck {
    double T = 0.0;
    double R = 0.0;
    double delta_hat = 0.0;         // 1 - max pair TV
    double se = 0.0;                // noise scale of the worst-pair TV
    std::size_t n_pairs = 0;
    bool conclusive = false;        // false when delta_hat <= 0 at this grid
    std::string note;
    State worst_x, worst_y;         // pair achieving the max TV
};

MinorizationCheck minorization_check(const ModelSpec& model, double T, double R,
                                     double p, std::size_t n_pairs,
                                     std::size_t n, const Grid& grid,
                                     std::uint64_t root, unsigned workers = 1);

struct InvariantMoment {
    double value = 0.0;
    bool stabilized = false;
    double partial_quarter = 0.0;
    double partial_half = 0.0;
};

// Time average of |X_t|^p along one long trajectory after burn-in, with a
// stabilization check across the quarter, half, and full windows. burn_in
// must cover at least 10 relaxation times of the slowest mode.
InvariantMoment invariant_moment(const ModelSpec& model, double p,
                                 double burn_in, std::size_t n_samples,
                                 std::uint64_t root);

struct MixingFit {
    std::vector<double> times;
    std::vector<double> tv;
    std::vector<double> se;
    double c_hat = 0.0;             // fitted decay rate
    double C_hat = 0.0;             // fitted prefactor
    double r_squared = 0.0;
    std::size_t n_used = 0;         // points inside the fit range
    bool ok = false;
    std::string note;
};

// Grid TV between the laws of two ensembles at the requested times, with a
// weighted log-linear fit over the range where TV is above its noise floor
// and at most 0.9.
MixingFit mixing_fit(const ModelSpec& model,
                     const std::function<State(RngStream&)>& initial1,
                     const std::function<State(RngStream&)>& initial2,
                     const std::vector<double>& times, std::size_t n,
                     const Grid& grid, std::uint64_t root,
                     unsigned workers = 1);

struct HarrisReport {
    LyapunovCheck lyapunov;
    std::vector<MinorizationCheck> minorization;   // one per level R probed
    std::string verdict;      // "certified", "failed", or "inconclusive"
    std::vector<std::string> conditions;
};

// certified requires the Lyapunov contraction at 3 standard errors and a
// strictly positive overlap at 3 standard errors on every probed level.
// Levels that stay inconclusive after the widened window make the whole
// verdict inconclusive rather than failed.
HarrisReport harris_certify(const ModelSpec& model, double p, double T0,
                            const std::vector<State>& probes,
                            std::size_t n_lyapunov,
                            const std::vector<double>& levels,
                            std::size_t n_pairs, std::size_t n_kernel,
                            const Grid& grid, std::uint64_t root,
                            unsigned workers = 1);

void write_harris_json(const std::string& path, const HarrisReport& report);
void write_mixing_json(const std::string& path, const MixingFit& fit);
void write_mixing_csv(const std::string& path, const MixingFit& fit);

} // namespace ergo

#endif
