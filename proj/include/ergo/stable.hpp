#ifndef ERGO_STABLE_HPP
#define ERGO_STABLE_HPP

#include <vector>

#include "ergo/rng.hpp"

namespace ergo {

// Stability index of a symmetric stable law. The full sampler range is
// 0 < alpha < 2; model-level constructions that need finite first moments
// restrict further (checked there, not here).
struct StableIndex {
    double alpha;
    explicit StableIndex(double a);
};

// Finite symmetric measure on the unit sphere, given as weighted unit
// directions. Stored symmetrized: every atom has its mirror with equal
// weight. The atom directions must span the ambient space, otherwise the
// driven process would be degenerate along some direction.
class SpectralMeasure {
public:
    struct Atom {
        std::vector<double> direction;   // unit length within 1e-12
        double weight;                   // > 0
    };

    // Mirrors any atom whose opposite is missing; rejects mismatched weights
    // on a direction pair and directions that fail the unit/span checks.
    SpectralMeasure(std::size_t dim, std::vector<Atom> atoms);

    std::size_t dim() const { return dim_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    double total_weight() const { return total_weight_; }

    // sum_j w_j |<u, a_j>|^alpha over the stored (symmetrized) atoms.
    double stability_exponent(const std::vector<double>& u, double alpha) const;

private:
    std::size_t dim_;
    std::vector<Atom> atoms_;
    double total_weight_;
};

// One draw of the standard symmetric alpha-stable law, characteristic
// function exp(-|u|^alpha). Draws with magnitude above 1e12 are rejected and
// redrawn; rejections accumulate in rng.resamples.
double sample_standard_stable(const StableIndex& alpha, RngStream& rng);

// Increment over dt of the stable process directed by the measure:
// sum_j (dt w_j)^{1/alpha} xi_j a_j with xi_j iid standard draws.
std::vector<double> sample_spectral_increment(const SpectralMeasure& mu,
                                              const StableIndex& alpha,
                                              double dt, RngStream& rng);

// Scale of the stochastic convolution of a linear mode with decay rate
// gamma > 0 and noise amplitude beta > 0 at time t >= 0:
//   beta * ((1 - exp(-alpha gamma t)) / (alpha gamma))^{1/alpha}.
double ou_scale(double gamma, double beta, const StableIndex& alpha, double t);

// Draw of the mode value at time t started from 0: ou_scale * standard draw.
double sample_ou_marginal(double gamma, double beta, const StableIndex& alpha,
                          double t, RngStream& rng);

} // namespace ergo

#endif
