#ifndef ERGO_KERNEL_HPP
#define ERGO_KERNEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ergo/dynamics.hpp"
#include "ergo/stats.hpp"

namespace ergo {

// Histogram geometry on the first `dims` coordinates of the state (at most
// three), a box of `bins` cells per axis plus one shared overflow cell for
// everything outside the box. Two kernels are comparable only on equal grids.
class Grid {
public:
    Grid(std::size_t dims, std::vector<double> lo, std::vector<double> hi,
         std::size_t bins);

    // Symmetric box [-half_width, half_width]^dims.
    static Grid centered(std::size_t dims, double half_width, std::size_t bins);

    std::size_t dims() const { return dims_; }
    std::size_t bins() const { return bins_; }
    const std::vector<double>& lo() const { return lo_; }
    const std::vector<double>& hi() const { return hi_; }
    std::size_t cells() const { return cells_; }           // bins^dims + 1
    std::size_t overflow_cell() const { return cells_ - 1; }

    std::size_t cell_of(const State& x) const;

    // Center of an interior cell embedded into a state of dimension
    // state_dim, zero beyond the grid axes. The overflow cell has no center.
    State center_state(std::size_t cell, std::size_t state_dim) const;

    bool operator==(const Grid& other) const;

private:
    std::size_t dims_, bins_, cells_;
    std::vector<double> lo_, hi_, width_;
};

// Binned endpoint law of the chain started at `origin` run for `horizon`.
struct EmpiricalKernel {
    Grid grid;
    State origin;
    double horizon = 0.0;
    std::vector<double> weights;      // sums to 1 within 1e-12
    std::size_t sample_count = 0;

    static EmpiricalKernel from_samples(Grid grid, State origin, double horizon,
                                        const std::vector<State>& samples);
};

void write_kernel_json(const std::string& path, const EmpiricalKernel& k);

// N independent endpoint draws of the chain; draw i uses stream
// split(root, i), so the result is identical for any worker count.
std::vector<State> sample_endpoints(const ModelSpec& model, const State& x,
                                    double T, std::size_t n,
                                    std::uint64_t root, unsigned workers = 1);

EmpiricalKernel estimate_kernel(const ModelSpec& model, const State& x,
                                double T, std::size_t n, const Grid& grid,
                                std::uint64_t root, unsigned workers = 1);

// Half L1 distance between two probability vectors of equal length; inputs
// must each sum to 1 within 1e-9.
double tv_discrete(const std::vector<double>& p, const std::vector<double>& q);

// First-order envelope of the statistical error of tv_discrete on empirical
// histograms with n1 and n2 samples: half the summed per-cell expected
// absolute fluctuation. Near equal laws this is also the scale of the
// estimator's upward bias, so domination checks use it as the combined
// uncertainty.
double tv_noise_scale(const std::vector<double>& p, const std::vector<double>& q,
                      std::size_t n1, std::size_t n2);

struct GradientEstimate {
    double horizon = 0.0;
    double ratio = 0.0;       // |mean f(X_T^x) - mean f(X_T^y)| / |x - y|
    double se = 0.0;          // paired standard error of the ratio
    bool reliable = false;    // estimated difference above its standard error
};

// Finite-difference probe of the smoothing rate with common random numbers:
// trajectory i from x and from y replay the same stream.
GradientEstimate gradient_probe(const ModelSpec& model,
                                const std::function<double(const State&)>& f,
                                const State& x, const State& y, double T,
                                std::size_t n, std::uint64_t root,
                                unsigned workers = 1);

std::vector<GradientEstimate> gradient_scan(
    const ModelSpec& model, const std::function<double(const State&)>& f,
    const State& x, const State& y, const std::vector<double>& horizons,
    std::size_t n, std::uint64_t root, unsigned workers = 1);

struct HitFrequency {
    std::uint64_t hits = 0;
    std::uint64_t n = 0;
    double frequency = 0.0;
    double wilson_lower = 0.0;
    double wilson_upper = 1.0;
};

// Empirical frequency of |X_T - center| <= radius with a Wilson score
// interval at 3 standard errors.
HitFrequency irreducibility_probe(const ModelSpec& model, const State& x,
                                  double T, const State& center, double radius,
                                  std::size_t n, std::uint64_t root,
                                  unsigned workers = 1);

// Mean of |X_T|_e^p with standard error; p must stay below the stability
// index, where the moment is finite.
MeanSE moment_probe(const ModelSpec& model, const State& x, double T, double p,
                    double e, std::size_t n, std::uint64_t root,
                    unsigned workers = 1);

} // namespace ergo

#endif
