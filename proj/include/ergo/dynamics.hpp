#ifndef ERGO_DYNAMICS_HPP
#define ERGO_DYNAMICS_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/stable.hpp"

namespace ergo {

using State = Eigen::VectorXd;

// Diagonal linear part: mode k decays at rate gamma_k and is forced by an
// independent stable noise of amplitude beta_k. theta and eps are the
// regularity bookkeeping parameters used by norm weights and probe placement.
class DiagonalGenerator {
public:
    // power_law_growth, when set, declares gamma_k ~ c k^a with the given a;
    // the convergence of sum_k beta_k^alpha / gamma_k^{1 - alpha eps} is then
    // decidable in closed form. Custom sequences only report the partial sum.
    DiagonalGenerator(std::vector<double> gammas, std::vector<double> betas,
                      StableIndex alpha, double theta, double eps,
                      std::optional<double> power_law_growth = std::nullopt);

    std::size_t modes() const { return gammas_.size(); }
    const std::vector<double>& gammas() const { return gammas_; }
    const std::vector<double>& betas() const { return betas_; }
    double alpha() const { return alpha_.alpha; }
    double theta() const { return theta_; }
    double eps() const { return eps_; }

    // Partial sum of the noise admissibility series over the retained modes.
    double admissibility_sum() const { return admissibility_sum_; }
    // Closed-form series verdict for declared power-law families.
    std::optional<bool> series_convergent() const { return series_convergent_; }
    // Largest C with beta_k >= C gamma_k^{-theta + 1/alpha} over retained modes.
    double amplitude_floor_constant() const { return amplitude_floor_; }

private:
    std::vector<double> gammas_, betas_;
    StableIndex alpha_;
    double theta_, eps_;
    double admissibility_sum_;
    std::optional<bool> series_convergent_;
    double amplitude_floor_;
};

// Dirichlet Laplacian spectrum on the unit box in dimension d with the
// matched power-law noise amplitudes beta_k = gamma_k^{-theta + 1/alpha}.
// Requires 2 alpha (theta - eps) > d, the condition under which the
// admissibility series converges.
DiagonalGenerator heat_example_config(int d, StableIndex alpha, double theta,
                                      double eps, std::size_t K);

// Full-matrix linear part for the finite-dimensional setting. All
// eigenvalues must have real part below -1e-9.
class MatrixGenerator {
public:
    explicit MatrixGenerator(Eigen::MatrixXd A);
    const Eigen::MatrixXd& matrix() const { return A_; }
    std::size_t dim() const { return static_cast<std::size_t>(A_.rows()); }
    // Slowest decay rate: -max_i Re(lambda_i), positive by construction.
    double slowest_rate() const { return slowest_rate_; }

private:
    Eigen::MatrixXd A_;
    double slowest_rate_;
};

// Bounded drift with declared regularity. sup_norm bounds |F(x)| over the
// state space; holder_constant bounds |F(x)-F(y)| / |x-y|^holder_exponent.
struct DriftSpec {
    std::function<State(const State&)> f;
    double sup_norm = 0.0;
    double holder_exponent = 1.0;
    double holder_constant = 0.0;
    std::string family = "zero";

    static DriftSpec zero(std::size_t n);
    static DriftSpec constant(State c);
    // Coordinate links through fixed unit mixing directions v_k:
    //   F_k(x) = (s/sqrt(n)) link(<v_k, x>),
    // scaled so |F(x)| <= s holds exactly for the whole vector.
    static DriftSpec tanh_family(std::size_t n, double s);
    static DriftSpec signed_power_family(std::size_t n, double s, double eta);
};

enum class Scheme { exponential_euler, euler };

// Thrown when a trajectory leaves the representable range.
class SimulationError : public std::runtime_error {
public:
    SimulationError(std::size_t step, double time);
    std::size_t step_index;
    double time;
};

// A fully validated model: linear part, drift, noise, scheme, step size.
// Construction enforces the pairing rules (exponential_euler and per-mode
// cylindrical noise require the diagonal linear part; the matrix linear part
// uses a spectral measure and the euler scheme) and the index/regularity
// constraints of the finite-dimensional setting.
class ModelSpec {
public:
    static ModelSpec galerkin(DiagonalGenerator gen, DriftSpec drift,
                              Scheme scheme, double dt);
    static ModelSpec finite(MatrixGenerator gen, SpectralMeasure noise,
                            StableIndex alpha, DriftSpec drift, double dt);

    std::size_t dim() const { return dim_; }
    double dt() const { return dt_; }
    double alpha() const { return alpha_.alpha; }
    const StableIndex& index() const { return alpha_; }
    Scheme scheme() const { return scheme_; }
    const DriftSpec& drift() const { return drift_; }
    bool is_diagonal() const { return diag_.has_value(); }
    const DiagonalGenerator& diagonal() const { return *diag_; }
    const MatrixGenerator& matrix_part() const { return *mat_; }
    const SpectralMeasure& noise_measure() const { return *noise_; }

    // Weighted norm (sum_k gamma_k^{2e} x_k^2)^{1/2}; plain Euclidean norm
    // for the matrix model and for e = 0.
    double norm_eps(const State& x, double e) const;

    // Stationary spread of the slowest mode; used to place default grids and
    // probe points (exact for the diagonal model, heuristic for the matrix
    // model).
    double state_scale() const;

    State step(const State& x, RngStream& rng) const;
    State step_deterministic(const State& x) const;
    // Pieces of the deterministic update, split for verification: the linear
    // decay applied to the state, and the drift contribution of one step.
    State decay_map(const State& x) const;
    State drift_increment(const State& x) const;

private:
    ModelSpec(StableIndex a) : alpha_(a) {}
    std::optional<DiagonalGenerator> diag_;
    std::optional<MatrixGenerator> mat_;
    std::optional<SpectralMeasure> noise_;
    StableIndex alpha_;
    DriftSpec drift_;
    Scheme scheme_ = Scheme::exponential_euler;
    double dt_ = 0.0;
    std::size_t dim_ = 0;
    // Per-mode constants frozen at construction (dt is fixed per model).
    Eigen::ArrayXd decay_, drift_gain_, conv_scale_, euler_noise_scale_;
};

struct Trajectory {
    double dt = 0.0;
    std::vector<State> states;   // states[k] is the state at time k*dt
};

// Number of steps for a horizon that must be a multiple of dt (within 1e-12
// relative); T = 0 is allowed and yields zero steps.
std::size_t steps_for(double T, double dt);

// Simulates k = T/dt steps, storing every state. Non-finite states abort
// with the offending step index.
Trajectory simulate_path(const ModelSpec& model, const State& x0, double T,
                         RngStream& rng);

// Endpoint only; same law and same draws as simulate_path.
State evolve(const ModelSpec& model, const State& x0, double T, RngStream& rng);

void write_trajectory_csv(const std::string& path, const Trajectory& traj);

} // namespace ergo

#endif
