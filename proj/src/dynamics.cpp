#include "ergo/dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "ergo/stats.hpp"

namespace ergo {

DiagonalGenerator::DiagonalGenerator(std::vector<double> gammas,
                                     std::vector<double> betas,
                                     StableIndex alpha, double theta, double eps,
                                     std::optional<double> power_law_growth)
    : gammas_(std::move(gammas)), betas_(std::move(betas)), alpha_(alpha),
      theta_(theta), eps_(eps) {
    if (gammas_.empty() || gammas_.size() != betas_.size())
        throw std::invalid_argument("DiagonalGenerator: gamma/beta length mismatch");
    for (std::size_t k = 0; k < gammas_.size(); ++k) {
        if (!(gammas_[k] > 0.0))
            throw std::invalid_argument("DiagonalGenerator: decay rates must be positive");
        if (k > 0 && gammas_[k] < gammas_[k - 1])
            throw std::invalid_argument("DiagonalGenerator: decay rates must be nondecreasing");
        if (!(betas_[k] > 0.0))
            throw std::invalid_argument("DiagonalGenerator: noise amplitudes must be positive");
    }
    if (!(theta > 0.0 && theta < 1.0))
        throw std::invalid_argument("DiagonalGenerator: theta must lie in (0,1)");
    if (!(eps > 0.0 && eps < 1.0))
        throw std::invalid_argument("DiagonalGenerator: eps must lie in (0,1)");

    const double a = alpha_.alpha;
    admissibility_sum_ = 0.0;
    amplitude_floor_ = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < gammas_.size(); ++k) {
        admissibility_sum_ +=
            std::pow(betas_[k], a) / std::pow(gammas_[k], 1.0 - a * eps_);
        amplitude_floor_ = std::min(
            amplitude_floor_, betas_[k] * std::pow(gammas_[k], theta_ - 1.0 / a));
    }
    if (power_law_growth) {
        // Terms behave like k^{-g a (theta - eps)}; the series converges
        // exactly when that exponent exceeds 1.
        series_convergent_ = (*power_law_growth) * a * (theta_ - eps_) > 1.0;
    }
}

DiagonalGenerator heat_example_config(int d, StableIndex alpha, double theta,
                                      double eps, std::size_t K) {
    if (d < 1 || d > 3)
        throw std::invalid_argument("heat_example_config: d must be 1, 2, or 3");
    if (K == 0) throw std::invalid_argument("heat_example_config: K must be positive");
    if (!(2.0 * alpha.alpha * (theta - eps) > static_cast<double>(d)))
        throw std::invalid_argument(
            "heat_example_config: need 2*alpha*(theta-eps) > d for an admissible noise");

    // Eigenvalues pi^2 |m|^2 over positive multi-indices m, sorted ascending.
    std::vector<double> eigs;
    const int side = static_cast<int>(std::ceil(std::pow(
                         static_cast<double>(K), 1.0 / static_cast<double>(d)))) + 2;
    std::vector<int> m(static_cast<std::size_t>(d), 1);
    const double pi2 = std::numbers::pi * std::numbers::pi;
    std::function<void(int)> walk = [&](int axis) {
        if (axis == d) {
            double s = 0.0;
            for (int c : m) s += static_cast<double>(c) * c;
            eigs.push_back(pi2 * s);
            return;
        }
        for (int v = 1; v <= side; ++v) {
            m[static_cast<std::size_t>(axis)] = v;
            walk(axis + 1);
        }
    };
    walk(0);
    std::sort(eigs.begin(), eigs.end());
    eigs.resize(K);

    std::vector<double> betas(K);
    for (std::size_t k = 0; k < K; ++k)
        betas[k] = std::pow(eigs[k], -theta + 1.0 / alpha.alpha);
    return DiagonalGenerator(std::move(eigs), std::move(betas), alpha, theta, eps,
                             2.0 / static_cast<double>(d));
}

MatrixGenerator::MatrixGenerator(Eigen::MatrixXd A) : A_(std::move(A)) {
    if (A_.rows() == 0 || A_.rows() != A_.cols())
        throw std::invalid_argument("MatrixGenerator: matrix must be square and nonempty");
    Eigen::EigenSolver<Eigen::MatrixXd> es(A_, /*computeEigenvectors=*/false);
    const double max_re = es.eigenvalues().real().maxCoeff();
    if (!(max_re < -1e-9))
        throw std::invalid_argument("MatrixGenerator: eigenvalues must have strictly negative real part");
    slowest_rate_ = -max_re;
}

namespace {

// Fixed unit mixing directions for the built-in drift links: rows of V are
// deterministic quasi-random unit vectors, the same for every run.
Eigen::MatrixXd mixing_directions(std::size_t n) {
    Eigen::MatrixXd V(n, n);
    const double phi = 1.6180339887498949;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < n; ++j)
            V(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
                std::sin(phi * static_cast<double>((k + 1) * (j + 1)));
        const double nrm = V.row(static_cast<Eigen::Index>(k)).norm();
        if (nrm > 0) V.row(static_cast<Eigen::Index>(k)) /= nrm;
    }
    return V;
}

} // namespace

DriftSpec DriftSpec::zero(std::size_t n) {
    DriftSpec d;
    d.f = [n](const State&) { return State::Zero(static_cast<Eigen::Index>(n)).eval(); };
    d.sup_norm = 0.0;
    d.holder_exponent = 1.0;
    d.holder_constant = 0.0;
    d.family = "zero";
    return d;
}

DriftSpec DriftSpec::constant(State c) {
    DriftSpec d;
    d.sup_norm = c.norm();
    d.f = [c = std::move(c)](const State&) { return c; };
    d.holder_exponent = 1.0;
    d.holder_constant = 0.0;
    d.family = "constant";
    return d;
}

DriftSpec DriftSpec::tanh_family(std::size_t n, double s) {
    if (!(s >= 0.0)) throw std::invalid_argument("DriftSpec: sup norm must be nonnegative");
    DriftSpec d;
    const double scale = s / std::sqrt(static_cast<double>(n));
    d.f = [V = mixing_directions(n), scale](const State& x) {
        return State((V * x).array().tanh() * scale);
    };
    d.sup_norm = s;
    d.holder_exponent = 1.0;
    d.holder_constant = s;
    d.family = "tanh";
    return d;
}

DriftSpec DriftSpec::signed_power_family(std::size_t n, double s, double eta) {
    if (!(s >= 0.0)) throw std::invalid_argument("DriftSpec: sup norm must be nonnegative");
    if (!(eta > 0.0 && eta <= 1.0))
        throw std::invalid_argument("DriftSpec: exponent must lie in (0,1]");
    DriftSpec d;
    const double scale = s / std::sqrt(static_cast<double>(n));
    d.f = [V = mixing_directions(n), scale, eta](const State& x) {
        State u = V * x;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double sv = std::sin(u[i]);
            u[i] = scale * std::copysign(std::pow(std::abs(sv), eta), sv);
        }
        return u;
    };
    d.sup_norm = s;
    d.holder_exponent = eta;
    d.holder_constant = s * std::pow(2.0, 1.0 - eta);
    d.family = "signed_power";
    return d;
}

SimulationError::SimulationError(std::size_t step, double t)
    : std::runtime_error("non-finite state at step " + std::to_string(step) +
                         " (t = " + format_double(t) + ")"),
      step_index(step), time(t) {}

ModelSpec ModelSpec::galerkin(DiagonalGenerator gen, DriftSpec drift,
                              Scheme scheme, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("ModelSpec: dt must be positive");
    if (!drift.f) throw std::invalid_argument("ModelSpec: drift evaluator missing");
    if (drift.holder_exponent != 1.0)
        throw std::invalid_argument("ModelSpec: the per-mode noise setting requires a Lipschitz drift");

    ModelSpec m{StableIndex(gen.alpha())};
    m.dim_ = gen.modes();
    m.scheme_ = scheme;
    m.dt_ = dt;
    const auto n = static_cast<Eigen::Index>(gen.modes());
    m.decay_.resize(n);
    m.drift_gain_.resize(n);
    m.conv_scale_.resize(n);
    m.euler_noise_scale_.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double g = gen.gammas()[static_cast<std::size_t>(k)];
        const double b = gen.betas()[static_cast<std::size_t>(k)];
        m.decay_[k] = std::exp(-g * dt);
        m.drift_gain_[k] = -std::expm1(-g * dt) / g;
        m.conv_scale_[k] = ou_scale(g, b, m.alpha_, dt);
        m.euler_noise_scale_[k] = b * std::pow(dt, 1.0 / m.alpha_.alpha);
    }
    m.diag_ = std::move(gen);
    m.drift_ = std::move(drift);
    return m;
}

ModelSpec ModelSpec::finite(MatrixGenerator gen, SpectralMeasure noise,
                            StableIndex alpha, DriftSpec drift, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("ModelSpec: dt must be positive");
    if (!drift.f) throw std::invalid_argument("ModelSpec: drift evaluator missing");
    if (noise.dim() != gen.dim())
        throw std::invalid_argument("ModelSpec: noise dimension mismatch");
    if (!(alpha.alpha > 1.0))
        throw std::invalid_argument("ModelSpec: the finite-dimensional setting requires index above 1");
    if (!(drift.holder_exponent > 1.0 - alpha.alpha / 2.0))
        throw std::invalid_argument("ModelSpec: drift exponent too low for this index");

    ModelSpec m{alpha};
    m.dim_ = gen.dim();
    m.scheme_ = Scheme::euler;
    m.dt_ = dt;
    m.mat_ = std::move(gen);
    m.noise_ = std::move(noise);
    m.drift_ = std::move(drift);
    return m;
}

double ModelSpec::norm_eps(const State& x, double e) const {
    if (x.size() != static_cast<Eigen::Index>(dim_))
        throw std::invalid_argument("norm_eps: dimension mismatch");
    if (e == 0.0 || !diag_) return x.norm();
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double w = std::pow(diag_->gammas()[static_cast<std::size_t>(k)], e);
        s += w * w * x[k] * x[k];
    }
    return std::sqrt(s);
}

double ModelSpec::state_scale() const {
    const double a = alpha_.alpha;
    if (diag_) {
        const double g = diag_->gammas()[0], b = diag_->betas()[0];
        return b * std::pow(1.0 / (a * g), 1.0 / a);
    }
    // Heuristic for the matrix model: stationary scale of a scalar mode at
    // the slowest rate driven by the largest coordinate exponent.
    double psi = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        std::vector<double> e(dim_, 0.0);
        e[i] = 1.0;
        psi = std::max(psi, noise_->stability_exponent(e, a));
    }
    return std::pow(psi / (a * mat_->slowest_rate()), 1.0 / a);
}

State ModelSpec::decay_map(const State& x) const {
    if (diag_) {
        if (scheme_ == Scheme::exponential_euler)
            return State(x.array() * decay_);
        State out = x;
        for (Eigen::Index k = 0; k < x.size(); ++k)
            out[k] -= diag_->gammas()[static_cast<std::size_t>(k)] * x[k] * dt_;
        return out;
    }
    return x + dt_ * (mat_->matrix() * x);
}

State ModelSpec::drift_increment(const State& x) const {
    if (diag_ && scheme_ == Scheme::exponential_euler)
        return State(drift_.f(x).array() * drift_gain_);
    return dt_ * drift_.f(x);
}

State ModelSpec::step_deterministic(const State& x) const {
    return decay_map(x) + drift_increment(x);
}

State ModelSpec::step(const State& x, RngStream& rng) const {
    State next = step_deterministic(x);
    if (diag_) {
        const bool exact_conv = (scheme_ == Scheme::exponential_euler);
        for (Eigen::Index k = 0; k < next.size(); ++k) {
            const double xi = sample_standard_stable(alpha_, rng);
            next[k] += (exact_conv ? conv_scale_[k] : euler_noise_scale_[k]) * xi;
        }
        return next;
    }
    const std::vector<double> z = sample_spectral_increment(*noise_, alpha_, dt_, rng);
    for (Eigen::Index k = 0; k < next.size(); ++k)
        next[k] += z[static_cast<std::size_t>(k)];
    return next;
}

std::size_t steps_for(double T, double dt) {
    if (T < 0.0) throw std::invalid_argument("horizon must be nonnegative");
    const double k = std::round(T / dt);
    if (std::abs(T - k * dt) > 1e-12 * std::max(1.0, std::abs(T)))
        throw std::invalid_argument("horizon must be a multiple of dt");
    return static_cast<std::size_t>(k);
}

Trajectory simulate_path(const ModelSpec& model, const State& x0, double T,
                         RngStream& rng) {
    if (x0.size() != static_cast<Eigen::Index>(model.dim()))
        throw std::invalid_argument("simulate_path: state dimension mismatch");
    const std::size_t n = steps_for(T, model.dt());
    Trajectory traj;
    traj.dt = model.dt();
    traj.states.reserve(n + 1);
    traj.states.push_back(x0);
    for (std::size_t k = 0; k < n; ++k) {
        State next = model.step(traj.states.back(), rng);
        if (!next.allFinite())
            throw SimulationError(k + 1, static_cast<double>(k + 1) * model.dt());
        traj.states.push_back(std::move(next));
    }
    return traj;
}

State evolve(const ModelSpec& model, const State& x0, double T, RngStream& rng) {
    if (x0.size() != static_cast<Eigen::Index>(model.dim()))
        throw std::invalid_argument("evolve: state dimension mismatch");
    const std::size_t n = steps_for(T, model.dt());
    State x = x0;
    for (std::size_t k = 0; k < n; ++k) {
        x = model.step(x, rng);
        if (!x.allFinite())
            throw SimulationError(k + 1, static_cast<double>(k + 1) * model.dt());
    }
    return x;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t";
    const auto dim = traj.states.empty() ? 0 : traj.states.front().size();
    for (Eigen::Index k = 0; k < dim; ++k) out << ",x_" << (k + 1);
    out << "\n";
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        out << format_double(static_cast<double>(i) * traj.dt);
        for (Eigen::Index k = 0; k < dim; ++k)
            out << "," << format_double(traj.states[i][k]);
        out << "\n";
    }
}

} // namespace ergo
