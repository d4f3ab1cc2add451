#include "ergo/stable.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ergo {

namespace {
constexpr double kUnitTol = 1e-12;
constexpr double kOverflowGuard = 1e12;
}

StableIndex::StableIndex(double a) : alpha(a) {
    if (!(a > 0.0) || !(a < 2.0))
        throw std::invalid_argument("StableIndex: index out of range");
}

SpectralMeasure::SpectralMeasure(std::size_t dim, std::vector<Atom> atoms)
    : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("SpectralMeasure: dimension must be positive");
    if (atoms.empty()) throw std::invalid_argument("SpectralMeasure: no atoms");
    for (const auto& a : atoms) {
        if (a.direction.size() != dim)
            throw std::invalid_argument("SpectralMeasure: direction dimension mismatch");
        double n2 = 0.0;
        for (double c : a.direction) n2 += c * c;
        if (std::abs(std::sqrt(n2) - 1.0) > kUnitTol)
            throw std::invalid_argument("SpectralMeasure: direction not unit length");
        if (!(a.weight > 0.0))
            throw std::invalid_argument("SpectralMeasure: weight must be positive");
    }

    // Symmetrize: each direction must carry the same weight as its mirror.
    // Missing mirrors are added; conflicting weights are an input error.
    auto mirror_index = [&](std::size_t i) -> std::ptrdiff_t {
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            if (j == i) continue;
            double dot = 0.0;
            for (std::size_t c = 0; c < dim; ++c)
                dot += atoms[i].direction[c] * atoms[j].direction[c];
            if (dot < -1.0 + 1e-9) {
                double dist2 = 0.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    const double d = atoms[i].direction[c] + atoms[j].direction[c];
                    dist2 += d * d;
                }
                if (dist2 < 1e-18) return static_cast<std::ptrdiff_t>(j);
            }
        }
        return -1;
    };
    std::vector<Atom> full;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const auto j = mirror_index(i);
        if (j >= 0 && std::abs(atoms[static_cast<std::size_t>(j)].weight - atoms[i].weight) > kUnitTol)
            throw std::invalid_argument("SpectralMeasure: asymmetric weights on a direction pair");
        full.push_back(atoms[i]);
        if (j < 0) {
            Atom m = atoms[i];
            for (double& c : m.direction) c = -c;
            full.push_back(m);
        }
    }
    atoms_ = std::move(full);
    total_weight_ = 0.0;
    for (const auto& a : atoms_) total_weight_ += a.weight;

    // Span check by Gram-Schmidt rank of the direction set.
    std::vector<std::vector<double>> basis;
    for (const auto& a : atoms_) {
        std::vector<double> v = a.direction;
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t c = 0; c < dim; ++c) dot += v[c] * b[c];
            for (std::size_t c = 0; c < dim; ++c) v[c] -= dot * b[c];
        }
        double n2 = 0.0;
        for (double c : v) n2 += c * c;
        if (n2 > 1e-20) {
            const double n = std::sqrt(n2);
            for (double& c : v) c /= n;
            basis.push_back(std::move(v));
            if (basis.size() == dim) break;
        }
    }
    if (basis.size() < dim)
        throw std::invalid_argument("SpectralMeasure: degenerate spectral measure");
}

double SpectralMeasure::stability_exponent(const std::vector<double>& u, double alpha) const {
    if (u.size() != dim_)
        throw std::invalid_argument("SpectralMeasure: vector dimension mismatch");
    double s = 0.0;
    for (const auto& a : atoms_) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dim_; ++c) dot += u[c] * a.direction[c];
        s += a.weight * std::pow(std::abs(dot), alpha);
    }
    return s;
}

double sample_standard_stable(const StableIndex& alpha, RngStream& rng) {
    const double a = alpha.alpha;
    for (;;) {
        const double v = std::numbers::pi * (rng.uniform() - 0.5);
        const double w = -std::log(rng.uniform());
        // Chambers-Mallows-Stuck, symmetric case; continuous in a at a = 1
        // where the expression reduces to tan(v).
        double x;
        if (a == 1.0) {
            x = std::tan(v);
        } else {
            x = std::sin(a * v) / std::pow(std::cos(v), 1.0 / a) *
                std::pow(std::cos((1.0 - a) * v) / w, (1.0 - a) / a);
        }
        if (std::abs(x) <= kOverflowGuard && std::isfinite(x)) return x;
        ++rng.resamples;
    }
}

std::vector<double> sample_spectral_increment(const SpectralMeasure& mu,
                                              const StableIndex& alpha,
                                              double dt, RngStream& rng) {
    if (!(dt > 0.0)) throw std::invalid_argument("sample_spectral_increment: dt must be positive");
    std::vector<double> z(mu.dim(), 0.0);
    for (const auto& a : mu.atoms()) {
        const double sigma = std::pow(dt * a.weight, 1.0 / alpha.alpha);
        const double xi = sigma * sample_standard_stable(alpha, rng);
        for (std::size_t c = 0; c < z.size(); ++c) z[c] += xi * a.direction[c];
    }
    return z;
}

double ou_scale(double gamma, double beta, const StableIndex& alpha, double t) {
    if (!(gamma > 0.0)) throw std::invalid_argument("ou_scale: gamma must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("ou_scale: beta must be positive");
    if (t < 0.0) throw std::invalid_argument("ou_scale: t must be nonnegative");
    if (t == 0.0) return 0.0;
    const double ag = alpha.alpha * gamma;
    return beta * std::pow(-std::expm1(-ag * t) / ag, 1.0 / alpha.alpha);
}

double sample_ou_marginal(double gamma, double beta, const StableIndex& alpha,
                          double t, RngStream& rng) {
    const double c = ou_scale(gamma, beta, alpha, t);
    if (c == 0.0) return 0.0;
    return c * sample_standard_stable(alpha, rng);
}

} // namespace ergo
