#include "ergo/kernel.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace ergo {

Grid::Grid(std::size_t dims, std::vector<double> lo, std::vector<double> hi,
           std::size_t bins)
    : dims_(dims), bins_(bins), lo_(std::move(lo)), hi_(std::move(hi)) {
    if (dims_ == 0 || dims_ > 3)
        throw std::invalid_argument("Grid: dims must be 1, 2, or 3");
    if (bins_ == 0) throw std::invalid_argument("Grid: bins must be positive");
    if (lo_.size() != dims_ || hi_.size() != dims_)
        throw std::invalid_argument("Grid: bounds length mismatch");
    width_.resize(dims_);
    for (std::size_t a = 0; a < dims_; ++a) {
        if (!(lo_[a] < hi_[a]))
            throw std::invalid_argument("Grid: empty interval on an axis");
        width_[a] = (hi_[a] - lo_[a]) / static_cast<double>(bins_);
    }
    cells_ = 1;
    for (std::size_t a = 0; a < dims_; ++a) cells_ *= bins_;
    cells_ += 1;
}

Grid Grid::centered(std::size_t dims, double half_width, std::size_t bins) {
    if (!(half_width > 0.0))
        throw std::invalid_argument("Grid: half width must be positive");
    return Grid(dims, std::vector<double>(dims, -half_width),
                std::vector<double>(dims, half_width), bins);
}

std::size_t Grid::cell_of(const State& x) const {
    if (x.size() < static_cast<Eigen::Index>(dims_))
        throw std::invalid_argument("Grid: state has fewer coordinates than the grid");
    std::size_t idx = 0, stride = 1;
    for (std::size_t a = 0; a < dims_; ++a) {
        const double v = x[static_cast<Eigen::Index>(a)];
        if (!(v >= lo_[a]) || !(v < hi_[a])) return overflow_cell();
        auto b = static_cast<std::size_t>((v - lo_[a]) / width_[a]);
        if (b >= bins_) b = bins_ - 1;
        idx += stride * b;
        stride *= bins_;
    }
    return idx;
}

State Grid::center_state(std::size_t cell, std::size_t state_dim) const {
    if (cell >= overflow_cell())
        throw std::invalid_argument("Grid: overflow cell has no center");
    if (state_dim < dims_)
        throw std::invalid_argument("Grid: state has fewer coordinates than the grid");
    State x = State::Zero(static_cast<Eigen::Index>(state_dim));
    std::size_t rest = cell;
    for (std::size_t a = 0; a < dims_; ++a) {
        const std::size_t b = rest % bins_;
        rest /= bins_;
        x[static_cast<Eigen::Index>(a)] =
            lo_[a] + (static_cast<double>(b) + 0.5) * width_[a];
    }
    return x;
}

bool Grid::operator==(const Grid& other) const {
    return dims_ == other.dims_ && bins_ == other.bins_ && lo_ == other.lo_ &&
           hi_ == other.hi_;
}

EmpiricalKernel EmpiricalKernel::from_samples(Grid grid, State origin,
                                              double horizon,
                                              const std::vector<State>& samples) {
    if (samples.empty())
        throw std::invalid_argument("EmpiricalKernel: no samples");
    EmpiricalKernel k{std::move(grid), std::move(origin), horizon, {}, samples.size()};
    std::vector<std::size_t> counts(k.grid.cells(), 0);
    for (const auto& s : samples) ++counts[k.grid.cell_of(s)];
    k.weights.resize(counts.size());
    const double n = static_cast<double>(samples.size());
    for (std::size_t c = 0; c < counts.size(); ++c)
        k.weights[c] = static_cast<double>(counts[c]) / n;
    return k;
}

void write_kernel_json(const std::string& path, const EmpiricalKernel& k) {
    nlohmann::json j;
    j["grid"] = {{"dims", k.grid.dims()},
                 {"bins", k.grid.bins()},
                 {"lo", k.grid.lo()},
                 {"hi", k.grid.hi()}};
    j["origin"] = std::vector<double>(k.origin.data(), k.origin.data() + k.origin.size());
    j["horizon"] = k.horizon;
    j["weights"] = k.weights;
    j["sample_count"] = k.sample_count;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << "\n";
}

std::vector<State> sample_endpoints(const ModelSpec& model, const State& x,
                                    double T, std::size_t n,
                                    std::uint64_t root, unsigned workers) {
    if (n == 0) throw std::invalid_argument("sample_endpoints: need at least one draw");
    std::vector<State> out(n);
    parallel_for(n, workers, [&](std::size_t i) {
        RngStream s = stream_at(root, i);
        out[i] = evolve(model, x, T, s);
    });
    return out;
}

EmpiricalKernel estimate_kernel(const ModelSpec& model, const State& x,
                                double T, std::size_t n, const Grid& grid,
                                std::uint64_t root, unsigned workers) {
    return EmpiricalKernel::from_samples(
        grid, x, T, sample_endpoints(model, x, T, n, root, workers));
}

namespace {
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

double tv_discrete(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size())
        throw std::invalid_argument("tv_discrete: length mismatch");
    if (p.empty()) throw std::invalid_argument("tv_discrete: empty input");
    check_prob_vector(p, "tv_discrete");
    check_prob_vector(q, "tv_discrete");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

double tv_noise_scale(const std::vector<double>& p, const std::vector<double>& q,
                      std::size_t n1, std::size_t n2) {
    if (p.size() != q.size())
        throw std::invalid_argument("tv_noise_scale: length mismatch");
    if (n1 == 0 || n2 == 0)
        throw std::invalid_argument("tv_noise_scale: sample counts must be positive");
    const double c = std::sqrt(2.0 / std::numbers::pi);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double var = p[i] * (1.0 - p[i]) / static_cast<double>(n1) +
                           q[i] * (1.0 - q[i]) / static_cast<double>(n2);
        s += std::sqrt(var);
    }
    return 0.5 * c * s;
}

GradientEstimate gradient_probe(const ModelSpec& model,
                                const std::function<double(const State&)>& f,
                                const State& x, const State& y, double T,
                                std::size_t n, std::uint64_t root,
                                unsigned workers) {
    const double sep = (x - y).norm();
    if (!(sep > 0.0))
        throw std::invalid_argument("gradient_probe: probe points must differ");
    std::vector<double> diffs(n);
    parallel_for(n, workers, [&](std::size_t i) {
        RngStream sx = stream_at(root, i);
        RngStream sy = stream_at(root, i);      // common random numbers
        diffs[i] = f(evolve(model, x, T, sx)) - f(evolve(model, y, T, sy));
    });
    const MeanSE d = mean_se(diffs);
    GradientEstimate g;
    g.horizon = T;
    g.ratio = std::abs(d.mean) / sep;
    g.se = d.se / sep;
    g.reliable = std::abs(d.mean) > d.se;
    return g;
}

std::vector<GradientEstimate> gradient_scan(
    const ModelSpec& model, const std::function<double(const State&)>& f,
    const State& x, const State& y, const std::vector<double>& horizons,
    std::size_t n, std::uint64_t root, unsigned workers) {
    std::vector<GradientEstimate> out;
    out.reserve(horizons.size());
    for (std::size_t t = 0; t < horizons.size(); ++t)
        out.push_back(gradient_probe(model, f, x, y, horizons[t], n,
                                     derive_root(root, t), workers));
    return out;
}

HitFrequency irreducibility_probe(const ModelSpec& model, const State& x,
                                  double T, const State& center, double radius,
                                  std::size_t n, std::uint64_t root,
                                  unsigned workers) {
    if (!(radius > 0.0))
        throw std::invalid_argument("irreducibility_probe: radius must be positive");
    if (center.size() != static_cast<Eigen::Index>(model.dim()))
        throw std::invalid_argument("irreducibility_probe: center dimension mismatch");
    std::vector<std::uint8_t> hit(n);
    parallel_for(n, workers, [&](std::size_t i) {
        RngStream s = stream_at(root, i);
        hit[i] = ((evolve(model, x, T, s) - center).norm() <= radius) ? 1 : 0;
    });
    HitFrequency h;
    h.n = n;
    for (auto b : hit) h.hits += b;
    h.frequency = static_cast<double>(h.hits) / static_cast<double>(n);
    const WilsonInterval w = wilson_interval(h.hits, h.n, 3.0);
    h.wilson_lower = w.lower;
    h.wilson_upper = w.upper;
    return h;
}

MeanSE moment_probe(const ModelSpec& model, const State& x, double T, double p,
                    double e, std::size_t n, std::uint64_t root,
                    unsigned workers) {
    if (p < 0.0) throw std::invalid_argument("moment_probe: order must be nonnegative");
    if (p >= model.alpha())
        throw std::invalid_argument("moment_probe: moment may be infinite");
    std::vector<double> vals(n);
    parallel_for(n, workers, [&](std::size_t i) {
        RngStream s = stream_at(root, i);
        vals[i] = std::pow(model.norm_eps(evolve(model, x, T, s), e), p);
    });
    return mean_se(vals);
}

} // namespace ergo
