#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ergo/kernel.hpp"
#include "oracles.hpp"

using namespace ergo;

namespace {

ModelSpec scalar_ou(double gamma = 1.0, double beta = 1.0, double alpha = 1.5,
                    double dt = 0.01) {
    DiagonalGenerator gen({gamma}, {beta}, StableIndex(alpha), 0.5, 0.1);
    return ModelSpec::galerkin(std::move(gen), DriftSpec::zero(1),
                               Scheme::exponential_euler, dt);
}

State scalar(double v) {
    State x(1);
    x[0] = v;
    return x;
}

} // namespace

TEST_CASE("grid geometry and cell round trip") {
    const Grid g(1, {-2.0}, {2.0}, 4);
    CHECK(g.cells() == 5);
    CHECK(g.overflow_cell() == 4);
    CHECK(g.cell_of(scalar(-1.5)) == 0);
    CHECK(g.cell_of(scalar(0.5)) == 2);
    CHECK(g.cell_of(scalar(-2.0)) == 0);
    CHECK(g.cell_of(scalar(5.0)) == g.overflow_cell());
    CHECK(g.cell_of(scalar(-2.5)) == g.overflow_cell());
    const State c0 = g.center_state(0, 3);
    CHECK(c0.size() == 3);
    CHECK(c0[0] == doctest::Approx(-1.5).epsilon(1e-14));
    CHECK(c0[1] == 0.0);
    CHECK_THROWS_AS(g.center_state(g.overflow_cell(), 3), std::invalid_argument);

    // Extra state coordinates beyond the grid axes are ignored for binning.
    State deep(3);
    deep << 0.5, 100.0, -7.0;
    CHECK(g.cell_of(deep) == 2);

    for (std::size_t d : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
        const Grid gd = Grid::centered(d, 1.5, 3);
        for (std::size_t c = 0; c + 1 < gd.cells(); ++c)
            CHECK(gd.cell_of(gd.center_state(c, d)) == c);
    }

    CHECK(Grid::centered(2, 3.0, 8) == Grid(2, {-3.0, -3.0}, {3.0, 3.0}, 8));
    CHECK(!(Grid::centered(2, 3.0, 8) == Grid::centered(2, 3.0, 4)));
    CHECK(!(Grid::centered(2, 3.0, 8) == Grid::centered(1, 3.0, 8)));

    CHECK_THROWS_AS(Grid(0, {}, {}, 4), std::invalid_argument);
    CHECK_THROWS_AS(Grid(4, {0, 0, 0, 0}, {1, 1, 1, 1}, 4), std::invalid_argument);
    CHECK_THROWS_AS(Grid(1, {1.0}, {1.0}, 4), std::invalid_argument);
    CHECK_THROWS_AS(Grid(1, {0.0}, {1.0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(Grid(2, {0.0}, {1.0, 1.0}, 4), std::invalid_argument);
}

TEST_CASE("histograms from hand-placed samples") {
    const Grid g(1, {-2.0}, {2.0}, 4);
    std::vector<State> samples;
    for (double v : {-1.5, -0.5, -0.5, 0.5, 1.5, 5.0})
        samples.push_back(scalar(v));
    const EmpiricalKernel k =
        EmpiricalKernel::from_samples(g, scalar(0.25), 0.75, samples);
    CHECK(k.sample_count == 6);
    CHECK(k.origin[0] == 0.25);
    CHECK(k.horizon == 0.75);
    const std::vector<double> want{1.0 / 6, 2.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(k.weights[i] == want[i]);
    CHECK_THROWS_AS(EmpiricalKernel::from_samples(g, scalar(0.0), 0.75, {}),
                    std::invalid_argument);
}

TEST_CASE("discrete total variation identities") {
    CHECK(tv_discrete({1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}) == 1.0);
    CHECK(tv_discrete({0.25, 0.75}, {0.25, 0.75}) == 0.0);
    CHECK(tv_discrete({0.5, 0.5, 0.0}, {0.25, 0.25, 0.5}) == 0.5);
    CHECK_THROWS_AS(tv_discrete({1.0}, {0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(tv_discrete({0.9}, {1.0}), std::invalid_argument);

    // Symmetry and triangle inequality, exact on dyadic masses.
    RngStream rng = stream_at(17, 0);
    auto dyadic = [&](std::size_t cells) {
        std::vector<std::uint64_t> raw(cells);
        std::uint64_t tot = 0;
        for (auto& r : raw) tot += (r = rng.next_u64() % 64);
        std::vector<double> p(cells);
        if (tot == 0) { p[0] = 1.0; return p; }
        for (std::size_t i = 0; i < cells; ++i)
            p[i] = static_cast<double>(raw[i]) / static_cast<double>(tot);
        return p;
    };
    for (int it = 0; it < 50; ++it) {
        const auto p = dyadic(8), q = dyadic(8), r = dyadic(8);
        CHECK(tv_discrete(p, q) == tv_discrete(q, p));
        CHECK(tv_discrete(p, r) <= tv_discrete(p, q) + tv_discrete(q, r) + 1e-15);
    }
}

TEST_CASE("histogram noise envelope") {
    CHECK(tv_noise_scale({0.5, 0.5}, {0.5, 0.5}, 100, 100) ==
          doctest::Approx(0.05641895835477563).epsilon(1e-15));
    // Scales like 1/sqrt(n) and vanishes on point masses.
    CHECK(tv_noise_scale({0.5, 0.5}, {0.5, 0.5}, 400, 400) ==
          doctest::Approx(0.05641895835477563 / 2.0).epsilon(1e-12));
    CHECK(tv_noise_scale({1.0, 0.0}, {1.0, 0.0}, 50, 50) == 0.0);
    CHECK_THROWS_AS(tv_noise_scale({1.0}, {0.5, 0.5}, 10, 10), std::invalid_argument);
    CHECK_THROWS_AS(tv_noise_scale({1.0}, {1.0}, 0, 10), std::invalid_argument);
}

TEST_CASE("endpoint sampling is worker-invariant and stream-addressed") {
    const ModelSpec m = scalar_ou();
    const std::size_t n = 200;
    const auto s1 = sample_endpoints(m, scalar(1.0), 0.3, n, 99, 1);
    const auto s3 = sample_endpoints(m, scalar(1.0), 0.3, n, 99, 3);
    REQUIRE(s1.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(s1[i][0] == s3[i][0]);
    // Draw i replays the indexed stream exactly.
    for (std::size_t i : {std::size_t{0}, std::size_t{7}, std::size_t{199}}) {
        RngStream r = stream_at(99, i);
        CHECK(s1[i][0] == evolve(m, scalar(1.0), 0.3, r)[0]);
    }

    const Grid g = Grid::centered(1, 4.0, 16);
    const EmpiricalKernel k1 = estimate_kernel(m, scalar(1.0), 0.3, n, g, 99, 1);
    const EmpiricalKernel k3 = estimate_kernel(m, scalar(1.0), 0.3, n, g, 99, 3);
    for (std::size_t c = 0; c < g.cells(); ++c) CHECK(k1.weights[c] == k3.weights[c]);
}

TEST_CASE("binned endpoint law matches the quadrature reference") {
    const ModelSpec m = scalar_ou();
    const double T = 0.4, x0 = 1.0;
    const double mean = std::exp(-T) * x0;
    const double c = ou_scale(1.0, 1.0, m.index(), T);
    const oracle::StableCdf F(1.5);
    const std::size_t n = 40000;
    const Grid g(1, {-3.0}, {3.0}, 24);
    const EmpiricalKernel k = estimate_kernel(m, scalar(x0), T, n, g, 301);
    const std::vector<double> exact =
        oracle::binned_masses_1d(F, mean, c, -3.0, 3.0, 24);
    REQUIRE(exact.size() == k.weights.size());
    const double noise = tv_noise_scale(k.weights, exact, n, n * 1000000);
    CHECK(oracle::half_l1(k.weights, exact) <= 3.0 * noise);
}

TEST_CASE("two half-horizon runs compose to the full-horizon law") {
    const ModelSpec m = scalar_ou();
    const std::size_t n = 30000;
    const Grid g = Grid::centered(1, 4.0, 24);
    const EmpiricalKernel direct = estimate_kernel(m, scalar(2.0), 0.8, n, g, 401);
    const auto mid = sample_endpoints(m, scalar(2.0), 0.4, n, 402);
    std::vector<State> second(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream r = stream_at(403, i);
        second[i] = evolve(m, mid[i], 0.4, r);
    }
    const EmpiricalKernel twostage =
        EmpiricalKernel::from_samples(g, scalar(2.0), 0.8, second);
    const double tv = tv_discrete(direct.weights, twostage.weights);
    CHECK(tv <= 3.0 * tv_noise_scale(direct.weights, twostage.weights, n, n));
}

TEST_CASE("binning contracts distance and coarsening never increases it") {
    const ModelSpec m = scalar_ou();
    const double T = 0.4;
    const double c = ou_scale(1.0, 1.0, m.index(), T);
    const oracle::StableCdf F(1.5);
    const std::size_t n = 40000;
    const Grid fine = Grid::centered(1, 4.0, 64);
    const Grid coarse = Grid::centered(1, 4.0, 16);

    const auto sx = sample_endpoints(m, scalar(0.0), T, n, 501);
    const auto sy = sample_endpoints(m, scalar(1.0), T, n, 502);
    const EmpiricalKernel fx = EmpiricalKernel::from_samples(fine, scalar(0.0), T, sx);
    const EmpiricalKernel fy = EmpiricalKernel::from_samples(fine, scalar(1.0), T, sy);
    const EmpiricalKernel cx = EmpiricalKernel::from_samples(coarse, scalar(0.0), T, sx);
    const EmpiricalKernel cy = EmpiricalKernel::from_samples(coarse, scalar(1.0), T, sy);

    const double tv_fine = tv_discrete(fx.weights, fy.weights);
    const double tv_coarse = tv_discrete(cx.weights, cy.weights);
    // Coarse cells are unions of fine cells of the same sample sets.
    CHECK(tv_coarse <= tv_fine + 1e-12);

    // Exact law distance: same scale, shifted mean.
    const double tv_exact = oracle::tv_same_scale(F, 0.0, std::exp(-T), c);
    const double noise = tv_noise_scale(fx.weights, fy.weights, n, n);
    CHECK(tv_fine <= tv_exact + 3.0 * noise);
    CHECK(tv_fine >= tv_exact - 0.05 - 3.0 * noise);
}

TEST_CASE("kernel distance shrinks with the start separation") {
    const ModelSpec m = scalar_ou();
    const double T = 0.4;
    const double c = ou_scale(1.0, 1.0, m.index(), T);
    const oracle::StableCdf F(1.5);
    const std::size_t n = 20000;
    const Grid g = Grid::centered(1, 4.0, 64);
    double prev = 1.0;
    int step = 0;
    for (double h : {1.0, 0.5, 0.25, 0.125}) {
        const EmpiricalKernel kx =
            estimate_kernel(m, scalar(0.0), T, n, g, 601 + step);
        const EmpiricalKernel ky =
            estimate_kernel(m, scalar(h), T, n, g, 651 + step);
        ++step;
        const double tv = tv_discrete(kx.weights, ky.weights);
        const double noise = tv_noise_scale(kx.weights, ky.weights, n, n);
        CHECK(tv <= oracle::tv_same_scale(F, 0.0, h * std::exp(-T), c) + 3.0 * noise);
        CHECK(tv <= prev + 3.0 * noise);
        prev = tv;
    }
}

TEST_CASE("finite-difference smoothing probe against the analytic ratio") {
    const ModelSpec m = scalar_ou();
    const double T = 0.5, x0 = 2.0, y0 = 2.1;
    const double c = ou_scale(1.0, 1.0, m.index(), T);
    const double exact = std::exp(-std::pow(c, 1.5)) *
                         std::abs(std::cos(std::exp(-T) * x0) -
                                  std::cos(std::exp(-T) * y0)) /
                         (y0 - x0);
    auto f = [](const State& s) { return std::cos(s[0]); };
    const GradientEstimate g =
        gradient_probe(m, f, scalar(x0), scalar(y0), T, 20000, 701);
    CHECK(g.horizon == T);
    CHECK(g.reliable);
    CHECK(std::abs(g.ratio - exact) <= 3.0 * g.se + 1e-4);
    // Common random numbers keep the paired error well below the marginal one.
    CHECK(g.se < 0.05);

    CHECK_THROWS_AS(gradient_probe(m, f, scalar(1.0), scalar(1.0), T, 100, 1),
                    std::invalid_argument);

    const auto scan = gradient_scan(m, f, scalar(x0), scalar(y0),
                                    {0.25, 1.0}, 20000, 702);
    REQUIRE(scan.size() == 2);
    CHECK(scan[0].horizon == 0.25);
    CHECK(scan[1].horizon == 1.0);
    CHECK(scan[1].ratio < scan[0].ratio + 3.0 * (scan[0].se + scan[1].se));
}

TEST_CASE("ball-hitting frequency matches the endpoint law") {
    const ModelSpec m = scalar_ou();
    const double T = 0.7, x0 = 1.5, r = 0.8;
    const double mean = std::exp(-T) * x0;
    const double c = ou_scale(1.0, 1.0, m.index(), T);
    const oracle::StableCdf F(1.5);
    const double exact = F((r - mean) / c) - F((-r - mean) / c);
    const HitFrequency h =
        irreducibility_probe(m, scalar(x0), T, scalar(0.0), r, 20000, 801);
    CHECK(h.n == 20000);
    CHECK(h.wilson_lower <= h.frequency);
    CHECK(h.frequency <= h.wilson_upper);
    CHECK(h.wilson_lower <= exact);
    CHECK(exact <= h.wilson_upper);
    const WilsonInterval w = wilson_interval(h.hits, h.n, 3.0);
    CHECK(h.wilson_lower == w.lower);
    CHECK(h.wilson_upper == w.upper);

    CHECK_THROWS_AS(
        irreducibility_probe(m, scalar(x0), T, scalar(0.0), 0.0, 100, 1),
        std::invalid_argument);
    CHECK_THROWS_AS(
        irreducibility_probe(m, scalar(x0), T, State::Zero(2), 1.0, 100, 1),
        std::invalid_argument);
}

TEST_CASE("moment probe recovers the closed-form stationary moment") {
    // E|X_T|^p for the scalar chain from 0 is the stable moment at scale c(T).
    const double p = 0.375;
    const ModelSpec m = scalar_ou();
    const double c = ou_scale(1.0, 1.0, m.index(), 1.0);
    const double exact = std::pow(c, p) * 1.0273801133712539;
    const MeanSE ms = moment_probe(m, scalar(0.0), 1.0, p, 0.0, 20000, 901);
    CHECK(ms.n == 20000);
    CHECK(std::abs(ms.mean - exact) <= 3.0 * ms.se);
    CHECK(ms.se < 0.01);

    // The weighted norm raises the moment by gamma^{p e}.
    const ModelSpec m4 = scalar_ou(4.0);
    const double c4 = ou_scale(4.0, 1.0, m4.index(), 1.0);
    const double exact4 =
        std::pow(4.0, p * 0.1) * std::pow(c4, p) * 1.0273801133712539;
    const MeanSE ms4 = moment_probe(m4, scalar(0.0), 1.0, p, 0.1, 20000, 902);
    CHECK(std::abs(ms4.mean - exact4) <= 3.0 * ms4.se);
}

TEST_CASE("probes are worker-invariant") {
    const ModelSpec m = scalar_ou();
    auto f = [](const State& s) { return std::cos(s[0]); };
    const GradientEstimate g1 =
        gradient_probe(m, f, scalar(1.0), scalar(1.5), 0.3, 500, 111, 1);
    const GradientEstimate g3 =
        gradient_probe(m, f, scalar(1.0), scalar(1.5), 0.3, 500, 111, 3);
    CHECK(g1.ratio == g3.ratio);
    CHECK(g1.se == g3.se);
    const HitFrequency h1 =
        irreducibility_probe(m, scalar(1.0), 0.3, scalar(0.0), 1.0, 500, 112, 1);
    const HitFrequency h3 =
        irreducibility_probe(m, scalar(1.0), 0.3, scalar(0.0), 1.0, 500, 112, 3);
    CHECK(h1.hits == h3.hits);
    const MeanSE p1 = moment_probe(m, scalar(1.0), 0.3, 0.375, 0.0, 500, 113, 1);
    const MeanSE p3 = moment_probe(m, scalar(1.0), 0.3, 0.375, 0.0, 500, 113, 3);
    CHECK(p1.mean == p3.mean);
    CHECK(p1.se == p3.se);
}

TEST_CASE("summary statistics at pinned values") {
    const MeanSE ms = mean_se({1.0, 2.0, 3.0, 4.0});
    CHECK(ms.mean == 2.5);
    CHECK(ms.se == doctest::Approx(0.6454972243679028).epsilon(1e-15));
    CHECK(ms.n == 4);

    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);

    for (double v : {1.0 / 3.0, 0.1, 1e300, -2.5e-308, 0.0, -0.0,
                     12345678901234567.0, 0.64491825196660635}) {
        CHECK(std::stod(format_double(v)) == v);
    }

    CHECK(ks_critical(0.01) == doctest::Approx(1.6276236307187293).epsilon(1e-15));
    CHECK_THROWS_AS(ks_critical(0.0), std::invalid_argument);

    const WilsonInterval w = wilson_interval(5, 100, 3.0);
    CHECK(w.lower == doctest::Approx(0.014337119878956221).epsilon(1e-14));
    CHECK(w.upper == doctest::Approx(0.15997480672654835).epsilon(1e-14));
    CHECK(wilson_interval(0, 50, 3.0).lower == 0.0);
    CHECK(wilson_interval(50, 50, 3.0).upper == 1.0);
    CHECK_THROWS_AS(wilson_interval(5, 0, 3.0), std::invalid_argument);
    CHECK_THROWS_AS(wilson_interval(5, 4, 3.0), std::invalid_argument);
}

TEST_CASE("least squares recovery and degeneracy") {
    const std::vector<double> xs{0.0, 1.0, 2.0, 3.0};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2.0 * x + 1.0);
    const LinearFit fit = linear_fit(xs, ys);
    CHECK(fit.ok);
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(fit.intercept == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.se_slope <= 1e-12);

    CHECK(!linear_fit({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}).ok);
    CHECK(!linear_fit({1.0}, {1.0}).ok);

    // Zero-weight points drop out.
    const LinearFit wf = linear_fit_weighted({0.0, 1.0, 2.0}, {0.0, 1.0, 5.0},
                                             {1.0, 1.0, 0.0});
    CHECK(wf.ok);
    CHECK(wf.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wf.intercept == doctest::Approx(0.0).epsilon(1e-10));
}
