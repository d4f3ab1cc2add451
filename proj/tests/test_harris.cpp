#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "ergo/harris.hpp"
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

std::vector<State> spread_probes() {
    return {scalar(1.0), scalar(3.0), scalar(9.0), scalar(27.0)};
}

} // namespace

TEST_CASE("lyapunov check validations and zero-window identity") {
    const ModelSpec m = scalar_ou();
    CHECK_THROWS_AS(lyapunov_check(m, 0.0, 1.0, spread_probes(), 100, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(lyapunov_check(m, 0.75, -1.0, spread_probes(), 100, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(lyapunov_check(m, 0.75, 1.0, {scalar(1.0)}, 100, 1),
                    std::invalid_argument);
    const std::vector<State> tight{scalar(1.0), scalar(2.0)};
    CHECK_THROWS_AS(lyapunov_check(m, 0.75, 1.0, tight, 100, 1),
                    std::invalid_argument);
    const std::vector<State> zero{scalar(0.0), scalar(27.0)};
    CHECK_THROWS_AS(lyapunov_check(m, 0.75, 1.0, zero, 100, 1),
                    std::invalid_argument);

    // A zero window reproduces V exactly: slope one, no contraction.
    const LyapunovCheck id = lyapunov_check(m, 0.75, 0.0, spread_probes(), 100, 1);
    CHECK(id.gamma_hat == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(id.K_hat) < 1e-10);
    CHECK(id.se_gamma == 0.0);
    CHECK(!id.contraction);
    for (std::size_t j = 0; j < id.vx.size(); ++j) {
        CHECK(id.m_hat[j] == id.vx[j]);
        CHECK(id.se[j] == 0.0);
    }
}

TEST_CASE("lyapunov slope tracks the decay of the chain") {
    const ModelSpec m = scalar_ou();
    const double p = 0.75, T0 = 1.0;
    const LyapunovCheck c = lyapunov_check(m, p, T0, spread_probes(), 3000, 41);
    CHECK(c.p == p);
    CHECK(c.T0 == T0);
    CHECK(c.vx.size() == 4);
    CHECK(c.m_hat.size() == 4);
    for (std::size_t j = 1; j < 4; ++j) CHECK(c.m_hat[j] > c.m_hat[j - 1]);
    for (double s : c.se) CHECK(s > 0.0);
    // Slope near exp(-p T0), well inside the contraction region.
    CHECK(c.gamma_hat > 0.2);
    CHECK(c.gamma_hat < std::exp(-p * T0) * 1.2);
    CHECK(c.K_hat > 0.0);
    CHECK(c.contraction == (c.gamma_hat + 3.0 * c.se_gamma < 1.0));
    CHECK(c.contraction);

    const LyapunovCheck w1 = lyapunov_check(m, p, T0, spread_probes(), 500, 42, 1);
    const LyapunovCheck w3 = lyapunov_check(m, p, T0, spread_probes(), 500, 42, 3);
    CHECK(w1.gamma_hat == w3.gamma_hat);
    CHECK(w1.K_hat == w3.K_hat);
}

TEST_CASE("minorization finds overlap on a mixing window") {
    const ModelSpec m = scalar_ou();
    const Grid g = Grid::centered(1, 6.0, 32);
    const double p = 0.75, T = 1.0, R = 1.0;
    const MinorizationCheck mc = minorization_check(m, T, R, p, 8, 2000, g, 43);
    CHECK(mc.T == T);
    CHECK(mc.R == R);
    CHECK(mc.n_pairs == 8);
    CHECK(mc.conclusive);
    CHECK(mc.note.empty());
    CHECK(mc.delta_hat > 0.3);
    CHECK(mc.delta_hat < 0.95);
    CHECK(mc.se > 0.0);
    // The reported pair lies on the level set, supported on resolved axes.
    REQUIRE(mc.worst_x.size() == 1);
    REQUIRE(mc.worst_y.size() == 1);
    const double v = std::pow(mc.worst_x.norm(), p) + std::pow(mc.worst_y.norm(), p);
    CHECK(v <= R * (1.0 + 1e-12));

    // Re-estimating the worst pair with fresh draws reproduces its distance.
    const auto kx = estimate_kernel(m, mc.worst_x, T, 2000, g, 4301);
    const auto ky = estimate_kernel(m, mc.worst_y, T, 2000, g, 4302);
    const double tv = tv_discrete(kx.weights, ky.weights);
    const double noise = tv_noise_scale(kx.weights, ky.weights, 2000, 2000);
    CHECK(std::abs(tv - (1.0 - mc.delta_hat)) <= 3.0 * (noise + mc.se));

    CHECK_THROWS_AS(minorization_check(m, T, 0.0, p, 4, 100, g, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(minorization_check(m, T, R, 0.0, 4, 100, g, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(minorization_check(m, T, R, p, 0, 100, g, 1),
                    std::invalid_argument);
}

TEST_CASE("zero-window kernels cannot overlap on a grid") {
    // With no evolution the kernels are point masses in distinct cells, so
    // the worst total variation saturates and the check reports inconclusive.
    const ModelSpec m = scalar_ou();
    const Grid g = Grid::centered(1, 6.0, 32);
    const MinorizationCheck mc = minorization_check(m, 0.0, 1.0, 0.75, 12, 200, g, 47);
    CHECK(!mc.conclusive);
    CHECK(mc.delta_hat == 0.0);
    CHECK(mc.note == "inconclusive at this grid");
}

TEST_CASE("long-run moment matches the stationary law") {
    const ModelSpec m = scalar_ou();
    const double p = 0.375;
    const double exact =
        std::pow(0.76314282836888792, p) * 1.0273801133712539;
    const InvariantMoment im = invariant_moment(m, p, 10.0, 40000, 53);
    CHECK(im.stabilized);
    CHECK(std::abs(im.value - exact) <= 0.05 * exact);
    CHECK(std::abs(im.partial_half - im.value) <= 0.1 * im.value);

    const InvariantMoment unit = invariant_moment(m, 0.0, 10.0, 100, 1);
    CHECK(unit.value == 1.0);
    CHECK(unit.stabilized);

    CHECK_THROWS_AS(invariant_moment(m, -0.5, 10.0, 1000, 1), std::invalid_argument);
    CHECK_THROWS_AS(invariant_moment(m, 1.5, 10.0, 1000, 1), std::invalid_argument);
    CHECK_THROWS_AS(invariant_moment(m, 0.375, 5.0, 1000, 1), std::invalid_argument);
    CHECK_THROWS_AS(invariant_moment(m, 0.375, 10.0, 4, 1), std::invalid_argument);
}

TEST_CASE("ensemble distance decays at the relaxation rate") {
    const ModelSpec m = scalar_ou();
    const Grid g = Grid::centered(1, 6.0, 48);
    auto at4 = [](RngStream&) { return scalar(4.0); };
    auto atm4 = [](RngStream&) { return scalar(-4.0); };
    const std::vector<double> times{1.0, 1.5, 2.0, 2.5, 3.0};
    const MixingFit fit = mixing_fit(m, at4, atm4, times, 4000, g, 59);
    CHECK(fit.times == times);
    REQUIRE(fit.tv.size() == times.size());
    REQUIRE(fit.se.size() == times.size());
    CHECK(fit.ok);
    CHECK(fit.n_used >= 3);
    CHECK(fit.r_squared > 0.9);
    CHECK(fit.c_hat > 0.6);
    CHECK(fit.c_hat < 1.4);
    CHECK(fit.C_hat > 0.0);
    const oracle::StableCdf F(1.5);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        const double exact = oracle::tv_same_scale(
            F, 4.0 * std::exp(-t), -4.0 * std::exp(-t),
            ou_scale(1.0, 1.0, m.index(), t));
        // Binning only contracts the distance.
        CHECK(fit.tv[i] <= exact + 3.0 * fit.se[i]);
        CHECK(fit.tv[i] >= exact - 0.08 - 3.0 * fit.se[i]);
        CHECK(fit.tv[i] > fit.tv.back() - 1e-12);
    }

    // Identical ensembles never rise above the noise floor.
    const MixingFit same = mixing_fit(m, at4, at4, {1.0, 2.0}, 2000, g, 60);
    CHECK(!same.ok);
    CHECK(same.note == "already mixed; increase initial separation");

    CHECK_THROWS_AS(mixing_fit(m, at4, atm4, {}, 100, g, 1), std::invalid_argument);
    CHECK_THROWS_AS(mixing_fit(m, at4, atm4, {2.0, 1.0}, 100, g, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(mixing_fit(m, at4, atm4, {0.015}, 100, g, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(mixing_fit(m, at4, atm4, {-1.0, 1.0}, 100, g, 1),
                    std::invalid_argument);
}

TEST_CASE("full chain certification on a contracting model") {
    const ModelSpec m = scalar_ou();
    const Grid g = Grid::centered(1, 6.0, 32);
    const HarrisReport rep = harris_certify(m, 0.75, 1.0, spread_probes(), 2000,
                                            {1.0, 4.0}, 6, 2000, g, 61);
    CHECK(rep.verdict == "certified");
    CHECK(rep.lyapunov.contraction);
    REQUIRE(rep.minorization.size() == 2);
    for (const auto& mc : rep.minorization) {
        CHECK(mc.conclusive);
        CHECK(mc.delta_hat - 3.0 * mc.se > 0.0);
    }
    REQUIRE(rep.conditions.size() == 3);
    CHECK(rep.conditions[0].find("< 1") != std::string::npos);

    const std::string path = "/tmp/ergo_test_harris.json";
    write_harris_json(path, rep);
    std::ifstream in(path);
    const nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j.at("verdict").get<std::string>() == "certified");
    CHECK(j.at("lyapunov").at("gamma_hat").get<double>() == rep.lyapunov.gamma_hat);
    CHECK(j.at("minorization").size() == 2);
    const auto& m0 = j.at("minorization")[0];
    CHECK(m0.at("delta_hat").get<double>() == rep.minorization[0].delta_hat);
    const auto wx = m0.at("worst_pair").at("x").get<std::vector<double>>();
    REQUIRE(wx.size() == 1);
    CHECK(wx[0] == rep.minorization[0].worst_x[0]);
    CHECK(j.at("conditions").size() == 3);
}

TEST_CASE("slow decay fails the drift condition") {
    // Rate 0.02 over half a unit of time cannot show contraction at 3
    // standard errors, while kernels barely move and overlap generously.
    const ModelSpec slow = scalar_ou(0.02);
    const Grid g = Grid::centered(1, 6.0, 32);
    const HarrisReport rep = harris_certify(slow, 0.75, 0.5, spread_probes(), 400,
                                            {1.0}, 4, 1000, g, 67);
    CHECK(!rep.lyapunov.contraction);
    REQUIRE(rep.minorization.size() == 1);
    CHECK(rep.minorization[0].conclusive);
    CHECK(rep.verdict == "failed");
}

TEST_CASE("unresolvable overlap yields an inconclusive verdict") {
    const ModelSpec m = scalar_ou();
    const Grid g = Grid::centered(1, 6.0, 32);
    const HarrisReport rep = harris_certify(m, 0.75, 0.0, spread_probes(), 200,
                                            {1.0}, 6, 200, g, 71);
    CHECK(!rep.lyapunov.contraction);
    REQUIRE(rep.minorization.size() == 1);
    CHECK(!rep.minorization[0].conclusive);
    CHECK(rep.minorization[0].note == "inconclusive at this grid");
    CHECK(rep.verdict == "inconclusive");
}

TEST_CASE("mixing reports round trip through json and csv") {
    const ModelSpec m = scalar_ou();
    const Grid g = Grid::centered(1, 6.0, 32);
    auto at3 = [](RngStream&) { return scalar(3.0); };
    auto atm3 = [](RngStream&) { return scalar(-3.0); };
    const MixingFit fit = mixing_fit(m, at3, atm3, {1.0, 2.0, 3.0}, 2000, g, 73);

    const std::string jpath = "/tmp/ergo_test_mixing.json";
    write_mixing_json(jpath, fit);
    std::ifstream jin(jpath);
    const nlohmann::json j = nlohmann::json::parse(jin);
    CHECK(j.at("c_hat").get<double>() == fit.c_hat);
    CHECK(j.at("ok").get<bool>() == fit.ok);
    CHECK(j.at("times").size() == 3);
    CHECK(j.at("tv")[1].get<double>() == fit.tv[1]);

    const std::string cpath = "/tmp/ergo_test_mixing.csv";
    write_mixing_csv(cpath, fit);
    std::ifstream cin(cpath);
    std::string line;
    std::size_t rows = 0;
    std::getline(cin, line);
    CHECK(line == "t,tv,se");
    while (std::getline(cin, line)) ++rows;
    CHECK(rows == 3);
}
