#ifndef ERGO_STATS_HPP
#define ERGO_STATS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ergo {

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;   // sample standard deviation / sqrt(n)
    std::size_t n = 0;
};

MeanSE mean_se(const std::vector<double>& xs);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double se_slope = 0.0;
    double se_intercept = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
    bool ok = false;       // false when the fit is degenerate (n < 2 or no x spread)
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

// Weighted least squares with per-point weights (typically 1/variance).
LinearFit linear_fit_weighted(const std::vector<double>& x,
                              const std::vector<double>& y,
                              const std::vector<double>& w);

// One-sample Kolmogorov-Smirnov statistic against a cdf given as a callable.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b);

// Critical value c(level) with P(sqrt(n)*D > c) ~ level for the one-sample
// statistic; for two samples compare D against c * sqrt((n+m)/(n*m)).
double ks_critical(double level);

struct WilsonInterval {
    double lower = 0.0;
    double upper = 1.0;
    double estimate = 0.0;
};

// Score interval for a binomial proportion at z standard errors.
WilsonInterval wilson_interval(std::uint64_t hits, std::uint64_t n, double z);

// FNV-1a over a byte buffer; used for output-file checksums in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);

// Shortest text that round-trips a double is not guaranteed by iostreams;
// %.17g is. All CSV output goes through this.
std::string format_double(double v);

} // namespace ergo

#endif
