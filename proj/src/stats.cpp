#include "ergo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace ergo {

MeanSE mean_se(const std::vector<double>& xs) {
    MeanSE out;
    out.n = xs.size();
    if (xs.empty()) return out;
    double s = 0.0;
    for (double v : xs) s += v;
    out.mean = s / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double v : xs) {
            const double d = v - out.mean;
            ss += d * d;
        }
        const double var = ss / static_cast<double>(xs.size() - 1);
        out.se = std::sqrt(var / static_cast<double>(xs.size()));
    }
    return out;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> w(x.size(), 1.0);
    return linear_fit_weighted(x, y, w);
}

LinearFit linear_fit_weighted(const std::vector<double>& x,
                              const std::vector<double>& y,
                              const std::vector<double>& w) {
    if (x.size() != y.size() || x.size() != w.size())
        throw std::invalid_argument("linear fit: length mismatch");
    LinearFit fit;
    fit.n = x.size();
    if (x.size() < 2) return fit;

    double sw = 0, swx = 0, swy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        swx += w[i] * x[i];
        swy += w[i] * y[i];
    }
    if (sw <= 0) return fit;
    const double xbar = swx / sw, ybar = swy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - xbar, dy = y[i] - ybar;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if (sxx <= 0) return fit;

    fit.slope = sxy / sxx;
    fit.intercept = ybar - fit.slope * xbar;
    fit.r_squared = (syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;

    // Residual variance with weights treated as relative precisions.
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        rss += w[i] * r * r;
    }
    const auto n = static_cast<double>(x.size());
    if (x.size() > 2) {
        const double s2 = rss / (sw * (n - 2.0) / n);
        fit.se_slope = std::sqrt(s2 / sxx);
        fit.se_intercept = std::sqrt(s2 * (1.0 / sw + xbar * xbar / sxx));
    }
    fit.ok = true;
    return fit;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks: empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    return d;
}

double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i; else ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double ks_critical(double level) {
    if (level <= 0.0 || level >= 1.0) throw std::invalid_argument("ks: level in (0,1)");
    return std::sqrt(-0.5 * std::log(level / 2.0));
}

WilsonInterval wilson_interval(std::uint64_t hits, std::uint64_t n, double z) {
    if (n == 0) throw std::invalid_argument("wilson: n must be positive");
    if (hits > n) throw std::invalid_argument("wilson: hits exceed n");
    WilsonInterval w;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(hits) / nn;
    w.estimate = p;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = p + z2 / (2.0 * nn);
    const double rad = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    w.lower = std::max(0.0, (center - rad) / denom);
    w.upper = std::min(1.0, (center + rad) / denom);
    return w;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for checksum: " + path);
    std::uint64_t h = 0xCBF29CE484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const auto got = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ull;
        }
        if (got < sizeof buf) break;
    }
    return h;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace ergo
