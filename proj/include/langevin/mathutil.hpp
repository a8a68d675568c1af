#pragma once
// Small numeric helpers shared across the library: cancellation-safe
// exponential expressions, complex exponential integrals, normal CDF,
// Kolmogorov-Smirnov statistics, grids, and least-squares line fits.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace langevin {

inline constexpr double pi_const = 3.141592653589793238462643383279502884;

inline constexpr double sq(double x) { return x * x; }

// u - 1 + e^{-u} = u^2/2 - u^3/6 + ... The direct expression loses ~2eps/u
// relative accuracy for small u, so switch to the series there.
inline double expm1_deficit(double u) {
    if (std::abs(u) < 1e-2) {
        const double u2 = u * u;
        return 0.5 * u2 * (1.0 - u / 3.0 + u2 / 12.0 - u2 * u / 60.0 + u2 * u2 / 360.0);
    }
    return u + std::expm1(-u);
}

// \int_0^L e^{c r} dr for complex rate c. Series for small |cL| avoids the
// 0/0; otherwise (e^{cL}-1)/c.
inline std::complex<double> cint(std::complex<double> c, double L) {
    const std::complex<double> z = c * L;
    if (std::abs(z) < 0.5) {
        std::complex<double> term{1.0, 0.0}, sum{1.0, 0.0};
        for (int k = 1; k < 24; ++k) {
            term *= z / static_cast<double>(k + 1);
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        return L * sum;
    }
    return (std::exp(z) - 1.0) / c;
}

// Real-rate overload; expm1 already handles the small-|cL| regime.
inline double cint(double c, double L) {
    const double z = c * L;
    if (std::abs(z) < 1e-12) return L * (1.0 + 0.5 * z);
    return std::expm1(z) / c;
}

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi_const); }
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Two-sided Kolmogorov-Smirnov statistic of samples against a reference CDF.
template <class Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks_statistic: no samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    return d;
}

// Asymptotic two-sided critical value at significance 0.01: K solving
// Q_KS(K) = 0.01 is 1.6276, and P(D_n > K/sqrt(n)) ~ Q_KS(K).
inline double ks_critical_001(std::size_t n) {
    return 1.6276 / std::sqrt(static_cast<double>(n));
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    if (n < 2) throw std::invalid_argument("linspace: need n >= 2");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    v.back() = b;
    return v;
}

// Log-uniform grid between positive endpoints.
inline std::vector<double> geomspace(double a, double b, std::size_t n) {
    if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("geomspace: endpoints must be positive");
    auto v = linspace(std::log(a), std::log(b), n);
    for (double& x : v) x = std::exp(x);
    v.back() = b;
    return v;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;
};

// Ordinary least squares line through (xs, ys).
inline LineFit ols_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("ols_line: need >= 2 matched points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) throw std::invalid_argument("ols_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

struct MeanVar {
    double mean = 0.0;
    double var = 0.0; // unbiased sample variance
    std::size_t n = 0;
};

inline MeanVar mean_var(const std::vector<double>& v) {
    MeanVar mv;
    mv.n = v.size();
    if (v.empty()) return mv;
    double s = 0.0;
    for (double x : v) s += x;
    mv.mean = s / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += sq(x - mv.mean);
        mv.var = ss / static_cast<double>(v.size() - 1);
    }
    return mv;
}

} // namespace langevin
