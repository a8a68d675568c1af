#pragma once
// Covariances of the correlated Gaussian noises that drive one integrator
// step of the underdamped Langevin diffusion with friction gamma. With B a
// standard Brownian motion, per coordinate,
//   xi2_t = sqrt(2 gamma) \int_0^t e^{-gamma (t-r)} dB_r          (momentum noise)
//   xi1_t = sqrt(2/gamma) \int_0^t (1 - e^{-gamma (t-r)}) dB_r    (position noise)
// The step samples the 4-vector (xi1_{t1}, xi1_{t2}, xi1_h, xi2_h) jointly,
// 0 <= t1 <= t2 <= h; randomized-midpoint methods use interior times, plain
// methods use t1 = t2 = h and read only the last two rows.
//
// Closed forms are rearranged so they stay accurate across the whole range
// of gamma*t (the expanded textbook expressions cancel catastrophically for
// small arguments, and naive sinh^2 regroupings overflow or cancel for large
// ones). With u = gamma*s <= w = gamma*t,
//   cov(xi1_s, xi1_t) = (2/gamma^2) [ (u - 1 + e^{-u}) - e^{-w}(cosh u - 1) ]
//   cov(xi1_t, xi2_h) = (4/gamma) e^{-gamma h} sinh^2(gamma t/2),  t <= h
//   var(xi2_h)        = 1 - e^{-2 gamma h}
// which agree with the expanded expressions
//   (2/gamma) (s - (1-e^{-gamma s}+e^{-gamma(t-s)}-e^{-gamma t})/gamma
//              + (e^{-gamma(t-s)}-e^{-gamma(t+s)})/(2 gamma))
//   (1/gamma) (e^{-gamma(h-t)} - 2e^{-gamma h} + e^{-gamma(h+t)}).

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "errors.hpp"
#include "mathutil.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace langevin::noise {

namespace detail {

inline void check_gamma(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument("noise: gamma must be positive and finite");
}

} // namespace detail

// cov(xi1_s, xi1_t) for 0 <= s <= t.
inline double cov_xi1_xi1(double gamma, double s, double t) {
    detail::check_gamma(gamma);
    if (!(s >= 0.0) || !(t >= s))
        throw std::invalid_argument("cov_xi1_xi1: need 0 <= s <= t, got s=" + std::to_string(s) +
                                    " t=" + std::to_string(t));
    const double u = gamma * s;
    const double w = gamma * t;
    double f;
    if (u < 0.05) {
        // Both bracket terms are ~u^2/2, so expand jointly:
        // f = (u^2/2) [ (1-e^{-w})(1 + u^2/12 + u^4/360 + u^6/20160)
        //               - u/3 - u^3/60 - u^5/2520 ] + O(u^2 * u^7)
        const double a = -std::expm1(-w);
        const double u2 = u * u;
        f = 0.5 * u2 *
            (a * (1.0 + u2 / 12.0 + u2 * u2 / 360.0 + u2 * u2 * u2 / 20160.0) -
             u * (1.0 / 3.0 + u2 / 60.0 + u2 * u2 / 2520.0));
    } else if (u < 350.0) {
        // cosh u - 1 = 2 sinh^2(u/2) is exact and e^{-w} tames the size (u <= w)
        const double sh = std::sinh(0.5 * u);
        f = expm1_deficit(u) - 2.0 * std::exp(-w) * sh * sh;
    } else {
        // sinh^2 would overflow; every exponential here is <= 1 since u <= w
        f = expm1_deficit(u) -
            (0.5 * (std::exp(u - w) + std::exp(-u - w)) - std::exp(-w));
    }
    return (2.0 / (gamma * gamma)) * f;
}

// cov(xi1_t, xi2_h) for 0 <= t <= h.
inline double cov_xi1_xi2(double gamma, double t, double h) {
    detail::check_gamma(gamma);
    if (!(t >= 0.0) || !(h >= t))
        throw std::invalid_argument("cov_xi1_xi2: need 0 <= t <= h, got t=" + std::to_string(t) +
                                    " h=" + std::to_string(h));
    const double u = gamma * t;
    if (u < 350.0) {
        const double sh = std::sinh(0.5 * u);
        return (4.0 / gamma) * std::exp(-gamma * h) * sh * sh;
    }
    // sinh^2 would overflow; the expanded form has no cancellation here
    // because e^{-gamma(h-t)} dominates the other terms by e^{-gamma t}.
    return (std::exp(-gamma * (h - t)) - 2.0 * std::exp(-gamma * h) +
            std::exp(-gamma * (h + t))) / gamma;
}

// var(xi2_h); equals the stationary momentum variance deficit 1 - e^{-2 gamma h}.
inline double var_xi2(double gamma, double h) {
    detail::check_gamma(gamma);
    if (!(h >= 0.0)) throw std::invalid_argument("var_xi2: need h >= 0");
    return -std::expm1(-2.0 * gamma * h);
}

struct NoiseCov {
    double gamma = 0.0;
    double h = 0.0;
    double t1 = 0.0, t2 = 0.0; // interior evaluation times, t1 <= t2 <= h
    Mat4 cov = Mat4::Zero();   // rows/cols: (xi1_t1, xi1_t2, xi1_h, xi2_h)
    Mat4 chol = Mat4::Zero();  // lower factor of cov (+ the jitter actually used)
    double jitter = 0.0;       // diagonal jitter required for the factorization
};

// Assemble the 4x4 joint covariance and its Cholesky factor. t1 and t2 may
// arrive in either order (they are sorted here; NoiseCov stores the sorted
// pair). Coincident times (t1 = t2, or t2 = h) make the matrix singular, so
// a relative diagonal jitter ladder 1e-14 .. 1e-10 is tried before giving up.
inline NoiseCov build_noise_cov(double gamma, double h, double t1, double t2) {
    detail::check_gamma(gamma);
    if (!(h > 0.0) || !std::isfinite(h))
        throw std::invalid_argument("build_noise_cov: h must be positive and finite");
    if (t1 > t2) std::swap(t1, t2);
    if (!(0.0 <= t1 && t2 <= h))
        throw std::invalid_argument("build_noise_cov: need 0 <= t1, t2 <= h, got t1=" +
                                    std::to_string(t1) + " t2=" + std::to_string(t2) +
                                    " h=" + std::to_string(h));
    NoiseCov nc;
    nc.gamma = gamma;
    nc.h = h;
    nc.t1 = t1;
    nc.t2 = t2;

    const double times[3] = {t1, t2, h};
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            const double c = cov_xi1_xi1(gamma, times[i], times[j]);
            nc.cov(i, j) = nc.cov(j, i) = c;
        }
    for (int i = 0; i < 3; ++i) {
        const double c = cov_xi1_xi2(gamma, times[i], h);
        nc.cov(i, 3) = nc.cov(3, i) = c;
    }
    nc.cov(3, 3) = var_xi2(gamma, h);

    const double scale = nc.cov.diagonal().maxCoeff();
    for (double rel = 0.0; rel <= 1.1e-10; rel = (rel == 0.0) ? 1e-14 : rel * 10.0) {
        Mat4 m = nc.cov;
        m.diagonal().array() += rel * scale;
        Eigen::LLT<Mat4> llt(m);
        if (llt.info() == Eigen::Success) {
            nc.chol = llt.matrixL();
            nc.jitter = rel * scale;
            return nc;
        }
    }
    throw numerical_error("build_noise_cov: covariance not PSD after jitter escalation (gamma=" +
                          std::to_string(gamma) + ", h=" + std::to_string(h) + ")");
}

// The four noise vectors of one step; coordinates are i.i.d. with the 4x4
// covariance above. xi1_t1/xi1_t2 follow NoiseCov's sorted times.
struct JointNoiseDraw {
    Vec xi1_t1, xi1_t2, xi1_h, xi2_h;
};

// Sample the 4 noises for each of `dim` independent coordinates. Draws are
// coordinate-major (the 4 standard normals of coordinate 0 come first), so
// output is reproducible for a fixed stream.
inline JointNoiseDraw draw_joint_noise(const NoiseCov& nc, int dim, RngStream& rng) {
    if (dim < 1) throw std::invalid_argument("draw_joint_noise: dim must be >= 1");
    JointNoiseDraw d{Vec(dim), Vec(dim), Vec(dim), Vec(dim)};
    Vec4 z;
    for (int c = 0; c < dim; ++c) {
        for (int k = 0; k < 4; ++k) z[k] = rng.gauss();
        const Vec4 n = nc.chol * z;
        d.xi1_t1[c] = n[0];
        d.xi1_t2[c] = n[1];
        d.xi1_h[c] = n[2];
        d.xi2_h[c] = n[3];
    }
    return d;
}

} // namespace langevin::noise
