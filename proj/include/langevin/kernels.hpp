#pragma once
// Markov transition kernels for the underdamped Langevin diffusion
//
//   dX_t = P_t dt,   dP_t = (-grad V(X_t) - gamma P_t) dt + sqrt(2 gamma) dB_t.
//
// This header provides the stochastic exponential Euler step (ULMC), its
// randomized double-midpoint refinement (RM-ULMC), the exact Gaussian
// transition on quadratic targets, and the closed-form scalar (per-eigenvalue)
// transition used to cross-check it. All discretizations draw their noise
// from the joint law in noise.hpp, so a fixed random stream produces the same
// noises no matter which integrator consumes them.

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "langevin/errors.hpp"
#include "langevin/mathutil.hpp"
#include "langevin/noise.hpp"
#include "langevin/potentials.hpp"
#include "langevin/rng.hpp"
#include "langevin/types.hpp"

namespace langevin {

// The kernel layer treats the potential as core vocabulary.
using potentials::Kind;
using potentials::load_potential;
using potentials::make_counting;
using potentials::make_gaussian;
using potentials::make_trig_nonconvex;
using potentials::Potential;

struct PhaseState {
    Vec x, p;

    PhaseState() = default;
    PhaseState(Vec x0, Vec p0) : x(std::move(x0)), p(std::move(p0)) {
        if (x.size() != p.size())
            throw std::invalid_argument("PhaseState: position and momentum dims differ");
    }
    static PhaseState zero(int dim) { return {Vec::Zero(dim), Vec::Zero(dim)}; }

    int dim() const { return static_cast<int>(x.size()); }
    bool finite() const { return x.allFinite() && p.allFinite(); }
};

// Gaussian law on phase space; mean and covariance are blocked as (x, p).
struct GaussianMoments {
    Vec mean; // length 2d
    Mat cov;  // 2d x 2d

    int dim() const { return static_cast<int>(mean.size()) / 2; }
};

namespace detail {

inline void check_step(double gamma, double h) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument("kernel step: gamma must be positive and finite");
    if (!(h >= 0.0) || !std::isfinite(h))
        throw std::invalid_argument("kernel step: h must be non-negative and finite");
}

inline Vec stack(const PhaseState& s) {
    Vec z(2 * s.dim());
    z << s.x, s.p;
    return z;
}

inline PhaseState unstack(const Vec& z) {
    const int d = static_cast<int>(z.size()) / 2;
    return {z.head(d), z.tail(d)};
}

} // namespace detail

// Stationary law of the diffusion on a strictly convex quadratic target:
// N(0, blockdiag(H^{-1}, I)).
inline GaussianMoments stationary_moments(const Potential& pot) {
    if (pot.kind() != Kind::Quadratic || !(pot.alpha() > 0.0))
        throw regime_error("stationary_moments: target must be a strictly convex quadratic");
    const int d = pot.dim();
    GaussianMoments m;
    m.mean = Vec::Zero(2 * d);
    m.cov = Mat::Zero(2 * d, 2 * d);
    if (pot.diagonal_H())
        m.cov.topLeftCorner(d, d) = pot.H().diagonal().cwiseInverse().asDiagonal();
    else
        m.cov.topLeftCorner(d, d) = pot.H().llt().solve(Mat::Identity(d, d));
    m.cov.bottomRightCorner(d, d).setIdentity();
    return m;
}

inline PhaseState sample_state(const GaussianMoments& m, RngStream& rng) {
    const Mat L = chol_psd(m.cov);
    Vec z(m.mean.size());
    for (int i = 0; i < z.size(); ++i) z[i] = rng.gauss();
    return detail::unstack(Vec(m.mean + L * z));
}

// One-step weights of the exponential Euler map with frozen gradient g:
//   x' = x + c_p p - c_g g + xi1,   p' = decay p - c_p g + xi2.
// c_g = (h - c_p)/gamma is evaluated through expm1_deficit so the h^2/2
// leading term survives cancellation for small gamma*h.
struct UlmcCoeffs {
    double decay; // e^{-gamma h}
    double c_p;   // (1 - e^{-gamma h}) / gamma
    double c_g;   // (h - c_p) / gamma
};

inline UlmcCoeffs ulmc_coeffs(double gamma, double h) {
    detail::check_step(gamma, h);
    const double u = gamma * h;
    return {std::exp(-u), -std::expm1(-u) / gamma, expm1_deficit(u) / (gamma * gamma)};
}

// Marginal law of (xi1_h, xi2_h): the bottom-right 2x2 block of the joint
// noise covariance, with its Cholesky factor ready for per-step draws.
struct UlmcNoise {
    double gamma = 0.0, h = 0.0;
    Mat2 cov = Mat2::Zero();
    Mat2 chol = Mat2::Zero();
};

inline UlmcNoise make_ulmc_noise(double gamma, double h) {
    detail::check_step(gamma, h);
    UlmcNoise n;
    n.gamma = gamma;
    n.h = h;
    n.cov(0, 0) = noise::cov_xi1_xi1(gamma, h, h);
    n.cov(0, 1) = n.cov(1, 0) = noise::cov_xi1_xi2(gamma, h, h);
    n.cov(1, 1) = noise::var_xi2(gamma, h);
    n.chol = chol_psd(n.cov);
    return n;
}

// Fill (xi1, xi2) for `dim` independent coordinates; coordinate-major like
// draw_joint_noise so streams line up across integrators.
inline void draw_ulmc_noise(const UlmcNoise& n, int dim, RngStream& rng, Vec& xi1, Vec& xi2) {
    xi1.resize(dim);
    xi2.resize(dim);
    for (int c = 0; c < dim; ++c) {
        const double z1 = rng.gauss(), z2 = rng.gauss();
        xi1[c] = n.chol(0, 0) * z1;
        xi2[c] = n.chol(1, 0) * z1 + n.chol(1, 1) * z2;
    }
}

// Exponential Euler step with caller-supplied noises (test hook and the
// common-random-number driver used for local-error measurement).
inline PhaseState ulmc_step(const Potential& pot, const PhaseState& s, double gamma, double h,
                            const Vec& xi1, const Vec& xi2) {
    detail::check_step(gamma, h);
    if (!(h > 0.0)) throw std::invalid_argument("ulmc_step: h must be positive");
    if (s.dim() != pot.dim() || xi1.size() != s.x.size() || xi2.size() != s.x.size())
        throw std::invalid_argument("ulmc_step: dimension mismatch");
    const UlmcCoeffs c = ulmc_coeffs(gamma, h);
    const Vec g = pot.grad(s.x);
    PhaseState out;
    out.x = s.x + c.c_p * s.p - c.c_g * g + xi1;
    out.p = c.decay * s.p - c.c_p * g + xi2;
    return out;
}

inline PhaseState ulmc_step(const Potential& pot, const PhaseState& s, double gamma, double h,
                            RngStream& rng) {
    const UlmcNoise n = make_ulmc_noise(gamma, h);
    Vec xi1, xi2;
    draw_ulmc_noise(n, s.dim(), rng, xi1, xi2);
    return ulmc_step(pot, s, gamma, h, xi1, xi2);
}

namespace detail {

// Unnormalized mass of the position-midpoint density on [0, w]:
//   D(w) = int_0^w (1 - e^{-u (1-s)}) ds,  u = gamma h,
// written as a sum of two positive terms so nothing cancels as u -> 0:
//   D(w) = -w expm1(-u(1-w)) + e^{-u(1-w)} expm1_deficit(u w)/u.
inline double midpoint_u_mass(double u, double w) {
    const double e = std::exp(-u * (1.0 - w));
    return -w * std::expm1(-u * (1.0 - w)) + e * expm1_deficit(u * w) / u;
}

inline void check_unit_interval(double q, const char* who) {
    if (!(q >= 0.0 && q <= 1.0))
        throw std::invalid_argument(std::string(who) + ": argument outside [0,1]");
}

} // namespace detail

// CDF of the position-midpoint time fraction: F(w) = D(w) u / expm1_deficit(u).
inline double midpoint_u_cdf(double gamma, double h, double w) {
    detail::check_step(gamma, h);
    detail::check_unit_interval(w, "midpoint_u_cdf");
    const double u = gamma * h;
    return detail::midpoint_u_mass(u, w) * u / expm1_deficit(u);
}

// Density h (1 - e^{-gamma (1-w) h}) / (h - (1 - e^{-gamma h})/gamma) on [0,1].
inline double midpoint_u_density(double gamma, double h, double w) {
    detail::check_step(gamma, h);
    detail::check_unit_interval(w, "midpoint_u_density");
    const double u = gamma * h;
    return -std::expm1(-u * (1.0 - w)) * u / expm1_deficit(u);
}

// Invert the midpoint-u CDF at q by Newton from w = q with a bisection
// safeguard; the CDF is smooth, increasing, and concave, so the safeguard
// only fires near the flat right endpoint. Stops at |F(w) - q| <= 1e-12.
inline double invert_midpoint_u(double gamma, double h, double q) {
    detail::check_step(gamma, h);
    detail::check_unit_interval(q, "invert_midpoint_u");
    if (q <= 0.0) return 0.0;
    if (q >= 1.0) return 1.0;
    const double u = gamma * h;
    const double z = expm1_deficit(u);
    double lo = 0.0, hi = 1.0, w = q;
    for (int it = 0; it < 200; ++it) {
        const double gap = detail::midpoint_u_mass(u, w) * u / z - q;
        if (std::abs(gap) <= 1e-12) break;
        if (gap > 0.0) hi = w;
        else lo = w;
        const double dens = -std::expm1(-u * (1.0 - w)) * u / z;
        double next = (dens > 0.0) ? w - gap / dens : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - w) <= 1e-15) {
            w = next;
            break;
        }
        w = next;
    }
    return w;
}

inline double sample_midpoint_u(double gamma, double h, RngStream& rng) {
    return invert_midpoint_u(gamma, h, rng.unif01());
}

// CDF of the momentum-midpoint time fraction, density
// gamma h e^{-gamma (1-v) h} / (1 - e^{-gamma h}) on [0,1].
inline double midpoint_v_cdf(double gamma, double h, double v) {
    detail::check_step(gamma, h);
    detail::check_unit_interval(v, "midpoint_v_cdf");
    const double u = gamma * h;
    return -std::exp(-u * (1.0 - v)) * std::expm1(-u * v) / -std::expm1(-u);
}

inline double midpoint_v_density(double gamma, double h, double v) {
    detail::check_step(gamma, h);
    detail::check_unit_interval(v, "midpoint_v_density");
    const double u = gamma * h;
    return u * std::exp(-u * (1.0 - v)) / -std::expm1(-u);
}

// Analytic inverse CDF: v = 1 + log(e^{-u} + q (1 - e^{-u})) / u, evaluated
// through log1p so small u loses nothing.
inline double invert_midpoint_v(double gamma, double h, double q) {
    detail::check_step(gamma, h);
    detail::check_unit_interval(q, "invert_midpoint_v");
    const double u = gamma * h;
    const double em = -std::expm1(-u); // 1 - e^{-u}
    const double v = 1.0 + std::log1p(-(1.0 - q) * em) / u;
    return std::clamp(v, 0.0, 1.0);
}

inline double sample_midpoint_v(double gamma, double h, RngStream& rng) {
    return invert_midpoint_v(gamma, h, rng.unif01());
}

// Randomized double-midpoint step with caller-supplied midpoints and noises.
// Both midpoint predictors reuse one gradient at the current position; the
// corrector then spends one gradient per midpoint: three evaluations total.
inline PhaseState rm_ulmc_step(const Potential& pot, const PhaseState& s, double gamma, double h,
                               double u, double v, const Vec& xi1_u, const Vec& xi1_v,
                               const Vec& xi1_h, const Vec& xi2_h) {
    detail::check_step(gamma, h);
    if (!(h > 0.0)) throw std::invalid_argument("rm_ulmc_step: h must be positive");
    detail::check_unit_interval(u, "rm_ulmc_step u");
    detail::check_unit_interval(v, "rm_ulmc_step v");
    if (s.dim() != pot.dim() || xi1_u.size() != s.x.size() || xi1_v.size() != s.x.size() ||
        xi1_h.size() != s.x.size() || xi2_h.size() != s.x.size())
        throw std::invalid_argument("rm_ulmc_step: dimension mismatch");

    const Vec g0 = pot.grad(s.x);
    const UlmcCoeffs cu = ulmc_coeffs(gamma, u * h);
    const UlmcCoeffs cv = ulmc_coeffs(gamma, v * h);
    const Vec x_plus = s.x + cu.c_p * s.p - cu.c_g * g0 + xi1_u;  // position interpolant at uh
    const Vec x_plus2 = s.x + cv.c_p * s.p - cv.c_g * g0 + xi1_v; // position interpolant at vh

    const UlmcCoeffs c = ulmc_coeffs(gamma, h);
    PhaseState out;
    out.x = s.x + c.c_p * s.p - c.c_g * pot.grad(x_plus) + xi1_h;
    out.p = c.decay * s.p - c.c_p * pot.grad(x_plus2) + xi2_h;
    return out;
}

// Standard step: draw the two midpoint fractions, then the four noises
// jointly. build_noise_cov stores times ascending, so map its rows back to
// the (u, v) order before use.
inline PhaseState rm_ulmc_step(const Potential& pot, const PhaseState& s, double gamma, double h,
                               RngStream& rng) {
    const double u = sample_midpoint_u(gamma, h, rng);
    const double v = sample_midpoint_v(gamma, h, rng);
    const noise::NoiseCov nc = noise::build_noise_cov(gamma, h, u * h, v * h);
    const noise::JointNoiseDraw d = noise::draw_joint_noise(nc, pot.dim(), rng);
    const bool u_first = (u <= v);
    return rm_ulmc_step(pot, s, gamma, h, u, v, u_first ? d.xi1_t1 : d.xi1_t2,
                        u_first ? d.xi1_t2 : d.xi1_t1, d.xi1_h, d.xi2_h);
}

// One-step law of the linear diffusion (quadratic target, Hessian H):
// z_t = Phi z_0 + N(0, Q) with drift matrix A = [[0, I], [-H, -gamma I]].
struct GaussianTransition {
    Mat Phi, Q; // 2d x 2d each
};

// Van Loan block exponential: with C = [[-A, Sigma], [0, A^T]] and
// e^{Ct} = [[.., F12], [0, F22]], the transition is Phi = F22^T and the
// accumulated noise is Q = Phi F12 = int_0^t e^{As} Sigma e^{A^T s} ds,
// Sigma = blockdiag(0, 2 gamma I). One Pade/scaling-squaring call on the
// doubled system yields both pieces.
inline GaussianTransition exact_gaussian_transition(const Mat& H, double gamma, double t) {
    detail::check_step(gamma, t);
    if (H.rows() != H.cols() || H.rows() < 1)
        throw std::invalid_argument("exact_gaussian_transition: H must be square");
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + H.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("exact_gaussian_transition: H must be symmetric");
    const int d = static_cast<int>(H.rows());
    const int n = 2 * d;
    Mat A = Mat::Zero(n, n);
    A.topRightCorner(d, d).setIdentity();
    A.bottomLeftCorner(d, d) = -H;
    A.bottomRightCorner(d, d) = -gamma * Mat::Identity(d, d);

    Mat C = Mat::Zero(2 * n, 2 * n);
    C.topLeftCorner(n, n) = -A;
    C.block(d, n + d, d, d) = 2.0 * gamma * Mat::Identity(d, d); // Sigma's momentum block
    C.bottomRightCorner(n, n) = A.transpose();

    const Mat E = Mat(C * t).exp();
    GaussianTransition tr;
    tr.Phi = E.bottomRightCorner(n, n).transpose();
    tr.Q = tr.Phi * E.topRightCorner(n, n);
    tr.Q = 0.5 * (tr.Q + tr.Q.transpose()).eval();
    if (!tr.Phi.allFinite() || !tr.Q.allFinite())
        throw numerical_error("exact_gaussian_transition: matrix exponential is non-finite");
    return tr;
}

inline GaussianMoments propagate_moments(const GaussianTransition& tr, const GaussianMoments& m) {
    if (m.mean.size() != tr.Phi.rows())
        throw std::invalid_argument("propagate_moments: dimension mismatch");
    GaussianMoments out;
    out.mean = tr.Phi * m.mean;
    out.cov = tr.Phi * m.cov * tr.Phi.transpose() + tr.Q;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

// Precomputed exact sampler: one factorization, then an affine map per step.
struct ExactGaussianKernel {
    double gamma = 0.0, h = 0.0;
    GaussianTransition tr;
    Mat chol;            // lower factor of tr.Q
    double jitter = 0.0; // diagonal jitter the factorization needed

    PhaseState step(const PhaseState& s, RngStream& rng) const {
        if (2 * s.dim() != tr.Phi.rows())
            throw std::invalid_argument("ExactGaussianKernel: dimension mismatch");
        Vec z(tr.Phi.rows());
        for (int i = 0; i < z.size(); ++i) z[i] = rng.gauss();
        return detail::unstack(Vec(tr.Phi * detail::stack(s) + chol * z));
    }
};

inline ExactGaussianKernel make_exact_gaussian_kernel(const Mat& H, double gamma, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("make_exact_gaussian_kernel: h must be positive");
    ExactGaussianKernel k;
    k.gamma = gamma;
    k.h = h;
    k.tr = exact_gaussian_transition(H, gamma, h);
    k.chol = chol_psd(k.tr.Q, &k.jitter);
    return k;
}

inline PhaseState exact_gaussian_step(const Mat& H, const PhaseState& s, double gamma, double t,
                                      RngStream& rng) {
    return make_exact_gaussian_kernel(H, gamma, t).step(s, rng);
}

// Per-eigenvalue transition of the same linear system: for scalar curvature
// lambda the drift matrix is A = [[0, 1], [-lambda, -gamma]] with eigenvalues
// mu_pm = (-gamma pm sqrt(gamma^2 - 4 lambda))/2, and
//   e^{At} = [[e11, a], [-lambda a, b]],
//   a = e^{mu_- t} int_0^t e^{(mu_+ - mu_-) r} dr,  b = mu_- a + e^{mu_+ t},
//   e11 = e^{mu_+ t} - mu_+ a.
// The divided difference runs through cint, so critically damped spectra
// (gamma^2 = 4 lambda) need no special casing.
struct ScalarTransition {
    double e11 = 1.0, a = 0.0, b = 1.0;
    double lambda = 0.0;

    Mat2 matrix() const {
        Mat2 m;
        m << e11, a, -lambda * a, b;
        return m;
    }
};

inline ScalarTransition scalar_transition(double lambda, double gamma, double t) {
    detail::check_step(gamma, t);
    if (!std::isfinite(lambda))
        throw std::invalid_argument("scalar_transition: lambda must be finite");
    using Cx = std::complex<double>;
    const Cx disc = std::sqrt(Cx(gamma * gamma - 4.0 * lambda, 0.0));
    const Cx mu_p = 0.5 * (-gamma + disc);
    const Cx mu_m = 0.5 * (-gamma - disc);
    if (mu_p.real() * t > 690.0)
        throw numerical_error("scalar_transition: exponential overflow (unstable mode)");
    const Cx a = std::exp(mu_m * t) * cint(disc, t);
    const Cx ep = std::exp(mu_p * t);
    ScalarTransition st;
    st.lambda = lambda;
    st.a = a.real(); // imaginary parts cancel up to rounding
    st.b = (mu_m * a + ep).real();
    st.e11 = (ep - mu_p * a).real();
    return st;
}

// Accumulated noise covariance of the scalar system,
//   Q(t) = 2 gamma int_0^t (a, b)(s) (a, b)(s)^T ds,
// by adaptive quadrature on the closed-form integrand. Serves as the
// spectral oracle for the Van Loan route.
inline Mat2 scalar_noise_cov(double lambda, double gamma, double t) {
    detail::check_step(gamma, t);
    if (t == 0.0) return Mat2::Zero();
    using boost::math::quadrature::gauss_kronrod;
    const auto integrate = [&](auto&& f) {
        return gauss_kronrod<double, 15>::integrate(f, 0.0, t, 10, 1e-12);
    };
    const double qaa = integrate([&](double s) { return sq(scalar_transition(lambda, gamma, s).a); });
    const double qbb = integrate([&](double s) { return sq(scalar_transition(lambda, gamma, s).b); });
    const double qab = integrate([&](double s) {
        const ScalarTransition st = scalar_transition(lambda, gamma, s);
        return st.a * st.b;
    });
    Mat2 q;
    q << 2.0 * gamma * qaa, 2.0 * gamma * qab, 2.0 * gamma * qab, 2.0 * gamma * qbb;
    return q;
}

// Law of (X_T, P_T) for the driftless model system dX = P dt,
// dP = sqrt(2 gamma) dB (integrated Brownian motion scaled by the noise
// intensity): mean (x + pT, p), covariance 2 gamma [[T^3/3, T^2/2], [T^2/2, T]]
// per coordinate. This is the comparison law of the Girsanov analysis, not
// the Langevin semigroup: the friction drift is dropped while the friction
// noise is kept, so it only matches exact_gaussian_transition(0, gamma, T)
// in the gamma T -> 0 limit.
inline GaussianMoments ibm_gaussian_law(const PhaseState& s, double gamma, double T) {
    detail::check_step(gamma, T);
    const int d = s.dim();
    GaussianMoments m;
    m.mean = Vec(2 * d);
    m.mean << s.x + T * s.p, s.p;
    m.cov = Mat::Zero(2 * d, 2 * d);
    const Mat id = Mat::Identity(d, d);
    m.cov.topLeftCorner(d, d) = (2.0 * gamma * T * T * T / 3.0) * id;
    m.cov.topRightCorner(d, d) = (gamma * T * T) * id;
    m.cov.bottomLeftCorner(d, d) = (gamma * T * T) * id;
    m.cov.bottomRightCorner(d, d) = (2.0 * gamma * T) * id;
    return m;
}

} // namespace langevin
