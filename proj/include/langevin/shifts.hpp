#pragma once
// Shift schedules for the auxiliary coupled process: the momentum shift rate
// eta_t^p, the slaved position rate eta_t^x = gamma_t eta_t^p / 2, the
// effective friction gamma_t = gamma + eta_t^p, window integrals of both
// rates, and the per-eigenvalue 2x2 blocks (distance decay, skew remainder,
// accumulated-shift drift, shift maps) that drive the twisted-coordinate
// contraction argument. A grid certifier checks the contraction eigenvalue
// floor and reports the worst slack.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "langevin/errors.hpp"
#include "langevin/types.hpp"

namespace langevin {

// Regime rate: alpha/(3 gamma) in the high-friction case gamma >= sqrt(32 beta),
// else -sqrt(beta)/3, where [alpha, beta] brackets the Hessian spectrum.
inline double omega_for(double alpha, double beta, double gamma) {
    if (!(gamma > 0.0) || !(beta >= std::abs(alpha)))
        throw std::invalid_argument("omega_for: need gamma > 0 and beta >= |alpha|");
    if (gamma >= std::sqrt(32.0 * beta)) return alpha / (3.0 * gamma);
    return -std::sqrt(beta) / 3.0;
}

// Schedule on the horizon [0, T]. With zero lead (A = 0) the momentum rate
// blows up like c0/(T - t) at the endpoint; a positive lead A (in units of
// the step h) moves the singularity to T + A h so discrete chains can safely
// evaluate the schedule at t = T, where it is capped near c0/(A h).
struct ShiftSchedule {
    double omega = 0.0; // regime rate; sign carries the convexity/friction case
    double c0 = 192.0;  // shift budget constant; certificates assume >= 24
    double A = 0.0;     // lead-in, in steps; 0 selects the continuous schedule
    double T = 1.0;     // coupling horizon
    double h = 0.0;     // step size; enters only through the lead A*h
    double gamma = 1.0; // base friction of the underlying dynamics

    double lead() const { return A * h; }

    void validate() const {
        if (!std::isfinite(omega)) throw config_error("ShiftSchedule: omega must be finite");
        if (!(c0 >= 24.0)) throw config_error("ShiftSchedule: c0 must be >= 24");
        if (!(A >= 0.0)) throw config_error("ShiftSchedule: A must be >= 0");
        if (!(T > 0.0)) throw config_error("ShiftSchedule: T must be > 0");
        if (!(h >= 0.0)) throw config_error("ShiftSchedule: h must be >= 0");
        if (A > 0.0 && !(h > 0.0)) throw config_error("ShiftSchedule: A > 0 requires h > 0");
        if (!(gamma > 0.0)) throw config_error("ShiftSchedule: gamma must be > 0");
    }
};

// Schedule for Hessian spectrum in [alpha, beta]; picks omega by regime.
inline ShiftSchedule make_schedule(double alpha, double beta, double gamma, double T,
                                   double c0 = 192.0, double A = 0.0, double h = 0.0) {
    ShiftSchedule s;
    s.omega = omega_for(alpha, beta, gamma);
    s.c0 = c0;
    s.A = A;
    s.T = T;
    s.h = h;
    s.gamma = gamma;
    s.validate();
    return s;
}

namespace detail {

// Remaining time to the schedule singularity, T + A h - t. Rejects t outside
// [0, T] and the degenerate endpoint t = T of a zero-lead schedule.
inline double time_to_blowup(const ShiftSchedule& s, double t) {
    if (!(t >= 0.0 && t <= s.T))
        throw schedule_error("shift schedule: t outside [0, T]");
    const double rem = (s.T - t) + s.lead();
    if (!(rem > 0.0))
        throw schedule_error("shift schedule degenerate: t = T with zero lead");
    return rem;
}

// log(1 - e^{-x}) for x > 0. Below log 2 the complement 1 - e^{-x} is far
// from 1 and expm1 carries the precision; above, 1 - e^{-x} would round to 1,
// so log1p on the (exactly representable) small exponential is used instead.
inline double log1mexp(double x) {
    return x > 0.6931471805599453 ? std::log1p(-std::exp(-x)) : std::log(-std::expm1(-x));
}

// log(e^x - 1) for x > 0 without overflow: x + log(1 - e^{-x}).
inline double log_expm1(double x) { return x + log1mexp(x); }

} // namespace detail

// Momentum shift rate eta_t^p = c0 w / (e^{w s} - 1), s = T + A h - t,
// continued through w = 0 by its limit c0 / s. expm1 keeps both small and
// large |w s| exact; overflow of e^{w s} lands on the correct limit 0, and
// saturation at w s << 0 lands on the correct limit c0 |w|.
inline double eta_p(const ShiftSchedule& s, double t) {
    const double rem = detail::time_to_blowup(s, t);
    if (s.omega == 0.0) return s.c0 / rem;
    return s.c0 * s.omega / std::expm1(s.omega * rem);
}

// Effective friction of the shifted dynamics.
inline double gamma_t(const ShiftSchedule& s, double t) { return s.gamma + eta_p(s, t); }

// Position shift rate, slaved to the momentum rate: eta^x = gamma_t eta^p / 2.
inline double eta_x(const ShiftSchedule& s, double t) {
    return 0.5 * gamma_t(s, t) * eta_p(s, t);
}

// d/dt eta_t^p. The schedule solves the Riccati equation eta' = w eta + eta^2/c0,
// which doubles as the derivative of gamma_t since gamma is constant.
inline double eta_p_dot(const ShiftSchedule& s, double t) {
    const double e = eta_p(s, t);
    return s.omega * e + e * e / s.c0;
}

struct EtaIntegrals {
    double p = 0.0; // \int eta^p over the window
    double x = 0.0; // \int eta^x over the window
};

// Window integrals over [a, b]. The momentum rate integrates in closed form,
// c0 [log|1 - e^{-w s}|]_{s=T+Ah-b}^{s=T+Ah-a} (limit c0 log((T+Ah-a)/(T+Ah-b))
// at w = 0), arranged per sign of w so every exponential stays bounded. The
// position rate has no elementary antiderivative and uses adaptive
// Gauss-Kronrod quadrature to relative tolerance 1e-10.
inline EtaIntegrals integrated_eta(const ShiftSchedule& s, double a, double b) {
    if (!(a <= b)) throw std::invalid_argument("integrated_eta: need a <= b");
    const double sa = detail::time_to_blowup(s, a); // sa >= sb > 0
    const double sb = detail::time_to_blowup(s, b);
    EtaIntegrals out;
    if (a == b) return out;
    const double w = s.omega;
    if (w == 0.0)
        out.p = s.c0 * std::log(sa / sb);
    else if (w > 0.0)
        out.p = s.c0 * (detail::log1mexp(w * sa) - detail::log1mexp(w * sb));
    else
        out.p = s.c0 * (detail::log_expm1(-w * sa) - detail::log_expm1(-w * sb));

    // The integrand grows like c0^2/(T + Ah - t)^2 toward the singularity, so
    // windows ending close to it need deep adaptive bisection to resolve.
    double err = 0.0;
    out.x = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        [&](double t) { return eta_x(s, t); }, a, b, 20, 1e-10, &err);
    if (!(err <= 1e-7 * std::max(1.0, std::abs(out.x))))
        throw numerical_error("integrated_eta: position-rate quadrature did not converge");
    return out;
}

// Effective curvature seen by the twisted coordinates at Hessian eigenvalue
// lambda: b_t = lambda + gamma_t eta_t^p / 2 - (d/dt eta_t^p) / 2.
inline double twisted_curvature(const ShiftSchedule& s, double t, double lambda) {
    return lambda + 0.5 * gamma_t(s, t) * eta_p(s, t) - 0.5 * eta_p_dot(s, t);
}

// 2x2 eigenblock of the distance-decay quadratic form at Hessian eigenvalue
// lambda: [[g/2, b/g - g/2], [b/g - g/2, g/2]] with g = gamma_t and b the
// twisted curvature. Its eigenvalues are b/g and g - b/g.
inline Mat2 matrix_M(const ShiftSchedule& s, double t, double lambda) {
    const double g = gamma_t(s, t);
    const double off = twisted_curvature(s, t, lambda) / g - 0.5 * g;
    Mat2 m;
    m << 0.5 * g, off, off, 0.5 * g;
    return m;
}

struct CertifyReport {
    double worst_slack = std::numeric_limits<double>::infinity();
    double worst_t = 0.0;
    double worst_lambda = 0.0;
    std::size_t points = 0;
};

// Checks the contraction floor lambda_min(M_t) >= max(omega, 0)/2 + eta_t^p/48
// at every (t, lambda) grid point. Returns the worst slack over the grid, or
// throws naming the offending point if the floor is violated anywhere.
inline CertifyReport lambda_min_certify(const ShiftSchedule& s, const std::vector<double>& t_grid,
                                        const std::vector<double>& lambda_grid) {
    if (t_grid.empty() || lambda_grid.empty())
        throw std::invalid_argument("lambda_min_certify: empty grid");
    CertifyReport rep;
    for (double t : t_grid) {
        const double floor = 0.5 * std::max(s.omega, 0.0) + eta_p(s, t) / 48.0;
        for (double lam : lambda_grid) {
            const Mat2 m = matrix_M(s, t, lam);
            const double slack = (m(0, 0) - std::abs(m(0, 1))) - floor;
            ++rep.points;
            if (slack < rep.worst_slack) {
                rep.worst_slack = slack;
                rep.worst_t = t;
                rep.worst_lambda = lam;
            }
        }
    }
    if (rep.worst_slack < 0.0) {
        std::ostringstream msg;
        msg << "contraction floor violated at t=" << rep.worst_t
            << ", lambda=" << rep.worst_lambda << " (omega=" << s.omega << ", c0=" << s.c0
            << ", A=" << s.A << ", T=" << s.T << ", h=" << s.h << ", gamma=" << s.gamma
            << "): slack=" << rep.worst_slack;
        throw certification_error(msg.str());
    }
    return rep;
}

struct ShiftWindowMatrices {
    Mat2 m;      // distance-decay block at the current time
    Mat2 m_skew; // antisymmetric remainder from the moving coordinate change
    Mat2 n;      // drift induced by the accumulated, not-yet-applied shift
    Mat2 phi;    // accumulated shift map acting on (dX, dP) differences
    Mat2 upphi;  // the same map written in the twisted (dX, dZ) coordinates
};

// Per-eigenvalue blocks of the "diffuse then shift" decomposition over the
// window [t_minus, t]: instantaneous rates enter at the current time t, the
// accumulated shift through its integrals over the window. At t = t_minus the
// integrals vanish, so n = 0 and phi = upphi = I.
inline ShiftWindowMatrices matrices_discrete(const ShiftSchedule& s, double t_minus, double t,
                                             double lambda) {
    const EtaIntegrals ieta = integrated_eta(s, t_minus, t);
    const double g = gamma_t(s, t);
    const double ex = eta_x(s, t);
    const double gdot = eta_p_dot(s, t);

    ShiftWindowMatrices out;
    out.m = matrix_M(s, t, lambda);
    const double skew = (ex - 0.5 * gdot + lambda) / g;
    out.m_skew << 0.0, -skew, skew, 0.0;
    const double n10 = -ieta.x + s.gamma * ieta.p + gdot * ieta.p / g -
                       2.0 * gdot * ieta.x / (g * g) - 2.0 * ieta.p * lambda / g;
    const double n11 = ieta.x - s.gamma * ieta.p - gdot * ieta.p / g;
    out.n << 0.0, 0.0, n10, n11;
    out.phi << 1.0, 0.0, -ieta.x, 1.0 - ieta.p;
    out.upphi << 1.0, 0.0, ieta.p - 2.0 * ieta.x / g, 1.0 - ieta.p;
    return out;
}

} // namespace langevin
