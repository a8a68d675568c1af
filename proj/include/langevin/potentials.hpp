#pragma once
// Target potentials V with global curvature bounds alpha*I <= Hess V <= beta*I.
// Four kinds cover the experiments:
//   Zero                V = 0                                   (free momentum checks)
//   Quadratic           V = x'Hx/2                              (Gaussian targets)
//   PerturbedQuadratic  V = x'Hx/2 + a * sum_i sin(f x_i)       (smooth non-Gaussian)
//   TrigNonconvex       V = b * sum_i cos(x_i)                  (alpha = -b < 0)
// Instances are immutable after construction. Gradient calls can be tallied
// through a shared atomic counter attached by make_counting(), so gradient
// budgets reflect evaluations actually performed.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"
#include "mathutil.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace langevin::potentials {

enum class Kind { Zero, Quadratic, PerturbedQuadratic, TrigNonconvex };

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Zero: return "zero";
        case Kind::Quadratic: return "quadratic";
        case Kind::PerturbedQuadratic: return "perturbed_quadratic";
        case Kind::TrigNonconvex: return "trig_nonconvex";
    }
    return "?";
}

class Potential {
  public:
    static Potential zero(int dim) {
        Potential p(Kind::Zero, dim);
        p.alpha_ = p.beta_ = 0.0;
        return p;
    }

    // General symmetric quadratic part. alpha/beta are the extreme
    // eigenvalues of H (exact min/max of the diagonal when H is diagonal).
    static Potential quadratic(Mat H) {
        Potential p(Kind::Quadratic, check_square(H));
        p.set_quadratic_part(std::move(H));
        return p;
    }

    static Potential quadratic_diag(const std::vector<double>& spectrum) {
        if (spectrum.empty()) throw std::invalid_argument("quadratic_diag: empty spectrum");
        Mat H = Mat::Zero(static_cast<int>(spectrum.size()), static_cast<int>(spectrum.size()));
        for (int i = 0; i < H.rows(); ++i) H(i, i) = spectrum[static_cast<std::size_t>(i)];
        return quadratic(std::move(H));
    }

    // Quadratic plus a bounded sinusoid per coordinate; the perturbation's
    // Hessian is diag(-a f^2 sin(f x_i)), so curvature bounds widen by a*f^2.
    static Potential perturbed_quadratic(Mat H, double amplitude, double frequency) {
        if (amplitude < 0.0 || frequency < 0.0)
            throw std::invalid_argument("perturbed_quadratic: amplitude/frequency must be >= 0");
        Potential p(Kind::PerturbedQuadratic, check_square(H));
        p.set_quadratic_part(std::move(H));
        p.amplitude_ = amplitude;
        p.frequency_ = frequency;
        const double widen = amplitude * frequency * frequency;
        p.alpha_ -= widen;
        p.beta_ += widen;
        return p;
    }

    static Potential trig_nonconvex(int dim, double beta) {
        if (dim < 1) throw std::invalid_argument("trig_nonconvex: dim must be >= 1");
        if (beta <= 0.0) throw std::invalid_argument("trig_nonconvex: beta must be > 0");
        Potential p(Kind::TrigNonconvex, dim);
        p.trig_scale_ = beta;
        p.alpha_ = -beta;
        p.beta_ = beta;
        return p;
    }

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double amplitude() const { return amplitude_; }
    double frequency() const { return frequency_; }

    // Quadratic part; zero matrix for Zero / TrigNonconvex.
    const Mat& H() const { return H_; }
    bool diagonal_H() const { return diag_H_; }
    // Eigenvalues of H, ascending (diagonal entries sorted when diagonal).
    const std::vector<double>& spectrum() const { return spectrum_; }

    double eval(const Vec& x) const {
        check_dim(x);
        switch (kind_) {
            case Kind::Zero: return 0.0;
            case Kind::Quadratic: return 0.5 * x.dot(apply_H(x));
            case Kind::PerturbedQuadratic: {
                double s = 0.0;
                for (int i = 0; i < dim_; ++i) s += std::sin(frequency_ * x[i]);
                return 0.5 * x.dot(apply_H(x)) + amplitude_ * s;
            }
            case Kind::TrigNonconvex: {
                double s = 0.0;
                for (int i = 0; i < dim_; ++i) s += std::cos(x[i]);
                return trig_scale_ * s;
            }
        }
        return 0.0;
    }

    Vec grad(const Vec& x) const {
        check_dim(x);
        if (counter_) counter_->fetch_add(1, std::memory_order_relaxed);
        switch (kind_) {
            case Kind::Zero: return Vec::Zero(dim_);
            case Kind::Quadratic: return apply_H(x);
            case Kind::PerturbedQuadratic: {
                Vec g = apply_H(x);
                for (int i = 0; i < dim_; ++i)
                    g[i] += amplitude_ * frequency_ * std::cos(frequency_ * x[i]);
                return g;
            }
            case Kind::TrigNonconvex: {
                Vec g(dim_);
                for (int i = 0; i < dim_; ++i) g[i] = -trig_scale_ * std::sin(x[i]);
                return g;
            }
        }
        return Vec::Zero(dim_);
    }

    // v' Hess V(x) v; available for every built-in kind.
    double hessian_quadform(const Vec& x, const Vec& v) const {
        return v.dot(hess_vec(x, v));
    }

    // Hess V(x) * v.
    Vec hess_vec(const Vec& x, const Vec& v) const {
        check_dim(x);
        check_dim(v);
        switch (kind_) {
            case Kind::Zero: return Vec::Zero(dim_);
            case Kind::Quadratic: return apply_H(v);
            case Kind::PerturbedQuadratic: {
                Vec r = apply_H(v);
                const double af2 = amplitude_ * frequency_ * frequency_;
                for (int i = 0; i < dim_; ++i)
                    r[i] -= af2 * std::sin(frequency_ * x[i]) * v[i];
                return r;
            }
            case Kind::TrigNonconvex: {
                Vec r(dim_);
                for (int i = 0; i < dim_; ++i) r[i] = -trig_scale_ * std::cos(x[i]) * v[i];
                return r;
            }
        }
        return Vec::Zero(dim_);
    }

    bool has_hessian() const { return true; }

    long long grad_count() const {
        return counter_ ? counter_->load(std::memory_order_relaxed) : 0;
    }

    friend Potential make_counting(const Potential& p);

  private:
    Potential(Kind k, int dim) : kind_(k), dim_(dim) {
        if (dim < 1) throw std::invalid_argument("Potential: dim must be >= 1");
        H_ = Mat::Zero(dim, dim);
    }

    static int check_square(const Mat& H) {
        if (H.rows() != H.cols() || H.rows() < 1)
            throw std::invalid_argument("Potential: H must be square and non-empty");
        if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + H.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("Potential: H must be symmetric");
        return static_cast<int>(H.rows());
    }

    void set_quadratic_part(Mat H) {
        H_ = 0.5 * (H + H.transpose()); // exact symmetry for the solvers downstream
        diag_H_ = (H_ - Mat(H_.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
        if (diag_H_) {
            const Vec d = H_.diagonal(); // materialize: the view is strided
            spectrum_.assign(d.data(), d.data() + dim_);
        } else {
            Eigen::SelfAdjointEigenSolver<Mat> es(H_, Eigen::EigenvaluesOnly);
            spectrum_.assign(es.eigenvalues().data(), es.eigenvalues().data() + dim_);
        }
        std::sort(spectrum_.begin(), spectrum_.end());
        alpha_ = spectrum_.front();
        beta_ = spectrum_.back();
    }

    Vec apply_H(const Vec& v) const {
        if (diag_H_) return H_.diagonal().cwiseProduct(v);
        return H_ * v;
    }

    void check_dim(const Vec& x) const {
        if (x.size() != dim_)
            throw std::invalid_argument("Potential: vector has dim " + std::to_string(x.size()) +
                                        ", expected " + std::to_string(dim_));
    }

    Kind kind_;
    int dim_;
    double alpha_ = 0.0, beta_ = 0.0;
    Mat H_;
    bool diag_H_ = true;
    std::vector<double> spectrum_;
    double amplitude_ = 0.0, frequency_ = 0.0;
    double trig_scale_ = 0.0;
    std::shared_ptr<std::atomic<long long>> counter_;
};

// Standard Gaussian-target factory: diagonal H with the given positive
// spectrum, stationary position marginal N(0, H^{-1}).
inline Potential make_gaussian(const std::vector<double>& spectrum) {
    for (double s : spectrum)
        if (!(s > 0.0)) throw std::invalid_argument("make_gaussian: spectrum must be positive");
    return Potential::quadratic_diag(spectrum);
}

inline Potential make_trig_nonconvex(int dim, double beta) {
    return Potential::trig_nonconvex(dim, beta);
}

// Copy of p that tallies gradient evaluations through a fresh shared atomic
// counter (thread-safe; copies of the counted copy share the tally).
inline Potential make_counting(const Potential& p) {
    Potential q = p;
    q.counter_ = std::make_shared<std::atomic<long long>>(0);
    return q;
}

struct CurvatureReport {
    double min_observed = 0.0;   // smallest Rayleigh quotient v'Hv/|v|^2 seen
    double max_observed = 0.0;   // largest
    double alpha_claimed = 0.0;
    double beta_claimed = 0.0;
    bool within_bounds = false;  // observed range inside [alpha, beta] + slack
    std::size_t n_samples = 0;
};

// Empirical check that hessian_quadform stays inside the claimed curvature
// bounds: random points in a centered ball and random directions.
inline CurvatureReport check_curvature(const Potential& p, std::size_t n_samples, double radius,
                                       RngStream& rng) {
    if (n_samples == 0) throw std::invalid_argument("check_curvature: need n_samples >= 1");
    if (radius < 0.0) throw std::invalid_argument("check_curvature: radius must be >= 0");
    CurvatureReport rep;
    rep.alpha_claimed = p.alpha();
    rep.beta_claimed = p.beta();
    rep.n_samples = n_samples;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_samples; ++k) {
        Vec x(p.dim()), v(p.dim());
        for (int i = 0; i < p.dim(); ++i) x[i] = rng.gauss();
        const double nx = x.norm();
        // uniform radius in [0, radius] along a Gaussian direction
        if (nx > 0.0) x *= radius * rng.unif01() / nx;
        double nv = 0.0;
        do {
            for (int i = 0; i < p.dim(); ++i) v[i] = rng.gauss();
            nv = v.norm();
        } while (nv == 0.0);
        const double q = p.hessian_quadform(x, v) / (nv * nv);
        lo = std::min(lo, q);
        hi = std::max(hi, q);
    }
    rep.min_observed = lo;
    rep.max_observed = hi;
    const double slack = 1e-9 * (1.0 + std::abs(rep.alpha_claimed) + std::abs(rep.beta_claimed));
    rep.within_bounds = (lo >= rep.alpha_claimed - slack) && (hi <= rep.beta_claimed + slack);
    return rep;
}

// Build a potential from a config section, e.g.
//   [target]
//   kind = quadratic
//   dim = 4
//   spectrum = 0.1, 0.4, 0.7, 1.0
// A single spectrum value broadcasts to all coordinates. The trig kind takes
// `beta`; the perturbed kind additionally takes `amplitude` and `frequency`.
inline Potential load_potential(const Config& cfg, const std::string& section = "target") {
    const std::string kind = cfg.get_string(section + ".kind");
    const int dim = static_cast<int>(cfg.get_int(section + ".dim"));
    if (dim < 1) throw config_error(section + ".dim must be >= 1");
    if (kind == "zero") return Potential::zero(dim);
    if (kind == "trig_nonconvex")
        return make_trig_nonconvex(dim, cfg.get_double(section + ".beta"));
    if (kind == "quadratic" || kind == "perturbed_quadratic") {
        std::vector<double> spec = cfg.get_vector(section + ".spectrum");
        if (spec.size() == 1 && dim > 1) spec.assign(static_cast<std::size_t>(dim), spec[0]);
        if (static_cast<int>(spec.size()) != dim)
            throw config_error(section + ".spectrum has " + std::to_string(spec.size()) +
                               " entries, expected " + std::to_string(dim));
        if (kind == "quadratic") return Potential::quadratic_diag(spec);
        Mat H = Mat::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) H(i, i) = spec[static_cast<std::size_t>(i)];
        return Potential::perturbed_quadratic(std::move(H), cfg.get_double(section + ".amplitude"),
                                              cfg.get_double(section + ".frequency"));
    }
    throw config_error("unknown " + section + ".kind: " + kind);
}

} // namespace langevin::potentials
