#pragma once
// Brownian-path primitives for common-random-number experiments.
//
// A FinePath stores, for one coarse window [0, h], the pair
//   dB_i = B_{t_{i+1}} - B_{t_i},   xi2_i = sqrt(2 gamma) int e^{-gamma (t_{i+1}-r)} dB_r
// over every piece of a partition of [0, h]. These two primitives determine
// the noises of every integrator in kernels.hpp exactly:
//
//   xi1 over a piece  = sqrt(2/gamma) dB - xi2 / gamma      (an identity),
//   xi2 over [a, b]   = recursion  r <- e^{-gamma len} r + xi2_piece,
//   xi1 over [a, b]   = sqrt(2/gamma) (B_b - B_a) - xi2/gamma.
//
// Noises at times that are not breakpoints (the randomized midpoints) are
// obtained by conditionally splitting the enclosing piece: all variables are
// jointly Gaussian, so conditional mean plus an independent draw of the
// conditional remainder reproduces the law of a single underlying path. The
// same recipe couples the exact Gaussian solution to the path (the piece-wise
// noise functional is conditioned on that piece's primitives), which is what
// makes low-variance integrator comparisons possible.

#include <bit>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "langevin/kernels.hpp"

namespace langevin {

namespace detail {

// Conditional variance factor of xi2 given dB over one window:
// var(xi2 | dB) = em * g(u) with u = gamma delta, em = 1 - e^{-u}, and
//   g(u) = 2 expm1_deficit(u)/u - em = sum_{j>=2} (-1)^j (j-1) u^j/(j+1)!.
// The direct form loses ~6 eps/u digits, so small u switches to the series.
inline double xi2_schur_factor(double u) {
    if (u < 0.05) {
        const double u2 = u * u;
        return u2 * (1.0 / 6.0 - u / 12.0 + u2 / 40.0 - u2 * u / 180.0 + u2 * u2 / 1008.0 -
                     u2 * u2 * u / 6720.0);
    }
    return 2.0 * expm1_deficit(u) / u - (-std::expm1(-u));
}

} // namespace detail

// Joint law of (dB, xi2) over one window of length delta, with its lower
// Cholesky factor: cov = [[delta, sqrt(2/gamma) em], [., em (2 - em)]].
struct WindowCov {
    double delta = 0.0;
    double var_db = 0.0, cov_db_xi2 = 0.0, var_xi2 = 0.0;
    double l11 = 0.0, l21 = 0.0, l22 = 0.0;
};

inline WindowCov window_cov(double gamma, double delta) {
    detail::check_step(gamma, delta);
    if (!(delta > 0.0)) throw std::invalid_argument("window_cov: delta must be positive");
    const double u = gamma * delta;
    const double em = -std::expm1(-u);
    WindowCov w;
    w.delta = delta;
    w.var_db = delta;
    w.cov_db_xi2 = std::sqrt(2.0 / gamma) * em;
    w.var_xi2 = -std::expm1(-2.0 * u);
    w.l11 = std::sqrt(delta);
    w.l21 = w.cov_db_xi2 / w.l11;
    w.l22 = std::sqrt(em * detail::xi2_schur_factor(u));
    return w;
}

class FinePath {
  public:
    // Draw the primitives of `substeps` equal pieces covering [0, h];
    // piece-major, coordinate-inner, two normals per (piece, coordinate).
    FinePath(double gamma, double h, int substeps, int dim, RngStream& rng)
        : gamma_(gamma), h_(h), dim_(dim) {
        detail::check_step(gamma, h);
        if (!(h > 0.0)) throw std::invalid_argument("FinePath: h must be positive");
        if (substeps < 1) throw std::invalid_argument("FinePath: need at least one substep");
        if (dim < 1) throw std::invalid_argument("FinePath: dim must be >= 1");
        grid_ = linspace(0.0, h, static_cast<std::size_t>(substeps) + 1);
        t_ = grid_;
        db_.reserve(grid_.size());
        x2_.reserve(grid_.size());
        for (int j = 0; j < substeps; ++j) {
            const WindowCov w = window_cov(gamma_, grid_[j + 1] - grid_[j]);
            Vec db(dim), x2(dim);
            for (int c = 0; c < dim; ++c) {
                const double z1 = rng.gauss(), z2 = rng.gauss();
                db[c] = w.l11 * z1;
                x2[c] = w.l21 * z1 + w.l22 * z2;
            }
            db_.push_back(std::move(db));
            x2_.push_back(std::move(x2));
        }
    }

    double gamma() const { return gamma_; }
    double h() const { return h_; }
    int dim() const { return dim_; }

    int substeps() const { return static_cast<int>(grid_.size()) - 1; }
    double grid_time(int j) const { return grid_.at(static_cast<std::size_t>(j)); }

    int pieces() const { return static_cast<int>(db_.size()); }
    double piece_start(int i) const { return t_.at(static_cast<std::size_t>(i)); }
    double piece_end(int i) const { return t_.at(static_cast<std::size_t>(i) + 1); }
    const Vec& piece_db(int i) const { return db_.at(static_cast<std::size_t>(i)); }
    const Vec& piece_xi2(int i) const { return x2_.at(static_cast<std::size_t>(i)); }

    // Exact increments over [a, b]; both ends must be existing breakpoints.
    Vec db_window(double a, double b) const {
        const int ia = find(a), ib = find(b);
        Vec acc = Vec::Zero(dim_);
        for (int j = ia; j < ib; ++j) acc += db_[static_cast<std::size_t>(j)];
        return acc;
    }

    Vec xi2_window(double a, double b) const {
        const int ia = find(a), ib = find(b);
        Vec acc = Vec::Zero(dim_);
        for (int j = ia; j < ib; ++j) {
            const std::size_t sj = static_cast<std::size_t>(j);
            acc = std::exp(-gamma_ * (t_[sj + 1] - t_[sj])) * acc + x2_[sj];
        }
        return acc;
    }

    Vec xi1_window(double a, double b) const {
        return std::sqrt(2.0 / gamma_) * db_window(a, b) - xi2_window(a, b) / gamma_;
    }

    // Make tau a breakpoint, conditionally splitting its enclosing piece
    // (consumes two normals per coordinate). Times within 1e-12 h of an
    // existing breakpoint snap to it; returns the breakpoint actually used.
    double ensure_breakpoint(double tau, RngStream& rng) {
        if (!(tau >= 0.0 && tau <= h_))
            throw std::invalid_argument("FinePath: breakpoint outside [0, h]");
        const auto it = std::lower_bound(t_.begin(), t_.end(), tau);
        if (it != t_.end() && *it - tau <= 1e-12 * h_) return *it;
        if (it != t_.begin() && tau - *(it - 1) <= 1e-12 * h_) return *(it - 1);

        const int i = static_cast<int>(it - t_.begin()) - 1;
        const std::size_t si = static_cast<std::size_t>(i);
        const double l = t_[si], r = t_[si + 1];
        const double dl = tau - l, dr = r - tau;
        const double k = std::exp(-gamma_ * dr);
        const double cl = std::sqrt(2.0 / gamma_) * -std::expm1(-gamma_ * dl);
        const double vl = -std::expm1(-2.0 * gamma_ * dl);
        Mat2 c_left, c_yw, c_w;
        c_left << dl, cl, cl, vl;
        c_yw << dl, k * cl, cl, k * vl;
        c_w << dl + dr, std::sqrt(2.0 / gamma_) * -std::expm1(-gamma_ * (dl + dr)),
            std::sqrt(2.0 / gamma_) * -std::expm1(-gamma_ * (dl + dr)),
            -std::expm1(-2.0 * gamma_ * (dl + dr));
        const Mat2 g = c_w.ldlt().solve(c_yw.transpose()).transpose();
        Mat2 cond = c_left - g * c_yw.transpose();
        cond = 0.5 * (cond + cond.transpose()).eval();
        const Mat2 chol = chol_psd(cond);

        Vec db_l(dim_), x2_l(dim_), db_r(dim_), x2_r(dim_);
        for (int c = 0; c < dim_; ++c) {
            const Vec2 obs{db_[si][c], x2_[si][c]};
            const Vec2 z{rng.gauss(), rng.gauss()};
            const Vec2 y = g * obs + chol * z;
            db_l[c] = y[0];
            x2_l[c] = y[1];
            db_r[c] = obs[0] - y[0];
            x2_r[c] = obs[1] - k * y[1];
        }
        t_.insert(t_.begin() + i + 1, tau);
        db_[si] = std::move(db_l);
        x2_[si] = std::move(x2_l);
        db_.insert(db_.begin() + i + 1, std::move(db_r));
        x2_.insert(x2_.begin() + i + 1, std::move(x2_r));
        return tau;
    }

    // Breakpoint index of t (exact value as stored).
    int find(double t) const {
        const auto it = std::lower_bound(t_.begin(), t_.end(), t);
        if (it == t_.end() || *it != t)
            throw std::invalid_argument("FinePath: time is not a breakpoint");
        return static_cast<int>(it - t_.begin());
    }

  private:
    double gamma_, h_;
    int dim_;
    std::vector<double> grid_; // the original uniform breakpoints, never mutated
    std::vector<double> t_;    // all breakpoints, ascending
    std::vector<Vec> db_, x2_; // primitives of piece [t_i, t_{i+1}]
};

// Coarse ULMC step whose noises are the exact Ito sums over the path.
inline PhaseState ulmc_step_on_path(const Potential& pot, const PhaseState& s, FinePath& path) {
    return ulmc_step(pot, s, path.gamma(), path.h(), path.xi1_window(0.0, path.h()),
                     path.xi2_window(0.0, path.h()));
}

// Coarse RM-ULMC step on the path: the midpoint fractions are drawn as usual,
// the path is refined at those times, and all four noises are read off the
// refined path. Snapped midpoints keep coefficient and noise at one time.
inline PhaseState rm_ulmc_step_on_path(const Potential& pot, const PhaseState& s, FinePath& path,
                                       RngStream& rng) {
    const double gamma = path.gamma(), h = path.h();
    const double u = sample_midpoint_u(gamma, h, rng);
    const double v = sample_midpoint_v(gamma, h, rng);
    const double tu = path.ensure_breakpoint(u * h, rng);
    const double tv = path.ensure_breakpoint(v * h, rng);
    return rm_ulmc_step(pot, s, gamma, h, tu / h, tv / h, path.xi1_window(0.0, tu),
                        path.xi1_window(0.0, tv), path.xi1_window(0.0, h),
                        path.xi2_window(0.0, h));
}

// Ground-truth proxy for non-quadratic targets: one exponential Euler substep
// per piece of the original uniform grid, each driven by the exact noises of
// its window. The result is a functional of the same path as the coarse steps.
inline PhaseState reference_step(const Potential& pot, const PhaseState& s, FinePath& path) {
    PhaseState cur = s;
    for (int j = 0; j < path.substeps(); ++j) {
        const double a = path.grid_time(j), b = path.grid_time(j + 1);
        cur = ulmc_step(pot, cur, path.gamma(), b - a, path.xi1_window(a, b),
                        path.xi2_window(a, b));
    }
    return cur;
}

inline PhaseState reference_step(const Potential& pot, const PhaseState& s, double gamma, double h,
                                 int substeps, RngStream& rng) {
    FinePath path(gamma, h, substeps, s.dim(), rng);
    return reference_step(pot, s, path);
}

// Exact Gaussian solution over [0, h] driven by a FinePath. Work in the
// eigenbasis of H, where the system decouples into scalar channels; per piece
// the channel's noise functional w = sqrt(2 gamma) int e^{A (end - r)} (0,1)^T dB_r
// splits into its conditional mean given the piece primitives plus an
// independent conditional remainder, and pieces compound by the semigroup
// recursion w <- e^{A len} w + w_piece. Piece laws are cached per
// (channel, length); instances are not thread-safe.
class ExactPathCoupler {
  public:
    ExactPathCoupler(const Potential& pot, double gamma, double h) : gamma_(gamma), h_(h) {
        detail::check_step(gamma, h);
        if (pot.kind() != Kind::Quadratic && pot.kind() != Kind::Zero)
            throw regime_error("ExactPathCoupler: target must be quadratic");
        dim_ = pot.dim();
        diag_ = pot.diagonal_H();
        if (diag_) {
            lambda_ = pot.H().diagonal();
        } else {
            Eigen::SelfAdjointEigenSolver<Mat> es(pot.H());
            if (es.info() != Eigen::Success)
                throw numerical_error("ExactPathCoupler: eigendecomposition failed");
            basis_ = es.eigenvectors();
            lambda_ = es.eigenvalues();
        }
    }

    PhaseState step(const PhaseState& s, const FinePath& path, RngStream& rng) {
        if (s.dim() != dim_ || path.dim() != dim_)
            throw std::invalid_argument("ExactPathCoupler: dimension mismatch");
        if (path.gamma() != gamma_ || path.h() != h_)
            throw std::invalid_argument("ExactPathCoupler: path built for different (gamma, h)");

        const Vec xr = diag_ ? s.x : Vec(basis_.transpose() * s.x);
        const Vec pr = diag_ ? s.p : Vec(basis_.transpose() * s.p);
        std::vector<Vec> dbr(static_cast<std::size_t>(path.pieces()));
        std::vector<Vec> x2r(static_cast<std::size_t>(path.pieces()));
        for (int i = 0; i < path.pieces(); ++i) {
            dbr[static_cast<std::size_t>(i)] =
                diag_ ? path.piece_db(i) : Vec(basis_.transpose() * path.piece_db(i));
            x2r[static_cast<std::size_t>(i)] =
                diag_ ? path.piece_xi2(i) : Vec(basis_.transpose() * path.piece_xi2(i));
        }

        Vec xo(dim_), po(dim_);
        for (int k = 0; k < dim_; ++k) {
            const Mat2 phi_h = scalar_transition(lambda_[k], gamma_, h_).matrix();
            Vec2 w{0.0, 0.0};
            for (int i = 0; i < path.pieces(); ++i) {
                const double len = path.piece_end(i) - path.piece_start(i);
                const PieceLaw& law = piece_law(k, len);
                const Vec2 obs{dbr[static_cast<std::size_t>(i)][k],
                               x2r[static_cast<std::size_t>(i)][k]};
                const Vec2 z{rng.gauss(), rng.gauss()};
                w = law.phi * w + law.gain * obs + law.chol * z;
            }
            const Vec2 z0{xr[k], pr[k]};
            const Vec2 zo = phi_h * z0 + w;
            xo[k] = zo[0];
            po[k] = zo[1];
        }
        if (diag_) return {xo, po};
        return {Vec(basis_ * xo), Vec(basis_ * po)};
    }

  private:
    struct PieceLaw {
        Mat2 phi;  // e^{A len}
        Mat2 gain; // cov(w, (dB, xi2)) cov(dB, xi2)^{-1}
        Mat2 chol; // lower factor of the conditional remainder covariance
    };

    const PieceLaw& piece_law(int k, double len) {
        const auto key = std::make_pair(k, std::bit_cast<std::uint64_t>(len));
        const auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;

        const double lam = lambda_[k];
        using boost::math::quadrature::gauss_kronrod;
        const auto integral = [&](auto&& f) {
            return gauss_kronrod<double, 15>::integrate(f, 0.0, len, 10, 1e-12);
        };
        // dB-kernels of the conditioned pair: w = int K_w(len - r) dB_r with
        // K_w(s) = sqrt(2 gamma) (a(s), b(s)), and y = (dB, xi2) with
        // K_y(s) = (1, sqrt(2 gamma) e^{-gamma s}).
        const double root = std::sqrt(2.0 * gamma_);
        const auto k_w = [&](double s) {
            const ScalarTransition st = scalar_transition(lam, gamma_, s);
            return Vec2{root * st.a, root * st.b};
        };
        const auto k_y = [&](double s) { return Vec2{1.0, root * std::exp(-gamma_ * s)}; };

        Mat2 m_wc; // cov(w, y) = int K_w K_y^T
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                m_wc(i, j) = integral([&](double s) { return k_w(s)[i] * k_y(s)[j]; });
        const WindowCov wc = window_cov(gamma_, len);
        Mat2 c_w;
        c_w << wc.var_db, wc.cov_db_xi2, wc.cov_db_xi2, wc.var_xi2;

        PieceLaw law;
        law.phi = scalar_transition(lam, gamma_, len).matrix();
        law.gain = c_w.ldlt().solve(m_wc.transpose()).transpose();
        // Conditional covariance as the Gram matrix of the residual kernel
        // K_w - G K_y: positive semidefinite by construction, and accurate at
        // the residual's own scale. The subtraction form Q - G cov(w,y)^T
        // cancels catastrophically once (dB, xi2) nearly determine w (short
        // pieces), so it is not used.
        Mat2 cond;
        for (int i = 0; i < 2; ++i)
            for (int j = i; j < 2; ++j)
                cond(i, j) = cond(j, i) = integral([&](double s) {
                    const Vec2 r = k_w(s) - law.gain * k_y(s);
                    return r[i] * r[j];
                });
        law.chol = chol_psd(cond);
        return cache_.emplace(key, law).first->second;
    }

    double gamma_, h_;
    int dim_ = 0;
    bool diag_ = true;
    Mat basis_;  // empty when diagonal
    Vec lambda_; // per-channel curvature
    std::map<std::pair<int, std::uint64_t>, PieceLaw> cache_;
};

} // namespace langevin
