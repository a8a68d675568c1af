// Fine Brownian paths: window primitives against quadrature and closed-form
// covariances, conditional splits against the continuum joint law, exactness
// of the aggregation recursions, and the path-coupled exact solution used as
// ground truth for strong-error measurements (including the order-2 rate of
// the piecewise reference integrator).

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "langevin/finepath.hpp"

using namespace langevin;
using Catch::Approx;

namespace {

template <class F>
double integrate(F&& f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 12, 1e-13);
}

void check_entries(const Mat& got, const Mat& want, double rel, double abs = 0.0) {
    REQUIRE(got.rows() == want.rows());
    REQUIRE(got.cols() == want.cols());
    for (int i = 0; i < got.rows(); ++i)
        for (int j = 0; j < got.cols(); ++j)
            CHECK(got(i, j) == Approx(want(i, j)).epsilon(rel).margin(abs));
}

double cov_se(const Mat& c, int i, int j, double n) {
    return std::sqrt((c(i, i) * c(j, j) + c(i, j) * c(i, j)) / n);
}

bool bit_equal(const Vec& a, const Vec& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
}

// Closed-form covariances of (B_s, xi2^{(s)}, B_t, xi2^{(t)}) for s <= t,
// written from the defining integrals (independent of the library forms).
double cov_b_b(double, double s, double) { return s; }
double cov_b_xi2(double g, double s, double t) {
    // cov(B_s, sqrt(2g) int_0^t e^{-g(t-r)} dB_r), s <= t
    return std::sqrt(2.0 / g) * (std::exp(-g * (t - s)) - std::exp(-g * t));
}
double cov_xi2_xi2(double g, double s, double t) {
    return std::exp(-g * (t - s)) * (1.0 - std::exp(-2.0 * g * s));
}

} // namespace

TEST_CASE("window covariance matches quadrature of the defining kernels") {
    for (double u : {1e-8, 1e-3, 0.04, 0.3, 5.0}) {
        const double gamma = 1.7, delta = u / gamma;
        const WindowCov w = window_cov(gamma, delta);
        CHECK(w.var_db == delta);
        const double cov_q = integrate(
            [&](double r) { return std::sqrt(2.0 * gamma) * std::exp(-gamma * (delta - r)); }, 0.0,
            delta);
        const double var_q = integrate(
            [&](double r) { return 2.0 * gamma * std::exp(-2.0 * gamma * (delta - r)); }, 0.0,
            delta);
        CHECK(w.cov_db_xi2 == Approx(cov_q).epsilon(1e-11));
        CHECK(w.var_xi2 == Approx(var_q).epsilon(1e-11));
        // the stored factor reproduces the covariance
        Mat2 l;
        l << w.l11, 0.0, w.l21, w.l22;
        Mat2 c;
        c << w.var_db, w.cov_db_xi2, w.cov_db_xi2, w.var_xi2;
        check_entries(l * l.transpose(), c, 1e-13, 1e-300);
        CHECK(w.l22 > 0.0); // conditional variance never degenerates
    }
    // series and direct branches of the conditional-variance factor agree
    for (double u : {0.049, 0.0499, 0.05, 0.0501}) {
        const double direct = 2.0 * expm1_deficit(u) / u - (-std::expm1(-u));
        CHECK(detail::xi2_schur_factor(u) == Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("piece laws compose to the continuum joint law") {
    // Any window functional here is linear in the per-piece primitives with
    // explicit coefficients, so its covariance is a finite sum of 2x2 forms.
    // Composing the closed-form piece covariances must reproduce the joint
    // law of (xi1_{t_m}, xi1_h, xi2_h) from the noise module exactly.
    const double gamma = 1.5, h = 0.8;
    const int K = 7, m = 3;
    RngStream rng = make_stream(1, "unused");
    FinePath path(gamma, h, K, 1, rng);
    const double tm = path.grid_time(m);

    // coefficient of (db_j, x2_j) in each functional
    struct Coef {
        std::vector<double> a, b;
    };
    auto coef_xi1 = [&](double t, int upto) {
        Coef c{std::vector<double>(K, 0.0), std::vector<double>(K, 0.0)};
        for (int j = 0; j < upto; ++j) {
            c.a[static_cast<std::size_t>(j)] = std::sqrt(2.0 / gamma);
            c.b[static_cast<std::size_t>(j)] =
                -std::exp(-gamma * (t - path.grid_time(j + 1))) / gamma;
        }
        return c;
    };
    Coef xi2h{std::vector<double>(K, 0.0), std::vector<double>(K, 0.0)};
    for (int j = 0; j < K; ++j)
        xi2h.b[static_cast<std::size_t>(j)] = std::exp(-gamma * (h - path.grid_time(j + 1)));
    const Coef f[3] = {coef_xi1(tm, m), coef_xi1(h, K), xi2h};

    auto pair_cov = [&](const Coef& x, const Coef& y) {
        double acc = 0.0;
        for (int j = 0; j < K; ++j) {
            const std::size_t sj = static_cast<std::size_t>(j);
            const double d = path.grid_time(j + 1) - path.grid_time(j);
            const double c12 = std::sqrt(2.0 / gamma) * (1.0 - std::exp(-gamma * d));
            const double c22 = 1.0 - std::exp(-2.0 * gamma * d);
            acc += x.a[sj] * y.a[sj] * d + (x.a[sj] * y.b[sj] + x.b[sj] * y.a[sj]) * c12 +
                   x.b[sj] * y.b[sj] * c22;
        }
        return acc;
    };

    CHECK(pair_cov(f[0], f[0]) == Approx(noise::cov_xi1_xi1(gamma, tm, tm)).epsilon(1e-12));
    CHECK(pair_cov(f[0], f[1]) == Approx(noise::cov_xi1_xi1(gamma, tm, h)).epsilon(1e-12));
    CHECK(pair_cov(f[1], f[1]) == Approx(noise::cov_xi1_xi1(gamma, h, h)).epsilon(1e-12));
    CHECK(pair_cov(f[0], f[2]) == Approx(noise::cov_xi1_xi2(gamma, tm, h)).epsilon(1e-12));
    CHECK(pair_cov(f[1], f[2]) == Approx(noise::cov_xi1_xi2(gamma, h, h)).epsilon(1e-12));
    CHECK(pair_cov(f[2], f[2]) == Approx(noise::var_xi2(gamma, h)).epsilon(1e-12));
}

TEST_CASE("conditional splits reproduce the joint law of old and new windows") {
    const double gamma = 2.2, h = 0.5;
    const double tau = 0.2 * h;
    const int n = 300000;
    RngStream rng = make_stream(42, "split-law");
    Vec sum = Vec::Zero(4);
    Mat outer = Mat::Zero(4, 4);
    for (int i = 0; i < n; ++i) {
        FinePath path(gamma, h, 2, 1, rng);
        path.ensure_breakpoint(tau, rng); // tau is far from the grid, so it splits
        Vec y(4);
        y << path.db_window(0.0, tau)[0], path.xi2_window(0.0, tau)[0],
            path.db_window(0.0, h)[0], path.xi2_window(0.0, h)[0];
        sum += y;
        outer += y * y.transpose();
    }
    const Vec mean = sum / static_cast<double>(n);
    const Mat cov = outer / static_cast<double>(n) - mean * mean.transpose();

    Mat want(4, 4);
    want << cov_b_b(gamma, tau, tau), cov_b_xi2(gamma, tau, tau), cov_b_b(gamma, tau, h),
        cov_b_xi2(gamma, tau, h), 0, cov_xi2_xi2(gamma, tau, tau), cov_b_xi2(gamma, tau, tau),
        cov_xi2_xi2(gamma, tau, h), 0, 0, cov_b_b(gamma, h, h), cov_b_xi2(gamma, h, h), 0, 0, 0,
        cov_xi2_xi2(gamma, h, h);
    want = Mat(want.selfadjointView<Eigen::Upper>());

    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(mean[i]) <= 4.0 * std::sqrt(want(i, i) / n));
        for (int j = i; j < 4; ++j)
            CHECK(std::abs(cov(i, j) - want(i, j)) <= 4.0 * cov_se(want, i, j, n));
    }
}

TEST_CASE("splits conserve the original windows and snap to near-coincident times") {
    const double gamma = 1.1, h = 0.9;
    RngStream rng = make_stream(7, "split-cons");
    FinePath path(gamma, h, 4, 2, rng);
    const Vec db_before = path.db_window(0.0, h);
    const Vec xi2_before = path.xi2_window(0.0, h);
    const Vec xi1_mid_before = path.xi1_window(0.0, path.grid_time(2));

    const double t1 = 0.33 * h, t2 = 0.347 * h; // both inside piece [0.225h, 0.45h]
    REQUIRE(path.ensure_breakpoint(t1, rng) == t1);
    REQUIRE(path.ensure_breakpoint(t2, rng) == t2);
    CHECK(path.pieces() == 6);
    CHECK(path.substeps() == 4); // the uniform grid is untouched
    CHECK(path.grid_time(1) == Approx(h / 4.0).epsilon(1e-15));

    // Recombination is exact only up to rounding: the split stores the right
    // half as (observed - left half), and the window sum re-associates.
    check_entries(path.db_window(0.0, h), db_before, 1e-13, 1e-15);
    check_entries(path.xi2_window(0.0, h), xi2_before, 1e-13, 1e-15);
    check_entries(path.xi1_window(0.0, path.grid_time(2)), xi1_mid_before, 1e-13, 1e-15);

    // near-coincident times snap instead of splitting
    const int before = path.pieces();
    CHECK(path.ensure_breakpoint(path.grid_time(3) + 1e-16, rng) == path.grid_time(3));
    CHECK(path.ensure_breakpoint(0.0, rng) == 0.0);
    CHECK(path.ensure_breakpoint(h, rng) == h);
    CHECK(path.pieces() == before);
    CHECK_THROWS_AS(path.ensure_breakpoint(1.5 * h, rng), std::invalid_argument);
    CHECK_THROWS_AS(path.db_window(0.0, 0.123456), std::invalid_argument);
}

TEST_CASE("one-piece reference step is exactly the plain step") {
    const Potential pot = make_gaussian({1.0, 3.0});
    const double gamma = 1.9, h = 0.3;
    PhaseState s{Vec(2), Vec(2)};
    s.x << 0.4, -1.0;
    s.p << 0.1, 0.8;
    RngStream rng = make_stream(11, "ref1");
    FinePath path(gamma, h, 1, 2, rng);
    const PhaseState a = reference_step(pot, s, path);
    const PhaseState b =
        ulmc_step(pot, s, gamma, h, path.xi1_window(0.0, h), path.xi2_window(0.0, h));
    CHECK(bit_equal(a.x, b.x));
    CHECK(bit_equal(a.p, b.p));
}

TEST_CASE("reference integrator converges to the path-coupled exact solution at "
          "second order in the substep") {
    const Potential pot = make_gaussian({1.0, 1.0});
    const double gamma = 2.0, h = 0.4;
    PhaseState s{Vec(2), Vec(2)};
    s.x << 1.0, -0.5;
    s.p << 0.3, 1.0;
    ExactPathCoupler coupler(pot, gamma, h);

    auto mean_sq_gap = [&](int K, int n, const char* tag) {
        RngStream rng = make_stream(23, tag);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            FinePath path(gamma, h, K, 2, rng);
            const PhaseState ref = reference_step(pot, s, path);
            const PhaseState ex = coupler.step(s, path, rng);
            acc += (ref.x - ex.x).squaredNorm() + (ref.p - ex.p).squaredNorm();
        }
        return acc / n;
    };

    const double g4 = mean_sq_gap(4, 2048, "K4");
    const double g8 = mean_sq_gap(8, 2048, "K8");
    const double g16 = mean_sq_gap(16, 2048, "K16");
    const double g32 = mean_sq_gap(32, 2048, "K32");
    for (double r : {g4 / g8, g8 / g16, g16 / g32}) {
        CHECK(r > 3.5);
        CHECK(r < 4.5);
    }
    // fine-resolution spot check: 32 -> 256 is another factor 8 in K
    const double g256 = mean_sq_gap(256, 512, "K256");
    CHECK(g32 / g256 > 45.0);
    CHECK(g32 / g256 < 90.0);
}

TEST_CASE("double-midpoint step on a path keeps the exact zero-potential law") {
    const Potential pot = Potential::zero(1);
    const double gamma = 1.2, h = 0.6;
    PhaseState s{Vec(1), Vec(1)};
    s.x << 0.3;
    s.p << 1.0;
    const UlmcCoeffs c = ulmc_coeffs(gamma, h);
    const UlmcNoise nz = make_ulmc_noise(gamma, h);
    const int n = 100000;
    RngStream rng = make_stream(61, "rm-path");
    Vec sum = Vec::Zero(2);
    Mat outer = Mat::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
        FinePath path(gamma, h, 3, 1, rng);
        const PhaseState out = rm_ulmc_step_on_path(pot, s, path, rng);
        Vec z(2);
        z << out.x[0], out.p[0];
        sum += z;
        outer += z * z.transpose();
    }
    const Vec mean = sum / static_cast<double>(n);
    const Mat cov = outer / static_cast<double>(n) - mean * mean.transpose();
    CHECK(std::abs(mean[0] - (s.x[0] + c.c_p * s.p[0])) <= 4.0 * std::sqrt(nz.cov(0, 0) / n));
    CHECK(std::abs(mean[1] - c.decay * s.p[0]) <= 4.0 * std::sqrt(nz.cov(1, 1) / n));
    for (int a = 0; a < 2; ++a)
        for (int b = a; b < 2; ++b)
            CHECK(std::abs(cov(a, b) - nz.cov(a, b)) <= 4.0 * cov_se(nz.cov, a, b, n));
}

TEST_CASE("paths and path-driven steps are deterministic given the stream") {
    const Potential pot = make_gaussian({2.0});
    const double gamma = 0.9, h = 0.5;
    PhaseState s{Vec::Ones(1), Vec::Zero(1)};
    auto run = [&] {
        RngStream rng = make_stream(333, "det-path");
        FinePath path(gamma, h, 5, 1, rng);
        return rm_ulmc_step_on_path(pot, s, path, rng);
    };
    const PhaseState a = run(), b = run();
    CHECK(bit_equal(a.x, b.x));
    CHECK(bit_equal(a.p, b.p));
}

TEST_CASE("path-coupled exact solution has the exact marginal law") {
    struct Case {
        double lambda, gamma, h;
        int K;
    };
    // includes a critically damped channel (lambda = gamma^2 / 4)
    for (const Case c : {Case{0.8, 1.1, 0.7, 1}, Case{1.0, 2.0, 0.5, 1}, Case{0.8, 1.1, 0.7, 4}}) {
        Mat H(1, 1);
        H << c.lambda;
        const Potential pot = Potential::quadratic(H);
        ExactPathCoupler coupler(pot, c.gamma, c.h);
        PhaseState s{Vec(1), Vec(1)};
        s.x << 1.0;
        s.p << -0.6;
        GaussianMoments start;
        start.mean = detail::stack(s);
        start.cov = Mat::Zero(2, 2);
        const GaussianMoments want =
            propagate_moments(exact_gaussian_transition(H, c.gamma, c.h), start);

        const int n = 100000;
        RngStream rng = make_stream(88, "coupler-law");
        Vec sum = Vec::Zero(2);
        Mat outer = Mat::Zero(2, 2);
        for (int i = 0; i < n; ++i) {
            FinePath path(c.gamma, c.h, c.K, 1, rng);
            const Vec z = detail::stack(coupler.step(s, path, rng));
            sum += z;
            outer += z * z.transpose();
        }
        const Vec mean = sum / static_cast<double>(n);
        const Mat cov = outer / static_cast<double>(n) - mean * mean.transpose();
        for (int i = 0; i < 2; ++i) {
            CHECK(std::abs(mean[i] - want.mean[i]) <= 4.0 * std::sqrt(want.cov(i, i) / n));
            for (int j = i; j < 2; ++j)
                CHECK(std::abs(cov(i, j) - want.cov(i, j)) <= 4.0 * cov_se(want.cov, i, j, n));
        }
    }
}

TEST_CASE("path coupling commutes with a rotation of the target") {
    const double th = 0.6;
    Mat R(2, 2);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Mat D = Mat::Zero(2, 2);
    D(0, 0) = 0.6;
    D(1, 1) = 2.4;
    const Mat H = R * D * R.transpose();
    const Potential pot = Potential::quadratic(H);
    const double gamma = 1.4, h = 0.3;
    ExactPathCoupler coupler(pot, gamma, h);
    PhaseState s{Vec(2), Vec(2)};
    s.x << 0.8, -0.4;
    s.p << -0.2, 1.1;
    GaussianMoments start;
    start.mean = detail::stack(s);
    start.cov = Mat::Zero(4, 4);
    const GaussianMoments want = propagate_moments(exact_gaussian_transition(H, gamma, h), start);

    const int n = 100000;
    RngStream rng = make_stream(89, "coupler-rot");
    Vec sum = Vec::Zero(4);
    Mat outer = Mat::Zero(4, 4);
    for (int i = 0; i < n; ++i) {
        FinePath path(gamma, h, 5, 2, rng);
        const Vec z = detail::stack(coupler.step(s, path, rng));
        sum += z;
        outer += z * z.transpose();
    }
    const Vec mean = sum / static_cast<double>(n);
    const Mat cov = outer / static_cast<double>(n) - mean * mean.transpose();
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(mean[i] - want.mean[i]) <= 4.0 * std::sqrt(want.cov(i, i) / n));
        for (int j = i; j < 4; ++j)
            CHECK(std::abs(cov(i, j) - want.cov(i, j)) <= 4.0 * cov_se(want.cov, i, j, n));
    }
}

TEST_CASE("path coupler rejects mismatched inputs") {
    CHECK_THROWS_AS(ExactPathCoupler(make_trig_nonconvex(1, 1.0), 1.0, 0.1), regime_error);
    const Potential pot = make_gaussian({1.0});
    ExactPathCoupler coupler(pot, 1.0, 0.1);
    RngStream rng = make_stream(2, "coupler-err");
    FinePath other(1.0, 0.2, 2, 1, rng); // different h
    PhaseState s{Vec::Zero(1), Vec::Zero(1)};
    CHECK_THROWS_AS(coupler.step(s, other, rng), std::invalid_argument);
}
