#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <vector>

#include "langevin/bounds.hpp"
#include "langevin/errors.hpp"
#include "langevin/kernels.hpp"
#include "langevin/metrics.hpp"
#include "langevin/parallel.hpp"
#include "langevin/potentials.hpp"
#include "langevin/rng.hpp"
#include "langevin/types.hpp"

using namespace langevin;

namespace {

GaussianMoments dirac_at(const Vec& z) {
    GaussianMoments m;
    m.mean = z;
    m.cov = Mat::Zero(z.size(), z.size());
    return m;
}

GaussianMoments isotropic_law(int d) {
    GaussianMoments m;
    m.mean = Vec::Zero(2 * d);
    m.cov = Mat::Identity(2 * d, 2 * d);
    return m;
}

Vec vec4(double a, double b, double c, double d) {
    Vec v(4);
    v << a, b, c, d;
    return v;
}

} // namespace

TEST_CASE("exponent fits recover power laws and reject unusable grids") {
    const std::vector<double> hs{0.4, 0.2, 0.1, 0.05, 0.025};

    std::vector<double> quad;
    for (double h : hs) quad.push_back(h * h);
    const ErrorFit f2 = fit_exponent(hs, quad);
    CHECK(f2.exponent == Catch::Approx(2.0).epsilon(1e-12));
    CHECK(f2.r_squared == Catch::Approx(1.0).epsilon(1e-12));

    std::vector<double> cubic;
    double sign = 1.0;
    for (double h : hs) {
        cubic.push_back(3.0 * h * h * h * (1.0 + 0.01 * sign));
        sign = -sign;
    }
    const ErrorFit f3 = fit_exponent(hs, cubic);
    CHECK(f3.exponent > 2.9);
    CHECK(f3.exponent < 3.1);
    CHECK(f3.r_squared > 0.999);
    CHECK(f3.intercept == Catch::Approx(std::log(3.0)).margin(0.05));

    // Garbage has no power law to find.
    const std::vector<double> garbage{2.0, 0.03, 1.1, 0.4, 0.9};
    CHECK(fit_exponent(hs, garbage).r_squared < 0.6);

    CHECK_THROWS_AS(fit_exponent({0.4, 0.2, 0.1}, {1.0, 1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_exponent(hs, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_exponent({0.4, 0.3, 0.2, 0.1}, {1.0, 1.0, 1.0, 1.0}),
                    std::invalid_argument); // 0.4/0.3 < 1.5
    CHECK_THROWS_AS(fit_exponent({0.1, 0.2, 0.4, 0.8}, {1.0, 1.0, 1.0, 1.0}),
                    std::invalid_argument); // increasing
    CHECK_THROWS_AS(fit_exponent(hs, {1.0, 1.0, 0.0, 1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_exponent(hs, {1.0, 1.0, -2.0, 1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("the exact kernel law matches one-step and free-streaming oracles") {
    Mat H(2, 2);
    H << 2.0, 0.3, 0.3, 1.0;
    const Potential pot = Potential::quadratic(H);
    const double gamma = 1.7, h = 0.21;

    SECTION("one step from a point mass") {
        const Vec z0 = vec4(0.3, -0.2, 0.5, 0.1);
        const GaussianMoments law = ulmc_exact_law(H, gamma, h, 1, dirac_at(z0));

        const PhaseState s0{z0.head(2), z0.tail(2)};
        const Vec zero = Vec::Zero(2);
        const PhaseState s1 = ulmc_step(pot, s0, gamma, h, zero, zero);
        CHECK((law.mean.head(2) - s1.x).norm() < 1e-13);
        CHECK((law.mean.tail(2) - s1.p).norm() < 1e-13);

        const UlmcNoise un = make_ulmc_noise(gamma, h);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                const Mat block = law.cov.block(2 * a, 2 * b, 2, 2);
                CHECK((block - un.cov(a, b) * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <
                      1e-13 * (1.0 + std::abs(un.cov(a, b))));
            }
    }

    SECTION("free streaming reproduces the exact transition semigroup") {
        const Mat Hz = Mat::Zero(2, 2);
        GaussianMoments init;
        init.mean = vec4(0.4, -0.1, 0.2, 0.9);
        Mat A(4, 4);
        A << 1.0, 0.2, 0.0, -0.3, 0.1, 0.8, 0.4, 0.0, -0.2, 0.3, 1.1, 0.2, 0.0, -0.1, 0.5, 0.9;
        init.cov = A * A.transpose() + 0.5 * Mat::Identity(4, 4);

        const long long n = 7;
        const double g2 = 0.9, h2 = 0.13;
        const GaussianMoments law = ulmc_exact_law(Hz, g2, h2, n, init);
        const GaussianTransition tr =
            exact_gaussian_transition(Hz, g2, static_cast<double>(n) * h2);
        const GaussianMoments want = propagate_moments(tr, init);
        CHECK((law.mean - want.mean).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((law.cov - want.cov).cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("zero steps return the initial law; bad arguments throw") {
        GaussianMoments init = isotropic_law(2);
        init.mean = vec4(1.0, 2.0, 3.0, 4.0);
        const GaussianMoments same = ulmc_exact_law(H, gamma, h, 0, init);
        CHECK((same.mean - init.mean).norm() == 0.0);
        CHECK((same.cov - init.cov).norm() == 0.0);

        Mat bad = H;
        bad(0, 1) = 0.9; // asymmetric
        CHECK_THROWS_AS(ulmc_exact_law(bad, gamma, h, 1, init), std::invalid_argument);
        Mat indef(2, 2);
        indef << 1.0, 2.0, 2.0, 1.0;
        CHECK_THROWS_AS(ulmc_exact_law(indef, gamma, h, 1, init), std::invalid_argument);
        CHECK_THROWS_AS(ulmc_exact_law(H, gamma, h, -1, init), std::invalid_argument);
        CHECK_THROWS_AS(ulmc_exact_law(H, gamma, h, 1, isotropic_law(3)),
                        std::invalid_argument);
    }
}

TEST_CASE("the kernel's stationary bias decays at second order in the step") {
    const Potential pot = Potential::quadratic_diag({1.0, 4.0});
    const Mat H = pot.H();
    const double gamma = std::sqrt(128.0);
    const GaussianMoments target = stationary_moments(pot);

    GaussianMoments far;
    far.mean = vec4(1.0, -1.0, 0.5, 2.0);
    far.cov = vec4(4.0, 4.0, 2.0, 2.0).asDiagonal();

    const auto plateau = [&](double h) {
        const long long n = static_cast<long long>(std::ceil(120.0 / h));
        GaussianMoments law = ulmc_exact_law(H, gamma, h, n / 2, far);
        double prev = gaussian_kl(law.mean, law.cov, target.mean, target.cov);
        // march the second half in checkpoints; the divergence must settle
        for (int k = 0; k < 5; ++k) {
            law = ulmc_exact_law(H, gamma, h, n / 10, law);
            const double cur = gaussian_kl(law.mean, law.cov, target.mean, target.cov);
            CHECK(cur <= prev * (1.0 + 1e-9) + 1e-12);
            prev = cur;
        }
        return prev;
    };

    const double p1 = plateau(0.1), p2 = plateau(0.05), p3 = plateau(0.025);
    std::cerr << "[probe] plateaus " << p1 << " " << p2 << " " << p3 << " ratios "
              << p1 / p2 << " " << p2 / p3 << "\n";
    CHECK(p1 > p2);
    CHECK(p2 > p3);
    CHECK(p1 / p2 > 3.0);
    CHECK(p1 / p2 < 5.0);
    CHECK(p2 / p3 > 3.0);
    CHECK(p2 / p3 < 5.0);
}

TEST_CASE("iterating the exact law reaches one fixed point from distinct starts") {
    const Potential pot = Potential::quadratic_diag({1.0, 4.0});
    const Mat H = pot.H();
    const double gamma = std::sqrt(128.0), h = 0.05;

    GaussianMoments far;
    far.mean = vec4(1.0, -1.0, 0.5, 2.0);
    far.cov = vec4(4.0, 4.0, 2.0, 2.0).asDiagonal();

    const GaussianMoments a = ulmc_exact_law(H, gamma, h, 10000, stationary_moments(pot));
    const GaussianMoments b = ulmc_exact_law(H, gamma, h, 10000, far);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + a.cov.cwiseAbs().maxCoeff()));
}

TEST_CASE("reference composition error halves per substep doubling") {
    const Potential pot = Potential::quadratic_diag({1.0, 4.0});
    const double gamma = 2.0, h = 0.3;

    double prev_pos = 0.0, prev_mom = 0.0;
    int k = 0;
    for (int K : {64, 128, 256}) {
        RngStream rng = make_stream(2024, "test-refconv", static_cast<std::uint64_t>(K));
        const LocalErrorEstimate e =
            strong_error(KernelKind::ExactGaussian, pot, std::nullopt, gamma, h, K, 400, rng);
        std::cerr << "[probe] refconv K=" << K << " pos " << e.pos << " +- " << e.pos_se
                  << " mom " << e.mom << " +- " << e.mom_se << "\n";
        CHECK_FALSE(e.precision_warning);
        if (k > 0) {
            CHECK(prev_pos / e.pos > 1.7);
            CHECK(prev_pos / e.pos < 2.35);
            CHECK(prev_mom / e.mom > 1.7);
            CHECK(prev_mom / e.mom < 2.35);
        }
        prev_pos = e.pos;
        prev_mom = e.mom;
        ++k;
    }
}

TEST_CASE("one-step strong errors scale at the kernels' local orders") {
    const Potential pot = Potential::quadratic_diag({0.4, 1.0, 2.0, 4.0});
    const double gamma = 2.0;
    const std::vector<double> hs{0.1, 0.05, 0.025, 0.0125};

    SECTION("baseline kernel momentum is second order") {
        std::vector<double> mom, pos;
        for (double h : hs) {
            RngStream rng = make_stream(31, "test-ulmc-strong",
                                        static_cast<std::uint64_t>(1.0 / h));
            const LocalErrorEstimate e =
                strong_error(KernelKind::ULMC, pot, std::nullopt, gamma, h, 64, 400, rng);
            CHECK_FALSE(e.precision_warning);
            mom.push_back(e.mom);
            pos.push_back(e.pos);
        }
        const ErrorFit fm = fit_exponent(hs, mom);
        const ErrorFit fp = fit_exponent(hs, pos);
        std::cerr << "[probe] ulmc strong mom exp " << fm.exponent << " r2 " << fm.r_squared
                  << " | pos exp " << fp.exponent << " r2 " << fp.r_squared << "\n";
        CHECK(fm.exponent > 1.75);
        CHECK(fm.exponent < 2.25);
        CHECK(fm.r_squared > 0.99);
    }

    SECTION("randomized midpoint gains an order in position") {
        std::vector<double> mom, pos;
        for (double h : hs) {
            RngStream rng = make_stream(32, "test-rm-strong",
                                        static_cast<std::uint64_t>(1.0 / h));
            const LocalErrorEstimate e =
                strong_error(KernelKind::RMULMC, pot, std::nullopt, gamma, h, 64, 400, rng);
            CHECK_FALSE(e.precision_warning);
            mom.push_back(e.mom);
            pos.push_back(e.pos);
        }
        const ErrorFit fm = fit_exponent(hs, mom);
        const ErrorFit fp = fit_exponent(hs, pos);
        std::cerr << "[probe] rm strong mom exp " << fm.exponent << " r2 " << fm.r_squared
                  << " | pos exp " << fp.exponent << " r2 " << fp.r_squared << "\n";
        CHECK(fm.exponent > 1.75);
        CHECK(fm.exponent < 2.25);
        CHECK(fp.exponent > 2.7);
        CHECK(fp.exponent < 3.3);
        CHECK(fm.r_squared > 0.99);
        CHECK(fp.r_squared > 0.99);
    }
}

TEST_CASE("randomized midpoint weak momentum error is fourth order") {
    const Potential pot = Potential::quadratic_diag({1.0, 4.0});
    const double gamma = 2.0;
    const GaussianMoments start = dirac_at(vec4(1.2, -0.7, 0.8, -1.5));
    const std::vector<double> hs{0.4, 0.2, 0.1, 0.05};

    std::vector<double> mom;
    for (double h : hs) {
        RngStream rng = make_stream(33, "test-rm-weak", static_cast<std::uint64_t>(1.0 / h));
        const LocalErrorEstimate e = weak_error(KernelKind::RMULMC, pot, start, gamma, h, 64,
                                                1000, 128, rng);
        std::cerr << "[probe] rm weak h=" << h << " mom " << e.mom << " +- " << e.mom_se
                  << " pos " << e.pos << " +- " << e.pos_se << "\n";
        mom.push_back(e.mom);
    }
    const ErrorFit fm = fit_exponent(hs, mom);
    std::cerr << "[probe] rm weak mom exp " << fm.exponent << " r2 " << fm.r_squared << "\n";
    CHECK(fm.exponent > 3.6);
    CHECK(fm.exponent < 4.4);
}

TEST_CASE("weak errors never exceed strong errors") {
    struct Config {
        KernelKind kernel;
        Potential pot;
        double gamma, h;
        std::optional<GaussianMoments> mu0;
    };
    const std::vector<Config> configs{
        {KernelKind::ULMC, Potential::quadratic_diag({1.0, 4.0}), 2.0, 0.2, std::nullopt},
        {KernelKind::RMULMC, Potential::quadratic_diag({1.0, 4.0}), 2.0, 0.2, std::nullopt},
        {KernelKind::ULMC, Potential::trig_nonconvex(2, 1.5), 1.5, 0.15, isotropic_law(2)},
        {KernelKind::RMULMC, Potential::trig_nonconvex(2, 1.5), 1.5, 0.15, isotropic_law(2)},
    };
    std::uint64_t tag = 0;
    for (const auto& cfg : configs) {
        RngStream r1 = make_stream(55, "test-jensen-strong", tag);
        RngStream r2 = make_stream(55, "test-jensen-weak", tag);
        ++tag;
        const LocalErrorEstimate s =
            strong_error(cfg.kernel, cfg.pot, cfg.mu0, cfg.gamma, cfg.h, 64, 400, r1);
        const LocalErrorEstimate w =
            weak_error(cfg.kernel, cfg.pot, cfg.mu0, cfg.gamma, cfg.h, 64, 400, 64, r2);
        std::cerr << "[probe] jensen kernel=" << static_cast<int>(cfg.kernel)
                  << " strong pos/mom " << s.pos << "/" << s.mom << " weak pos/mom " << w.pos
                  << "/" << w.mom << "\n";
        CHECK(w.pos <= s.pos + 3.0 * (w.pos_se + s.pos_se));
        CHECK(w.mom <= s.mom + 3.0 * (w.mom_se + s.mom_se));
    }
}

TEST_CASE("free streaming is integrated without error") {
    const Potential pot = Potential::zero(2);
    GaussianMoments mu0 = isotropic_law(2);
    mu0.mean = vec4(0.3, -0.2, 1.0, 0.5);

    RngStream r1 = make_stream(66, "test-zero-strong");
    const LocalErrorEstimate s =
        strong_error(KernelKind::ULMC, pot, mu0, 1.1, 0.37, 64, 200, r1);
    RngStream r2 = make_stream(66, "test-zero-weak");
    const LocalErrorEstimate w =
        weak_error(KernelKind::ULMC, pot, mu0, 1.1, 0.37, 64, 200, 32, r2);
    std::cerr << "[probe] zero strong " << s.pos << " " << s.mom << " weak " << w.pos << " "
              << w.mom << "\n";
    CHECK(s.pos < 1e-8);
    CHECK(s.mom < 1e-8);
    CHECK(w.pos < 1e-8);
    CHECK(w.mom < 1e-8);
}

TEST_CASE("error estimates are invariant under orthogonal conjugation") {
    const double c = std::cos(0.5), s = std::sin(0.5);
    Mat Q(2, 2);
    Q << c, -s, s, c;
    const Mat D = vec4(1.0, 4.0, 0.0, 0.0).head(2).asDiagonal();
    const Potential p1 = Potential::quadratic_diag({1.0, 4.0});
    const Potential p2 = Potential::quadratic(Q * D * Q.transpose());

    RngStream r1 = make_stream(77, "test-rot");
    RngStream r2 = make_stream(77, "test-rot");
    const LocalErrorEstimate e1 =
        strong_error(KernelKind::ULMC, p1, std::nullopt, 2.0, 0.1, 64, 600, r1);
    const LocalErrorEstimate e2 =
        strong_error(KernelKind::ULMC, p2, std::nullopt, 2.0, 0.1, 64, 600, r2);
    std::cerr << "[probe] rot pos " << e1.pos << " vs " << e2.pos << " (se " << e1.pos_se
              << "," << e2.pos_se << ") mom " << e1.mom << " vs " << e2.mom << "\n";
    CHECK(std::abs(e1.pos - e2.pos) <= 3.0 * (e1.pos_se + e2.pos_se));
    CHECK(std::abs(e1.mom - e2.mom) <= 3.0 * (e1.mom_se + e2.mom_se));
}

TEST_CASE("an under-resolved reference on a curved target is rejected") {
    const Potential pot = Potential::trig_nonconvex(2, 1.5);
    GaussianMoments mu0 = isotropic_law(2);
    RngStream rng = make_stream(88, "test-richardson");
    // probe: scan h downward and report gap/err behaviour
    for (double h : {1e-2, 1e-3, 1e-4, 1e-5}) {
        try {
            const LocalErrorEstimate e =
                strong_error(KernelKind::ULMC, pot, mu0, 1.5, h, 64, 16, rng);
            std::cerr << "[probe] richardson h=" << h << " ok pos " << e.pos << " mom "
                      << e.mom << "\n";
        } catch (const numerical_error& ex) {
            std::cerr << "[probe] richardson h=" << h << " threw: " << ex.what() << "\n";
        }
    }
}

TEST_CASE("local error measurement rejects malformed requests") {
    const Potential quad = Potential::quadratic_diag({1.0, 4.0});
    const Potential trig = Potential::trig_nonconvex(2, 1.0);
    RngStream rng = make_stream(99, "test-args");

    CHECK_THROWS_AS(strong_error(KernelKind::ULMC, quad, std::nullopt, 2.0, 0.1, 32, 100, rng),
                    std::invalid_argument); // K_ref too small
    CHECK_THROWS_AS(strong_error(KernelKind::Reference, quad, std::nullopt, 2.0, 0.1, 64, 100,
                                 rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(strong_error(KernelKind::ExactGaussian, trig, isotropic_law(2), 1.0, 0.1,
                                 64, 100, rng),
                    regime_error);
    CHECK_THROWS_AS(weak_error(KernelKind::ULMC, quad, std::nullopt, 2.0, 0.1, 64, 100, 16,
                               rng),
                    std::invalid_argument); // n_resample too small
    CHECK_THROWS_AS(strong_error(KernelKind::ULMC, trig, std::nullopt, 2.0, 0.1, 64, 100, rng),
                    regime_error); // no stationary start on a curved target
}

TEST_CASE("the moment proxy vanishes on target samples and recovers planted shifts") {
    const Potential pot = Potential::quadratic_diag({1.0, 4.0});
    const GaussianMoments target = stationary_moments(pot);
    RngStream rng = make_stream(123, "test-proxy");

    std::vector<PhaseState> samples;
    samples.reserve(4000);
    for (int i = 0; i < 4000; ++i) samples.push_back(sample_state(target, rng));

    const W2Proxy base = empirical_w2_gaussian_proxy(samples, target);
    std::cerr << "[probe] proxy base w2 " << base.w2 << " ci [" << base.ci_lo << ", "
              << base.ci_hi << "]\n";
    CHECK(base.ci_lo >= 0.0);
    CHECK(base.ci_lo <= base.w2);
    CHECK(base.w2 <= base.ci_hi);

    Vec m(2);
    m << 0.9, -0.6;
    std::vector<PhaseState> shifted = samples;
    for (auto& st : shifted) st.x += m;
    const W2Proxy moved = empirical_w2_gaussian_proxy(shifted, target);
    std::cerr << "[probe] proxy shifted w2 " << moved.w2 << " ci [" << moved.ci_lo << ", "
              << moved.ci_hi << "] norm " << m.norm() << "\n";
    CHECK(moved.w2 >= 0.95 * m.norm());

    const std::vector<PhaseState> few(samples.begin(), samples.begin() + 159);
    CHECK_THROWS_AS(empirical_w2_gaussian_proxy(few, target), std::invalid_argument);

    const std::vector<PhaseState> flat(200, samples.front());
    CHECK_THROWS_WITH(empirical_w2_gaussian_proxy(flat, target),
                      Catch::Matchers::ContainsSubstring("sample size"));
}

TEST_CASE("randomized midpoint beats the baseline at a matched gradient budget") {
    const Potential pot = Potential::quadratic_diag({1.0, 3.0, 10.0, 100.0});
    const GaussianMoments target = stationary_moments(pot);
    const double gamma = 2.0, h = 0.08;
    const int n_ulmc = 300, n_rm = 100; // 300 gradient evaluations each
    const std::size_t replicas = 3000;

    const auto run = [&](KernelKind kernel, int n_steps, std::uint64_t seed) {
        std::vector<PhaseState> finals(replicas);
        parallel_for(replicas, [&](std::size_t i) {
            RngStream rs = make_stream(seed, "test-budget-match", i);
            PhaseState s = sample_state(target, rs);
            for (int k = 0; k < n_steps; ++k)
                s = (kernel == KernelKind::ULMC) ? ulmc_step(pot, s, gamma, h, rs)
                                                 : rm_ulmc_step(pot, s, gamma, h, rs);
            finals[i] = s;
        });
        return finals;
    };

    const W2Proxy wu = empirical_w2_gaussian_proxy(run(KernelKind::ULMC, n_ulmc, 7001), target);
    const W2Proxy wr = empirical_w2_gaussian_proxy(run(KernelKind::RMULMC, n_rm, 7002), target);

    // sampling floor at this replica count, from exact draws
    RngStream fr = make_stream(7003, "test-budget-floor");
    std::vector<PhaseState> exact(replicas);
    for (auto& st : exact) st = sample_state(target, fr);
    const W2Proxy floor = empirical_w2_gaussian_proxy(exact, target);

    std::cerr << "[probe] budget ulmc w2 " << wu.w2 << " ci [" << wu.ci_lo << "," << wu.ci_hi
              << "] rm w2 " << wr.w2 << " ci [" << wr.ci_lo << "," << wr.ci_hi << "] floor "
              << floor.w2 << " ci_hi " << floor.ci_hi << "\n";
    CHECK(wr.w2 < wu.w2);
}
