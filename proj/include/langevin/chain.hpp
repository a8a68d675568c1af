#pragma once
// Chain runner: iterate one of the Markov kernels for n_steps, optionally
// substituting the final step with a ULMC step (so the terminal kernel has a
// Gaussian conditional law regardless of which algorithm ran before it), and
// record running moments, gradient-evaluation counts, and thinned state dumps.

#include <atomic>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "langevin/config.hpp"
#include "langevin/finepath.hpp"

namespace langevin {

enum class KernelKind { ULMC, RMULMC, ExactGaussian, Reference };
enum class LastStep { Same, ULMC };

inline const char* kernel_kind_name(KernelKind k) {
    switch (k) {
        case KernelKind::ULMC: return "ulmc";
        case KernelKind::RMULMC: return "rm_ulmc";
        case KernelKind::ExactGaussian: return "exact_gaussian";
        case KernelKind::Reference: return "reference";
    }
    return "?";
}

inline KernelKind parse_kernel_kind(const std::string& s) {
    for (KernelKind k : {KernelKind::ULMC, KernelKind::RMULMC, KernelKind::ExactGaussian,
                         KernelKind::Reference})
        if (s == kernel_kind_name(k)) return k;
    throw config_error("unknown kernel '" + s + "' (expected ulmc, rm_ulmc, exact_gaussian, or reference)");
}

inline const char* last_step_name(LastStep l) {
    return l == LastStep::Same ? "same" : "ulmc";
}

inline LastStep parse_last_step(const std::string& s) {
    if (s == "same") return LastStep::Same;
    if (s == "ulmc") return LastStep::ULMC;
    throw config_error("unknown last_step '" + s + "' (expected same or ulmc)");
}

struct ChainConfig {
    double gamma = 1.0;
    double h = 0.1;
    long long n_steps = 1;
    KernelKind kernel = KernelKind::ULMC;
    LastStep last_step = LastStep::Same;
    std::uint64_t seed = 0;
    int substeps = 64;  // fine resolution of the reference kernel
    long long thin = 0; // record every `thin` steps (0 = final record only)
    bool dump_states = false;

    void validate() const {
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw config_error("chain: gamma must be positive and finite");
        if (!(h > 0.0) || !std::isfinite(h)) throw config_error("chain: h must be positive and finite");
        if (n_steps < 1) throw config_error("chain: n_steps must be >= 1");
        if (substeps < 1) throw config_error("chain: substeps must be >= 1");
        if (thin < 0) throw config_error("chain: thin must be >= 0");
    }
};

// Streaming first/second moments of the stacked state z = (x, p).
class MomentAccumulator {
  public:
    void add(const PhaseState& s) {
        const Vec z = detail::stack(s);
        if (n_ == 0) {
            sum_ = Vec::Zero(z.size());
            outer_ = Mat::Zero(z.size(), z.size());
        }
        if (z.size() != sum_.size())
            throw std::invalid_argument("MomentAccumulator: dimension changed");
        sum_ += z;
        outer_.selfadjointView<Eigen::Lower>().rankUpdate(z);
        ++n_;
    }

    long long count() const { return n_; }

    Vec mean() const {
        require();
        return sum_ / static_cast<double>(n_);
    }

    Mat cov() const {
        require();
        const Vec m = mean();
        Mat c = Mat(outer_.selfadjointView<Eigen::Lower>()) / static_cast<double>(n_);
        c -= m * m.transpose();
        return 0.5 * (c + c.transpose()).eval();
    }

    GaussianMoments moments() const { return {mean(), cov()}; }

  private:
    void require() const {
        if (n_ == 0) throw std::logic_error("MomentAccumulator: no samples");
    }
    long long n_ = 0;
    Vec sum_;
    Mat outer_; // lower triangle holds sum of z z^T
};

struct ChainRecord {
    long long step = 0;       // 1-based index of the completed step
    double mean_x_norm = 0.0; // norm of the running mean of x
    double cov_trace_x = 0.0; // trace of the running covariance of x
    double cov_trace_p = 0.0;
    long long grad_evals = 0;
};

struct ChainResult {
    PhaseState final_state;
    GaussianMoments moments; // over all post-step states of this run
    long long grad_evals = 0;
    std::vector<ChainRecord> records;
    std::vector<std::pair<long long, PhaseState>> dumped_states;
    bool step_size_warning = false; // gamma * h > 1
};

namespace detail {

inline ChainRecord make_record(long long step, const MomentAccumulator& acc, long long grads) {
    const Vec m = acc.mean();
    const Mat c = acc.cov();
    const int d = static_cast<int>(m.size()) / 2;
    ChainRecord r;
    r.step = step;
    r.mean_x_norm = m.head(d).norm();
    r.cov_trace_x = c.topLeftCorner(d, d).trace();
    r.cov_trace_p = c.bottomRightCorner(d, d).trace();
    r.grad_evals = grads;
    return r;
}

} // namespace detail

// Run n_steps - 1 steps of cfg.kernel followed by one step of the last-step
// kernel (the configured kernel itself when last_step = Same). The step-size
// warning fires when gamma h > 1: every formula stays valid, but accuracy
// guarantees assume h of order min(1/gamma, gamma/beta).
inline ChainResult run_chain(const Potential& pot, const PhaseState& init, const ChainConfig& cfg,
                             RngStream& rng) {
    cfg.validate();
    if (init.dim() != pot.dim()) throw config_error("chain: init dimension does not match potential");
    if (!init.finite()) throw config_error("chain: init state must be finite");

    const Potential counted = make_counting(pot);
    ChainResult res;
    if (cfg.gamma * cfg.h > 1.0) {
        res.step_size_warning = true;
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true))
            std::fprintf(stderr, "warning: gamma*h = %.3g > 1; accuracy guarantees assume smaller steps\n",
                         cfg.gamma * cfg.h);
    }

    const UlmcNoise ulmc_noise = make_ulmc_noise(cfg.gamma, cfg.h);
    ExactGaussianKernel exact;
    const bool needs_exact =
        cfg.kernel == KernelKind::ExactGaussian && (cfg.n_steps > 1 || cfg.last_step == LastStep::Same);
    if (needs_exact) {
        if (pot.kind() != Kind::Quadratic && pot.kind() != Kind::Zero)
            throw config_error("chain: exact_gaussian kernel needs a quadratic potential");
        exact = make_exact_gaussian_kernel(pot.H(), cfg.gamma, cfg.h);
    }

    MomentAccumulator acc;
    PhaseState cur = init;
    for (long long n = 1; n <= cfg.n_steps; ++n) {
        const bool last = (n == cfg.n_steps);
        const KernelKind k =
            (last && cfg.last_step == LastStep::ULMC) ? KernelKind::ULMC : cfg.kernel;
        switch (k) {
            case KernelKind::ULMC: {
                Vec xi1, xi2;
                draw_ulmc_noise(ulmc_noise, cur.dim(), rng, xi1, xi2);
                cur = ulmc_step(counted, cur, cfg.gamma, cfg.h, xi1, xi2);
                break;
            }
            case KernelKind::RMULMC:
                cur = rm_ulmc_step(counted, cur, cfg.gamma, cfg.h, rng);
                break;
            case KernelKind::ExactGaussian:
                cur = exact.step(cur, rng);
                break;
            case KernelKind::Reference:
                cur = reference_step(counted, cur, cfg.gamma, cfg.h, cfg.substeps, rng);
                break;
        }
        if (!cur.finite())
            throw numerical_error("chain diverged at step " + std::to_string(n));
        acc.add(cur);
        const bool record = last || (cfg.thin > 0 && n % cfg.thin == 0);
        if (record) {
            res.records.push_back(detail::make_record(n, acc, counted.grad_count()));
            if (cfg.dump_states) res.dumped_states.emplace_back(n, cur);
        }
    }
    res.final_state = cur;
    res.moments = acc.moments();
    res.grad_evals = counted.grad_count();
    return res;
}

// Gaussian-initialized variant: the initial state is drawn from `init` using
// the same stream that then drives the chain.
inline ChainResult run_chain(const Potential& pot, const GaussianMoments& init,
                             const ChainConfig& cfg, RngStream& rng) {
    return run_chain(pot, sample_state(init, rng), cfg, rng);
}

// Seed-derived convenience: one deterministic stream per (cfg.seed, "chain").
template <class Init>
inline ChainResult run_chain(const Potential& pot, const Init& init, const ChainConfig& cfg) {
    RngStream rng = make_stream(cfg.seed, "chain");
    return run_chain(pot, init, cfg, rng);
}

} // namespace langevin
