#pragma once

#include <string>

#include "fmkit/errors.hpp"

namespace fmkit {

// All scalar time-warp math lives here: affine schedulers (alpha_t, sigma_t)
// with analytic derivatives, mixture schedulers kappa_t for discrete paths,
// signal-to-noise ratios, and the post-training scale-time transform between
// two schedulers.

enum class SchedulerKind {
    CondOT,      // alpha = t, sigma = 1 - t
    Polynomial,  // alpha = t^n, sigma = 1 - t^n
    LinearVP,    // alpha = t, sigma = sqrt(1 - t^2)
    Cosine,      // alpha = sin(pi t / 2), sigma = cos(pi t / 2)
    VP,          // alpha = exp(-T/2), sigma = sqrt(1 - exp(-T)), T = int_t^1 beta
    VE,          // alpha = 1, sigma = sigma0^(1-t) * sigma_min^t
};

struct SchedulerEval {
    double alpha = 0.0;
    double sigma = 0.0;
    double d_alpha = 0.0;
    double d_sigma = 0.0;
};

class Scheduler {
public:
    Scheduler() = default;

    static Scheduler cond_ot() { return Scheduler(SchedulerKind::CondOT); }
    static Scheduler polynomial(double n);
    static Scheduler linear_vp() { return Scheduler(SchedulerKind::LinearVP); }
    static Scheduler cosine() { return Scheduler(SchedulerKind::Cosine); }
    // beta_t = beta_min + (beta_max - beta_min) * (1 - t); defaults give
    // beta_t = 0.1 + 19.9 (1 - t).
    static Scheduler vp(double beta_min = 0.1, double beta_max = 20.0);
    // sigma interpolates geometrically from sigma0 (noise end) down to
    // sigma_min (data end); alpha is identically 1.
    static Scheduler ve(double sigma0 = 100.0, double sigma_min = 0.01);

    static Scheduler from_name(const std::string& kind, double param_a = 0.0, double param_b = 0.0);

    SchedulerKind kind() const { return kind_; }
    double param_a() const { return a_; }
    double param_b() const { return b_; }

    // VP/VE only hit the alpha(0)=0, sigma(0)=1 boundary approximately
    // (sigma0 >> 1 style families).
    bool approximate_boundary() const {
        return kind_ == SchedulerKind::VP || kind_ == SchedulerKind::VE;
    }

    std::string name() const;

    // Evaluates (alpha, sigma, d_alpha, d_sigma) at t in [0,1]; derivatives
    // are analytic. eps > 0 clamps t into [eps, 1-eps] for kinds whose
    // derivative is singular at an endpoint. Opt-in; default no clamping.
    SchedulerEval eval(double t, double eps = 0.0) const;

    // Signal-to-noise ratio alpha_t / sigma_t, strictly increasing on (0,1).
    double snr(double t) const;

    // Inverse of snr by bisection; tolerance 1e-12, at most 200 iterations.
    // Throws DomainError when rho lies outside the scheduler's SNR range.
    double snr_inverse(double rho) const;

    bool operator==(const Scheduler& other) const {
        return kind_ == other.kind_ && a_ == other.a_ && b_ == other.b_;
    }

private:
    explicit Scheduler(SchedulerKind kind, double a = 0.0, double b = 0.0)
        : kind_(kind), a_(a), b_(b) {}

    SchedulerKind kind_ = SchedulerKind::CondOT;
    double a_ = 0.0;
    double b_ = 0.0;
};

// Mixture scheduler kappa: [0,1] -> [0,1], C1, kappa(0)=0, kappa(1)=1.
class MixtureScheduler {
public:
    MixtureScheduler() = default;

    static MixtureScheduler linear() { return MixtureScheduler(1.0); }
    static MixtureScheduler polynomial_convex(double n);
    static MixtureScheduler from_name(const std::string& kind, double n = 1.0);

    double kappa(double t) const;
    double d_kappa(double t) const;
    double exponent() const { return n_; }
    std::string name() const { return n_ == 1.0 ? "linear" : "polynomial_convex"; }

private:
    explicit MixtureScheduler(double n) : n_(n) {}
    double n_ = 1.0;
};

struct ScaleTimeEval {
    double t = 0.0;    // source time t_r matched to target time r
    double s = 1.0;    // spatial scale s_r
    double dt = 1.0;   // d t_r / d r
    double ds = 0.0;   // d s_r / d r
};

// Matches a model trained under `source` to the time axis of `target`:
// t_r solves snr_source(t_r) = snr_target(r) and s_r = sigma_target(r) /
// sigma_source(t_r). Derivatives come from the chain rule through the SNR
// inverse. Identical schedulers short-circuit to the exact identity so that
// downstream sampling is bit-identical.
class ScaleTimeTransform {
public:
    ScaleTimeTransform(Scheduler source, Scheduler target)
        : source_(source), target_(target), identity_(source == target) {}

    ScaleTimeEval eval(double r) const;

    bool identity() const { return identity_; }
    const Scheduler& source() const { return source_; }
    const Scheduler& target() const { return target_; }

private:
    Scheduler source_;
    Scheduler target_;
    bool identity_;
};

}  // namespace fmkit
