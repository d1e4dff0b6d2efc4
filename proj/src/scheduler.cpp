#include "fmkit/scheduler.hpp"

#include <algorithm>
#include <cmath>

namespace fmkit {

Scheduler Scheduler::polynomial(double n) {
    if (!(n > 0.0)) throw ConfigError("polynomial scheduler requires exponent n > 0");
    return Scheduler(SchedulerKind::Polynomial, n);
}

Scheduler Scheduler::vp(double beta_min, double beta_max) {
    if (!(beta_min > 0.0) || !(beta_max > beta_min))
        throw ConfigError("vp scheduler requires 0 < beta_min < beta_max");
    return Scheduler(SchedulerKind::VP, beta_min, beta_max);
}

Scheduler Scheduler::ve(double sigma0, double sigma_min) {
    if (!(sigma0 > sigma_min) || !(sigma_min > 0.0))
        throw ConfigError("ve scheduler requires sigma0 > sigma_min > 0");
    return Scheduler(SchedulerKind::VE, sigma0, sigma_min);
}

Scheduler Scheduler::from_name(const std::string& kind, double param_a, double param_b) {
    if (kind == "cond_ot") return cond_ot();
    if (kind == "polynomial") return polynomial(param_a == 0.0 ? 1.0 : param_a);
    if (kind == "linear_vp") return linear_vp();
    if (kind == "cosine") return cosine();
    if (kind == "vp") {
        if (param_a == 0.0 && param_b == 0.0) return vp();
        return vp(param_a, param_b);
    }
    if (kind == "ve") {
        if (param_a == 0.0 && param_b == 0.0) return ve();
        return ve(param_a, param_b == 0.0 ? 0.01 : param_b);
    }
    throw ConfigError("unknown scheduler kind: " + kind);
}

std::string Scheduler::name() const {
    switch (kind_) {
        case SchedulerKind::CondOT: return "cond_ot";
        case SchedulerKind::Polynomial: return "polynomial";
        case SchedulerKind::LinearVP: return "linear_vp";
        case SchedulerKind::Cosine: return "cosine";
        case SchedulerKind::VP: return "vp";
        case SchedulerKind::VE: return "ve";
    }
    throw ConfigError("unknown scheduler kind");
}

SchedulerEval Scheduler::eval(double t, double eps) const {
    if (eps > 0.0) t = std::clamp(t, eps, 1.0 - eps);
    SchedulerEval e;
    switch (kind_) {
        case SchedulerKind::CondOT: {
            e = {t, 1.0 - t, 1.0, -1.0};
            break;
        }
        case SchedulerKind::Polynomial: {
            const double n = a_;
            const double tn = std::pow(t, n);
            const double dtn = n * std::pow(t, n - 1.0);
            e = {tn, 1.0 - tn, dtn, -dtn};
            break;
        }
        case SchedulerKind::LinearVP: {
            const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
            e = {t, s, 1.0, s > 0.0 ? -t / s : -INFINITY};
            break;
        }
        case SchedulerKind::Cosine: {
            const double h = 0.5 * M_PI;
            e = {std::sin(h * t), std::cos(h * t), h * std::cos(h * t), -h * std::sin(h * t)};
            break;
        }
        case SchedulerKind::VP: {
            // T(t) = int_t^1 beta_s ds with beta_t = bmin + (bmax - bmin)(1 - t).
            const double bmin = a_, bmax = b_;
            const double u = 1.0 - t;
            const double T = bmin * u + 0.5 * (bmax - bmin) * u * u;
            const double beta = bmin + (bmax - bmin) * u;  // = -dT/dt
            const double alpha = std::exp(-0.5 * T);
            const double sig2 = 1.0 - std::exp(-T);
            const double sigma = std::sqrt(std::max(0.0, sig2));
            const double d_alpha = 0.5 * beta * alpha;
            const double d_sigma = sigma > 0.0 ? -0.5 * beta * std::exp(-T) / sigma : -INFINITY;
            e = {alpha, sigma, d_alpha, d_sigma};
            break;
        }
        case SchedulerKind::VE: {
            const double lr = std::log(a_), lm = std::log(b_);
            const double sigma = std::exp((1.0 - t) * lr + t * lm);
            e = {1.0, sigma, 0.0, sigma * (lm - lr)};
            break;
        }
    }
    return e;
}

double Scheduler::snr(double t) const {
    const SchedulerEval e = eval(t);
    if (!(e.sigma > 0.0)) throw DomainError("snr undefined where sigma_t = 0");
    return e.alpha / e.sigma;
}

double Scheduler::snr_inverse(double rho) const {
    constexpr double kLo = 1e-9, kHi = 1.0 - 1e-9;
    double lo = kLo, hi = kHi;
    const double rho_lo = snr(lo), rho_hi = snr(hi);
    if (rho < rho_lo || rho > rho_hi)
        throw DomainError("snr value outside the scheduler's range");
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (snr(mid) < rho)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

MixtureScheduler MixtureScheduler::polynomial_convex(double n) {
    if (!(n > 0.0)) throw ConfigError("polynomial_convex mixture scheduler requires n > 0");
    return MixtureScheduler(n);
}

MixtureScheduler MixtureScheduler::from_name(const std::string& kind, double n) {
    if (kind == "linear") return linear();
    if (kind == "polynomial_convex") return polynomial_convex(n);
    throw ConfigError("unknown mixture scheduler kind: " + kind);
}

double MixtureScheduler::kappa(double t) const {
    return n_ == 1.0 ? t : std::pow(t, n_);
}

double MixtureScheduler::d_kappa(double t) const {
    return n_ == 1.0 ? 1.0 : n_ * std::pow(t, n_ - 1.0);
}

ScaleTimeEval ScaleTimeTransform::eval(double r) const {
    if (identity_) return {r, 1.0, 1.0, 0.0};
    if (!(r > 0.0 && r < 1.0))
        throw DomainError("scale-time transform requires r in (0,1)");
    const double t = source_.snr_inverse(target_.snr(r));
    const SchedulerEval src = source_.eval(t);
    const SchedulerEval dst = target_.eval(r);
    if (!(src.sigma > 0.0)) throw SingularityError("scale-time hit sigma = 0 on the source scheduler");
    const double s = dst.sigma / src.sigma;
    // d/dt of rho = (a' s - a s') / s^2 for each scheduler.
    const double drho_src = (src.d_alpha * src.sigma - src.alpha * src.d_sigma) / (src.sigma * src.sigma);
    const double drho_dst = (dst.d_alpha * dst.sigma - dst.alpha * dst.d_sigma) / (dst.sigma * dst.sigma);
    if (drho_src == 0.0) throw SingularityError("source scheduler SNR not invertible at matched time");
    const double dt = drho_dst / drho_src;
    const double ds = (dst.d_sigma - s * src.d_sigma * dt) / src.sigma;
    return {t, s, dt, ds};
}

}  // namespace fmkit
