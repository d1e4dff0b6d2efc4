#include "fmkit/solver.hpp"

#include <cmath>

#include "fmkit/errors.hpp"
#include "fmkit/parallel.hpp"
#include "fmkit/path.hpp"

namespace fmkit {

namespace {

constexpr double kFdStep = 1e-4;

void check_finite(std::span<const double> v, double t) {
    for (double x : v)
        if (!std::isfinite(x))
            throw SimulationError("non-finite model output at t = " + std::to_string(t));
}

// Number of fixed steps covering [a, b] with step h; the last step lands
// exactly on b.
int step_count(double a, double b, double h) {
    const double span = b - a;
    int n = static_cast<int>(std::ceil(span / h - 1e-12));
    return n < 1 ? 1 : n;
}

struct Stepper {
    const VelocityField& field;
    OdeMethod method;
    std::vector<double> u1, u2, mid;

    explicit Stepper(const VelocityField& f, OdeMethod m)
        : field(f), method(m), u1(static_cast<std::size_t>(f.dim())),
          u2(static_cast<std::size_t>(f.dim())), mid(static_cast<std::size_t>(f.dim())) {}

    void advance(std::vector<double>& x, double t, double h) {
        field.eval(x, t, u1);
        check_finite(u1, t);
        if (method == OdeMethod::Euler) {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * u1[i];
            return;
        }
        for (std::size_t i = 0; i < x.size(); ++i) mid[i] = x[i] + 0.5 * h * u1[i];
        field.eval(mid, t + 0.5 * h, u2);
        check_finite(u2, t + 0.5 * h);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * u2[i];
    }
};

}  // namespace

OdeMethod ode_method_from_name(const std::string& name) {
    if (name == "euler") return OdeMethod::Euler;
    if (name == "midpoint") return OdeMethod::Midpoint;
    throw ConfigError("unknown ODE method: " + name);
}

void SolveConfig::validate() const {
    if (!(t_start >= 0.0 && t_start < t_end && t_end <= 1.0))
        throw ConfigError("solve window requires 0 <= t_start < t_end <= 1");
    if (!(h > 0.0)) throw ConfigError("step size must be positive");
    if (h > t_end - t_start + 1e-15)
        throw ConfigError("step size exceeds the time window");
    if (n_probes < 1) throw ConfigError("hutchinson needs n_probes >= 1");
}

Trajectory ode_sample(const VelocityField& field, std::span<const double> x_init,
                      const SolveConfig& cfg) {
    cfg.validate();
    if (x_init.size() != static_cast<std::size_t>(field.dim()))
        throw ArgumentError("ode_sample: initial state dimension mismatch");
    Trajectory traj;
    std::vector<double> x(x_init.begin(), x_init.end());
    traj.push_back({cfg.t_start, x});
    Stepper stepper(field, cfg.method);
    const int n = step_count(cfg.t_start, cfg.t_end, cfg.h);
    double t = cfg.t_start;
    for (int k = 0; k < n; ++k) {
        const double t_next = (k + 1 == n) ? cfg.t_end : cfg.t_start + (k + 1) * cfg.h;
        stepper.advance(x, t, t_next - t);
        t = t_next;
        traj.push_back({t, x});
    }
    return traj;
}

std::vector<double> ode_endpoint(const VelocityField& field, std::span<const double> x_init,
                                 const SolveConfig& cfg) {
    cfg.validate();
    if (x_init.size() != static_cast<std::size_t>(field.dim()))
        throw ArgumentError("ode_endpoint: initial state dimension mismatch");
    std::vector<double> x(x_init.begin(), x_init.end());
    Stepper stepper(field, cfg.method);
    const int n = step_count(cfg.t_start, cfg.t_end, cfg.h);
    double t = cfg.t_start;
    for (int k = 0; k < n; ++k) {
        const double t_next = (k + 1 == n) ? cfg.t_end : cfg.t_start + (k + 1) * cfg.h;
        stepper.advance(x, t, t_next - t);
        t = t_next;
    }
    return x;
}

std::vector<std::vector<double>> ode_endpoints(const VelocityField& field,
                                               const std::vector<std::vector<double>>& x_inits,
                                               const SolveConfig& cfg, int threads) {
    std::vector<std::vector<double>> out(x_inits.size());
    parallel_for(x_inits.size(), threads,
                 [&](std::size_t i) { out[i] = ode_endpoint(field, x_inits[i], cfg); });
    return out;
}

ScoreFn score_from_velocity(const VelocityField& field, const Scheduler& scheduler,
                            bool gaussian_source) {
    if (!gaussian_source)
        throw IncompatibilityError("score is only obtainable from velocity on Gaussian-source paths");
    return [&field, scheduler](double t, std::span<const double> x) {
        std::vector<double> u(x.size());
        field.eval(x, t, u);
        return convert(Parameterization::Velocity, Parameterization::Score, scheduler, t, x, u,
                       /*gaussian_source=*/true);
    };
}

Trajectory sde_sample(const VelocityField& field, const ScoreFn& score,
                      std::span<const double> x_init, const SolveConfig& cfg, Rng& rng) {
    cfg.validate();
    if (x_init.size() != static_cast<std::size_t>(field.dim()))
        throw ArgumentError("sde_sample: initial state dimension mismatch");
    Trajectory traj;
    std::vector<double> x(x_init.begin(), x_init.end());
    traj.push_back({cfg.t_start, x});
    std::vector<double> u(x.size());
    const int n = step_count(cfg.t_start, cfg.t_end, cfg.h);
    double t = cfg.t_start;
    for (int k = 0; k < n; ++k) {
        const double t_next = (k + 1 == n) ? cfg.t_end : cfg.t_start + (k + 1) * cfg.h;
        const double h = t_next - t;
        field.eval(x, t, u);
        check_finite(u, t);
        const double beta = cfg.beta(t);
        if (beta != 0.0) {
            if (!score) throw IncompatibilityError("sde_sample with beta > 0 needs a score accessor");
            const std::vector<double> s = score(t, x);
            const double root_h = std::sqrt(h);
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] += h * (u[i] + 0.5 * beta * beta * s[i]) + beta * root_h * rng.normal();
        } else {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * u[i];
        }
        t = t_next;
        traj.push_back({t, x});
    }
    return traj;
}

std::vector<double> sde_endpoint(const VelocityField& field, const ScoreFn& score,
                                 std::span<const double> x_init, const SolveConfig& cfg,
                                 Rng& rng) {
    return sde_sample(field, score, x_init, cfg, rng).back().x;
}

double exact_divergence(const VelocityField& field, std::span<const double> x, double t) {
    const int d = field.dim();
    if (d > 16) throw ConfigError("exact divergence is limited to d <= 16");
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    std::vector<double> up(static_cast<std::size_t>(d)), um(static_cast<std::size_t>(d));
    double div = 0.0;
    for (int i = 0; i < d; ++i) {
        const std::size_t ii = static_cast<std::size_t>(i);
        xp[ii] = x[ii] + kFdStep;
        xm[ii] = x[ii] - kFdStep;
        field.eval(xp, t, up);
        field.eval(xm, t, um);
        div += (up[ii] - um[ii]) / (2.0 * kFdStep);
        xp[ii] = x[ii];
        xm[ii] = x[ii];
    }
    return div;
}

double hutchinson_divergence(const VelocityField& field, std::span<const double> x, double t,
                             int n_probes, ProbeDist dist, Rng& rng) {
    if (n_probes < 1) throw ConfigError("hutchinson needs n_probes >= 1");
    const std::size_t d = x.size();
    std::vector<double> z(d), jz(d);
    double acc = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        for (std::size_t i = 0; i < d; ++i)
            z[i] = dist == ProbeDist::Rademacher ? rng.rademacher() : rng.normal();
        field.input_vjp(x, t, z, jz);  // z^T J
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += jz[i] * z[i];
        acc += dot;
    }
    return acc / n_probes;
}

LikelihoodResult compute_likelihood(const VelocityField& field, std::span<const double> x1,
                                    const LogDensityFn& log_p0, const SolveConfig& cfg) {
    cfg.validate();
    if (x1.size() != static_cast<std::size_t>(field.dim()))
        throw ArgumentError("compute_likelihood: point dimension mismatch");
    const double a = cfg.clipped_start();
    const double b = cfg.clipped_end();
    if (!(a < b)) throw ConfigError("likelihood window collapsed by eps clipping");

    // Fixed probe set for the whole trajectory keeps the estimator unbiased
    // over probe draws while the integration itself stays deterministic.
    std::vector<std::vector<double>> probes;
    if (cfg.divergence == DivergenceKind::Hutchinson) {
        Rng rng(cfg.seed);
        probes.resize(static_cast<std::size_t>(cfg.n_probes));
        for (auto& z : probes) {
            z.resize(x1.size());
            for (auto& zi : z)
                zi = cfg.probe_dist == ProbeDist::Rademacher ? rng.rademacher() : rng.normal();
        }
    }

    auto divergence_at = [&](std::span<const double> x, double t) {
        if (cfg.divergence == DivergenceKind::ExactFd) return exact_divergence(field, x, t);
        std::vector<double> jz(x.size());
        double acc = 0.0;
        for (const auto& z : probes) {
            field.input_vjp(x, t, z, jz);
            double dot = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) dot += jz[i] * z[i];
            acc += dot;
        }
        return acc / static_cast<double>(probes.size());
    };

    // Augmented state (x, g) marched backwards from b to a:
    //   dx/dt = u_t(x),  dg/dt = -div u_t(x),  g(b) = 0.
    std::vector<double> x(x1.begin(), x1.end());
    double g = 0.0;
    std::vector<double> u(x.size()), mid(x.size()), u2(x.size());
    const int n = step_count(a, b, cfg.h);
    double t = b;
    for (int k = 0; k < n; ++k) {
        const double t_next = (k + 1 == n) ? a : b - (k + 1) * cfg.h;
        const double h = t_next - t;  // negative
        field.eval(x, t, u);
        check_finite(u, t);
        if (cfg.method == OdeMethod::Euler) {
            const double dg = -divergence_at(x, t);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * u[i];
            g += h * dg;
        } else {
            for (std::size_t i = 0; i < x.size(); ++i) mid[i] = x[i] + 0.5 * h * u[i];
            const double t_mid = t + 0.5 * h;
            field.eval(mid, t_mid, u2);
            check_finite(u2, t_mid);
            const double dg_mid = -divergence_at(mid, t_mid);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * u2[i];
            g += h * dg_mid;
        }
        t = t_next;
    }
    LikelihoodResult res;
    res.log_p1 = log_p0(x) - g;
    res.x0 = std::move(x);
    return res;
}

void ScheduleTransformedField::eval(std::span<const double> x, double r,
                                    std::span<double> out) const {
    if (transform_.identity()) {
        inner_->eval(x, r, out);
        return;
    }
    const ScaleTimeEval st = transform_.eval(r);
    std::vector<double> scaled(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = x[i] / st.s;
    std::vector<double> u(x.size());
    inner_->eval(scaled, st.t, u);
    const double a = st.ds / st.s;
    const double b = st.s * st.dt;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * u[i];
}

void ScheduleTransformedField::input_vjp(std::span<const double> x, double r,
                                         std::span<const double> cotangent,
                                         std::span<double> x_bar) const {
    if (transform_.identity()) {
        inner_->input_vjp(x, r, cotangent, x_bar);
        return;
    }
    // J = (ds/s) I + dt * J_inner(x/s), so cot^T J = (ds/s) cot + dt * cot^T J_inner.
    const ScaleTimeEval st = transform_.eval(r);
    std::vector<double> scaled(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = x[i] / st.s;
    std::vector<double> inner_bar(x.size());
    inner_->input_vjp(scaled, st.t, cotangent, inner_bar);
    const double a = st.ds / st.s;
    for (std::size_t i = 0; i < x.size(); ++i) x_bar[i] = a * cotangent[i] + st.dt * inner_bar[i];
}

void ParameterizedVelocityField::eval(std::span<const double> x, double t,
                                      std::span<double> out) const {
    if (param_ == Parameterization::Velocity) {
        inner_->eval(x, t, out);
        return;
    }
    std::vector<double> f(x.size());
    inner_->eval(x, t, f);
    const ConversionCoefficients c =
        conversion_coefficients(param_, Parameterization::Velocity, scheduler_, t, gaussian_);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = c.a * x[i] + c.b * f[i];
}

void ParameterizedVelocityField::input_vjp(std::span<const double> x, double t,
                                           std::span<const double> cotangent,
                                           std::span<double> x_bar) const {
    if (param_ == Parameterization::Velocity) {
        inner_->input_vjp(x, t, cotangent, x_bar);
        return;
    }
    std::vector<double> inner_bar(x.size());
    inner_->input_vjp(x, t, cotangent, inner_bar);
    const ConversionCoefficients c =
        conversion_coefficients(param_, Parameterization::Velocity, scheduler_, t, gaussian_);
    for (std::size_t i = 0; i < x.size(); ++i)
        x_bar[i] = c.a * cotangent[i] + c.b * inner_bar[i];
}

void FunctionField::input_vjp(std::span<const double> x, double t,
                              std::span<const double> cotangent, std::span<double> x_bar) const {
    if (vjp_) {
        vjp_(x, t, cotangent, x_bar);
        return;
    }
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    std::vector<double> up(x.size()), um(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        xp[j] = x[j] + kFdStep;
        xm[j] = x[j] - kFdStep;
        eval_(xp, t, up);
        eval_(xm, t, um);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            acc += cotangent[i] * (up[i] - um[i]) / (2.0 * kFdStep);
        x_bar[j] = acc;
        xp[j] = x[j];
        xm[j] = x[j];
    }
}

}  // namespace fmkit
