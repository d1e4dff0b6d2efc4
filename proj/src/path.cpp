#include "fmkit/path.hpp"

#include <cmath>

#include "fmkit/errors.hpp"

namespace fmkit {

namespace {

constexpr double kSingularEps = 1e-12;

void require_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) throw ArgumentError(std::string(what) + ": shape mismatch");
}

double checked_div(double num, double den, const char* what) {
    if (std::abs(den) < kSingularEps)
        throw SingularityError(std::string(what) + ": coefficient denominator vanishes");
    return num / den;
}

}  // namespace

PathSample sample_path(const Scheduler& s, double t, std::span<const double> x0,
                       std::span<const double> x1) {
    require_same_size(x0, x1, "sample_path");
    const SchedulerEval e = s.eval(t);
    PathSample out;
    out.t = t;
    out.x0.assign(x0.begin(), x0.end());
    out.x1.assign(x1.begin(), x1.end());
    out.x_t.resize(x0.size());
    out.dx_t.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        out.x_t[i] = e.alpha * x1[i] + e.sigma * x0[i];
        out.dx_t[i] = e.d_alpha * x1[i] + e.d_sigma * x0[i];
    }
    return out;
}

std::vector<double> conditional_velocity(const Scheduler& s, double t, std::span<const double> x,
                                         std::span<const double> x1) {
    require_same_size(x, x1, "conditional_velocity");
    const SchedulerEval e = s.eval(t);
    if (!(e.sigma > 0.0)) throw SingularityError("conditional_velocity: sigma_t = 0");
    std::vector<double> u(x.size());
    const double ratio = e.d_sigma / e.sigma;
    for (std::size_t i = 0; i < x.size(); ++i)
        u[i] = e.d_alpha * x1[i] + ratio * (x[i] - e.alpha * x1[i]);
    return u;
}

std::vector<double> conditional_score(const Scheduler& s, double t, std::span<const double> x,
                                      std::span<const double> x1) {
    require_same_size(x, x1, "conditional_score");
    const SchedulerEval e = s.eval(t);
    if (!(e.sigma > 0.0)) throw SingularityError("conditional_score: sigma_t = 0");
    std::vector<double> g(x.size());
    const double inv_var = 1.0 / (e.sigma * e.sigma);
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = -(x[i] - e.alpha * x1[i]) * inv_var;
    return g;
}

std::vector<double> endpoint_velocity_at_source(const Scheduler& s, std::span<const double> x) {
    const double d_sigma0 = s.eval(0.0).d_sigma;
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = d_sigma0 * x[i];
    return u;
}

std::vector<double> endpoint_velocity_at_target(const Scheduler& s, std::span<const double> x) {
    const double d_alpha1 = s.eval(1.0).d_alpha;
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = d_alpha1 * x[i];
    return u;
}

Parameterization parameterization_from_name(const std::string& name) {
    if (name == "velocity") return Parameterization::Velocity;
    if (name == "x1_prediction") return Parameterization::X1Prediction;
    if (name == "x0_prediction") return Parameterization::X0Prediction;
    if (name == "score") return Parameterization::Score;
    throw ConfigError("unknown parameterization: " + name);
}

std::string parameterization_name(Parameterization p) {
    switch (p) {
        case Parameterization::Velocity: return "velocity";
        case Parameterization::X1Prediction: return "x1_prediction";
        case Parameterization::X0Prediction: return "x0_prediction";
        case Parameterization::Score: return "score";
    }
    throw ConfigError("unknown parameterization");
}

ConversionCoefficients conversion_coefficients(Parameterization from, Parameterization to,
                                               const Scheduler& s, double t,
                                               bool gaussian_source) {
    using P = Parameterization;
    if (from == to) return {0.0, 1.0};
    if ((from == P::Score || to == P::Score) && !gaussian_source)
        throw IncompatibilityError("score conversions require a Gaussian-source path");

    const SchedulerEval e = s.eval(t);
    const double al = e.alpha, si = e.sigma, dal = e.d_alpha, dsi = e.d_sigma;

    if (from == P::X1Prediction && to == P::Velocity)
        return {checked_div(dsi, si, "x1->velocity"), checked_div(dal * si - dsi * al, si, "x1->velocity")};
    if (from == P::X0Prediction && to == P::Velocity)
        return {checked_div(dal, al, "x0->velocity"), checked_div(dsi * al - dal * si, al, "x0->velocity")};
    if (from == P::Score && to == P::Velocity)
        return {checked_div(dal, al, "score->velocity"),
                checked_div(dal * si * si - dsi * si * al, al, "score->velocity")};
    if (from == P::X0Prediction && to == P::X1Prediction)
        return {checked_div(1.0, al, "x0->x1"), checked_div(-si, al, "x0->x1")};
    if (from == P::Score && to == P::X1Prediction)
        return {checked_div(1.0, al, "score->x1"), checked_div(si * si, al, "score->x1")};
    if (from == P::Score && to == P::X0Prediction)
        return {0.0, -si};

    // Remaining pairs are inverses of the direct ones: if f_B = a x + b f_A
    // then f_A = (-a/b) x + (1/b) f_B.
    const ConversionCoefficients fwd = conversion_coefficients(to, from, s, t, gaussian_source);
    if (std::abs(fwd.b) < kSingularEps)
        throw SingularityError("parameterization conversion singular at this t");
    return {-fwd.a / fwd.b, 1.0 / fwd.b};
}

std::vector<double> convert(Parameterization from, Parameterization to, const Scheduler& s,
                            double t, std::span<const double> x, std::span<const double> value,
                            bool gaussian_source) {
    require_same_size(x, value, "convert");
    const ConversionCoefficients c = conversion_coefficients(from, to, s, t, gaussian_source);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = c.a * x[i] + c.b * value[i];
    return out;
}

double GaussianOracle::marginal_variance(double t) const {
    const SchedulerEval e = scheduler_.eval(t);
    return e.alpha * e.alpha * s2_ + e.sigma * e.sigma;
}

std::vector<double> GaussianOracle::velocity(double t, std::span<const double> x) const {
    if (x.size() != mu_.size()) throw ArgumentError("gaussian oracle: shape mismatch");
    const SchedulerEval e = scheduler_.eval(t);
    const double var = e.alpha * e.alpha * s2_ + e.sigma * e.sigma;
    // E[X1 | X_t = x] = mu + (alpha s2 / var)(x - alpha mu)
    // E[X0 | X_t = x] = (sigma / var)(x - alpha mu)
    const double c1 = e.alpha * s2_ / var;
    const double c0 = e.sigma / var;
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - e.alpha * mu_[i];
        u[i] = e.d_alpha * (mu_[i] + c1 * r) + e.d_sigma * c0 * r;
    }
    return u;
}

double GaussianOracle::velocity_jacobian_scale(double t) const {
    const SchedulerEval e = scheduler_.eval(t);
    const double var = e.alpha * e.alpha * s2_ + e.sigma * e.sigma;
    return (e.d_alpha * e.alpha * s2_ + e.d_sigma * e.sigma) / var;
}

std::vector<double> GaussianOracle::score(double t, std::span<const double> x) const {
    if (x.size() != mu_.size()) throw ArgumentError("gaussian oracle: shape mismatch");
    const SchedulerEval e = scheduler_.eval(t);
    const double var = e.alpha * e.alpha * s2_ + e.sigma * e.sigma;
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = -(x[i] - e.alpha * mu_[i]) / var;
    return g;
}

double GaussianOracle::marginal_logpdf(double t, std::span<const double> x) const {
    if (x.size() != mu_.size()) throw ArgumentError("gaussian oracle: shape mismatch");
    const SchedulerEval e = scheduler_.eval(t);
    const double var = e.alpha * e.alpha * s2_ + e.sigma * e.sigma;
    const double d = static_cast<double>(mu_.size());
    double quad = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - e.alpha * mu_[i];
        quad += r * r;
    }
    return -0.5 * d * std::log(2.0 * M_PI * var) - 0.5 * quad / var;
}

std::vector<double> marginal_velocity_gaussian_oracle(double t, std::span<const double> x,
                                                      std::span<const double> mu, double s2) {
    GaussianOracle oracle(Scheduler::cond_ot(), std::vector<double>(mu.begin(), mu.end()), s2);
    return oracle.velocity(t, x);
}

}  // namespace fmkit
