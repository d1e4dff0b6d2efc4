#pragma once

#include <span>
#include <string>
#include <vector>

#include "fmkit/scheduler.hpp"

namespace fmkit {

// Affine conditional probability paths on R^d. The math core is
// single-sample: arrays are flat vectors and batching is the caller's
// leading dimension.

struct PathSample {
    double t = 0.0;
    std::vector<double> x0;
    std::vector<double> x1;
    std::vector<double> x_t;   // alpha_t x1 + sigma_t x0
    std::vector<double> dx_t;  // d_alpha_t x1 + d_sigma_t x0
};

PathSample sample_path(const Scheduler& s, double t, std::span<const double> x0,
                       std::span<const double> x1);

// u_t(x | x1) = d_alpha x1 + (d_sigma / sigma) (x - alpha x1).
// Throws SingularityError when sigma_t = 0.
std::vector<double> conditional_velocity(const Scheduler& s, double t, std::span<const double> x,
                                         std::span<const double> x1);

// Gradient of log N(x; alpha_t x1, sigma_t^2 I): -(x - alpha x1) / sigma^2.
// Assumes a Gaussian source path.
std::vector<double> conditional_score(const Scheduler& s, double t, std::span<const double> x,
                                      std::span<const double> x1);

// Endpoint limits of the marginal velocity for an independent coupling with a
// zero-mean source/target: u_0(x) = d_sigma(0) x, u_1(x) = d_alpha(1) x.
// Optional helpers; the samplers never apply them implicitly.
std::vector<double> endpoint_velocity_at_source(const Scheduler& s, std::span<const double> x);
std::vector<double> endpoint_velocity_at_target(const Scheduler& s, std::span<const double> x);

enum class Parameterization { Velocity, X1Prediction, X0Prediction, Score };

Parameterization parameterization_from_name(const std::string& name);
std::string parameterization_name(Parameterization p);

// Affine coefficients (a_t, b_t) so that f_to(x) = a_t x + b_t f_from(x).
struct ConversionCoefficients {
    double a = 0.0;
    double b = 1.0;
};

// Score conversions hold only on Gaussian-source paths; callers assert that
// with gaussian_source, otherwise an IncompatibilityError is thrown.
// Vanishing coefficient denominators (|den| < 1e-12) raise SingularityError
// instead of propagating inf into the solvers.
ConversionCoefficients conversion_coefficients(Parameterization from, Parameterization to,
                                               const Scheduler& s, double t,
                                               bool gaussian_source = true);

std::vector<double> convert(Parameterization from, Parameterization to, const Scheduler& s,
                            double t, std::span<const double> x, std::span<const double> value,
                            bool gaussian_source = true);

// Closed-form marginal objects for source N(0, I), target N(mu, s2 I) and an
// independent coupling under any affine scheduler. X_t = alpha X1 + sigma X0
// is jointly Gaussian with (X0, X1), so the conditional expectations in the
// marginal velocity are linear in x.
class GaussianOracle {
public:
    GaussianOracle(Scheduler scheduler, std::vector<double> mu, double s2)
        : scheduler_(scheduler), mu_(std::move(mu)), s2_(s2) {}

    int dim() const { return static_cast<int>(mu_.size()); }
    const Scheduler& scheduler() const { return scheduler_; }
    const std::vector<double>& mu() const { return mu_; }
    double s2() const { return s2_; }

    // Var of each coordinate of X_t.
    double marginal_variance(double t) const;

    std::vector<double> velocity(double t, std::span<const double> x) const;
    std::vector<double> score(double t, std::span<const double> x) const;
    double marginal_logpdf(double t, std::span<const double> x) const;

    // d velocity / dx is c(t) I; exposed for analytic divergence and VJPs.
    double velocity_jacobian_scale(double t) const;

private:
    Scheduler scheduler_;
    std::vector<double> mu_;
    double s2_;
};

// CondOT specialization used as a test oracle:
// d_alpha E[X1 | X_t = x] + d_sigma E[X0 | X_t = x] for p = N(0, I),
// q = N(mu, s2 I).
std::vector<double> marginal_velocity_gaussian_oracle(double t, std::span<const double> x,
                                                      std::span<const double> mu, double s2);

}  // namespace fmkit
