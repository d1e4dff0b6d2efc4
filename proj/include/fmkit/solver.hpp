#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fmkit/model.hpp"
#include "fmkit/path.hpp"
#include "fmkit/rng.hpp"
#include "fmkit/scheduler.hpp"

namespace fmkit {

// Fixed-step deterministic and stochastic samplers for continuous models,
// divergence estimation, and exact-likelihood estimation via the augmented
// reverse-time ODE. No adaptive stepping: error behavior stays testable
// through order-of-accuracy ratios.

enum class OdeMethod { Euler, Midpoint };
enum class DivergenceKind { ExactFd, Hutchinson };
enum class ProbeDist { Rademacher, Gaussian };

OdeMethod ode_method_from_name(const std::string& name);

struct SolveConfig {
    OdeMethod method = OdeMethod::Midpoint;
    double h = 0.01;
    double t_start = 0.0;
    double t_end = 1.0;
    // Endpoint clip for parameterizations singular at t=0 or t=1; applied by
    // the likelihood and scheduler-transform paths, not by plain sampling.
    double eps = 1e-3;
    DivergenceKind divergence = DivergenceKind::ExactFd;
    int n_probes = 10;
    ProbeDist probe_dist = ProbeDist::Rademacher;
    // Churn level beta_t = churn_base + churn_slope * t (beta_t >= 0).
    double churn_base = 0.0;
    double churn_slope = 0.0;
    std::uint64_t seed = 0;

    double beta(double t) const { return churn_base + churn_slope * t; }
    void validate() const;
    double clipped_start() const { return t_start > eps ? t_start : eps; }
    double clipped_end() const { return t_end < 1.0 - eps ? t_end : 1.0 - eps; }
};

struct TrajectoryPoint {
    double t;
    std::vector<double> x;
};
using Trajectory = std::vector<TrajectoryPoint>;

// Fixed-step march from (t_start, x_init); the final step is shortened to
// land exactly on t_end. Throws SimulationError on non-finite model output.
Trajectory ode_sample(const VelocityField& field, std::span<const double> x_init,
                      const SolveConfig& cfg);

// Endpoint-only variant (no trajectory storage).
std::vector<double> ode_endpoint(const VelocityField& field, std::span<const double> x_init,
                                 const SolveConfig& cfg);

// Batch of trajectories; results indexed by initial condition, deterministic
// under any thread count.
std::vector<std::vector<double>> ode_endpoints(const VelocityField& field,
                                               const std::vector<std::vector<double>>& x_inits,
                                               const SolveConfig& cfg, int threads = 1);

using ScoreFn =
    std::function<std::vector<double>(double t, std::span<const double> x)>;

// Builds a score accessor from a velocity model via the parameterization
// conversion table; valid for Gaussian-source paths only.
ScoreFn score_from_velocity(const VelocityField& field, const Scheduler& scheduler,
                            bool gaussian_source);

// Euler-Maruyama march of
//   dX = [u_t(X) + (beta_t^2 / 2) score_t(X)] dt + beta_t dW.
// With beta identically zero, the march is arithmetically identical to Euler
// ode_sample. The caller provides the noise stream.
Trajectory sde_sample(const VelocityField& field, const ScoreFn& score,
                      std::span<const double> x_init, const SolveConfig& cfg, Rng& rng);

std::vector<double> sde_endpoint(const VelocityField& field, const ScoreFn& score,
                                 std::span<const double> x_init, const SolveConfig& cfg,
                                 Rng& rng);

// Sum of diagonal Jacobian entries via central differences (step 1e-4).
// Intended for small d (<= 16).
double exact_divergence(const VelocityField& field, std::span<const double> x, double t);

// Monte-Carlo trace estimate: mean over probes of z^T (J z) computed with the
// model's input VJP.
double hutchinson_divergence(const VelocityField& field, std::span<const double> x, double t,
                             int n_probes, ProbeDist dist, Rng& rng);

using LogDensityFn = std::function<double(std::span<const double> x)>;

struct LikelihoodResult {
    std::vector<double> x0;
    double log_p1 = 0.0;
};

// Integrates the augmented ODE (state, accumulated divergence) backwards from
// the clipped end time to the clipped start time and evaluates
// log_p0(x0) - g. Deterministic with ExactFd divergence; unbiased over probe
// draws with Hutchinson (probes are drawn once per call and held fixed along
// the trajectory).
LikelihoodResult compute_likelihood(const VelocityField& field, std::span<const double> x1,
                                    const LogDensityFn& log_p0, const SolveConfig& cfg);

// Velocity field for the target scheduler driven by a model trained under the
// source scheduler:
//   u_bar_r(x) = (ds_r / s_r) x + s_r dt_r u_{t_r}(x / s_r).
// An identity transform forwards to the inner field untouched.
class ScheduleTransformedField : public VelocityField {
public:
    ScheduleTransformedField(const VelocityField& inner, ScaleTimeTransform transform)
        : inner_(&inner), transform_(std::move(transform)) {}

    int dim() const override { return inner_->dim(); }
    void eval(std::span<const double> x, double r, std::span<double> out) const override;
    void input_vjp(std::span<const double> x, double r, std::span<const double> cotangent,
                   std::span<double> x_bar) const override;

    const ScaleTimeTransform& transform() const { return transform_; }

private:
    const VelocityField* inner_;
    ScaleTimeTransform transform_;
};

// Velocity view of the closed-form Gaussian marginal dynamics.
class GaussianOracleField : public VelocityField {
public:
    explicit GaussianOracleField(GaussianOracle oracle) : oracle_(std::move(oracle)) {}

    int dim() const override { return oracle_.dim(); }
    void eval(std::span<const double> x, double t, std::span<double> out) const override {
        const std::vector<double> u = oracle_.velocity(t, x);
        std::copy(u.begin(), u.end(), out.begin());
    }
    void input_vjp(std::span<const double> x, double t, std::span<const double> cotangent,
                   std::span<double> x_bar) const override {
        const double c = oracle_.velocity_jacobian_scale(t);
        for (std::size_t i = 0; i < x_bar.size(); ++i) x_bar[i] = c * cotangent[i];
    }

    const GaussianOracle& oracle() const { return oracle_; }

private:
    GaussianOracle oracle_;
};

// Presents a model trained in another parameterization (x1/x0-prediction,
// score) as a velocity field via the affine conversion at each query time.
class ParameterizedVelocityField : public VelocityField {
public:
    ParameterizedVelocityField(const VelocityField& inner, Parameterization param,
                               Scheduler scheduler, bool gaussian_source)
        : inner_(&inner), param_(param), scheduler_(scheduler), gaussian_(gaussian_source) {}

    int dim() const override { return inner_->dim(); }
    void eval(std::span<const double> x, double t, std::span<double> out) const override;
    void input_vjp(std::span<const double> x, double t, std::span<const double> cotangent,
                   std::span<double> x_bar) const override;

private:
    const VelocityField* inner_;
    Parameterization param_;
    Scheduler scheduler_;
    bool gaussian_;
};

// Adapters so analytic objects and closures can drive the solvers.
class FunctionField : public VelocityField {
public:
    using EvalFn = std::function<void(std::span<const double>, double, std::span<double>)>;
    using VjpFn =
        std::function<void(std::span<const double>, double, std::span<const double>, std::span<double>)>;

    FunctionField(int dim, EvalFn eval_fn) : dim_(dim), eval_(std::move(eval_fn)) {}
    FunctionField(int dim, EvalFn eval_fn, VjpFn vjp_fn)
        : dim_(dim), eval_(std::move(eval_fn)), vjp_(std::move(vjp_fn)) {}

    int dim() const override { return dim_; }
    void eval(std::span<const double> x, double t, std::span<double> out) const override {
        eval_(x, t, out);
    }
    // Falls back to central differences when no analytic VJP is supplied.
    void input_vjp(std::span<const double> x, double t, std::span<const double> cotangent,
                   std::span<double> x_bar) const override;

private:
    int dim_;
    EvalFn eval_;
    VjpFn vjp_;
};

}  // namespace fmkit
