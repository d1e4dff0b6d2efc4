#include <doctest.h>

#include <cmath>

#include "fmkit/path.hpp"
#include "fmkit/rng.hpp"

using namespace fmkit;

namespace {

std::vector<double> V(std::initializer_list<double> v) { return std::vector<double>(v); }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

const Parameterization kParams[] = {Parameterization::Velocity, Parameterization::X1Prediction,
                                    Parameterization::X0Prediction, Parameterization::Score};

}  // namespace

TEST_CASE("path sample at the linear midpoint") {
    const std::vector<double> x0{0.0, 0.0}, x1{2.0, 4.0};
    const PathSample s = sample_path(Scheduler::cond_ot(), 0.5, x0, x1);
    CHECK(s.x_t[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.x_t[1] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(s.dx_t[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(s.dx_t[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("path sample boundary at t = 0 returns the source point") {
    const std::vector<double> x0{0.3, -1.2}, x1{2.0, 4.0};
    for (const Scheduler& s : {Scheduler::cond_ot(), Scheduler::cosine(), Scheduler::linear_vp()}) {
        const PathSample ps = sample_path(s, 0.0, x0, x1);
        CHECK(ps.x_t[0] == doctest::Approx(x0[0]).epsilon(1e-14));
        CHECK(ps.x_t[1] == doctest::Approx(x0[1]).epsilon(1e-14));
    }
}

TEST_CASE("linear_vp path values from the differentiated schedule") {
    // sigma = sqrt(1 - t^2): at t = 0.6 the point is 0.8 and the derivative
    // -t/sigma = -0.75; cross-checked by a finite difference of x_t in t.
    const std::vector<double> x0{1.0}, x1{0.0};
    const PathSample s = sample_path(Scheduler::linear_vp(), 0.6, x0, x1);
    CHECK(s.x_t[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s.dx_t[0] == doctest::Approx(-0.75).epsilon(1e-12));
    const double h = 1e-6;
    const double fd = (sample_path(Scheduler::linear_vp(), 0.6 + h, x0, x1).x_t[0] -
                       sample_path(Scheduler::linear_vp(), 0.6 - h, x0, x1).x_t[0]) /
                      (2 * h);
    CHECK(s.dx_t[0] == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("path sample rejects mismatched shapes") {
    CHECK_THROWS_AS(sample_path(Scheduler::cond_ot(), 0.5, std::vector<double>{1.0},
                                std::vector<double>{1.0, 2.0}),
                    ArgumentError);
}

TEST_CASE("conditional velocity closed forms") {
    // (x1 - x) / (1 - t) for the linear path.
    const std::vector<double> u =
        conditional_velocity(Scheduler::cond_ot(), 0.5, V({0.0}), V({1.0}));
    CHECK(u[0] == doctest::Approx(2.0).epsilon(1e-14));

    // At t = 0 the affine map is the identity: d_alpha(0) x1 + d_sigma(0) x.
    Rng rng(1);
    for (const Scheduler& s : {Scheduler::cond_ot(), Scheduler::cosine()}) {
        const double x = rng.uniform(-2, 2), x1 = rng.uniform(-2, 2);
        const SchedulerEval e = s.eval(0.0);
        const std::vector<double> u0 = conditional_velocity(s, 0.0, V({x}), V({x1}));
        CHECK(u0[0] == doctest::Approx(e.d_alpha * x1 + e.d_sigma * x).epsilon(1e-12));
    }

    const std::vector<double> uv =
        conditional_velocity(Scheduler::linear_vp(), 0.6, V({0.8}), V({0.0}));
    CHECK(uv[0] == doctest::Approx(-0.75).epsilon(1e-12));
}

TEST_CASE("conditional velocity equals the path derivative along the path") {
    Rng rng(2);
    for (const Scheduler& s : {Scheduler::cond_ot(), Scheduler::polynomial(2.0),
                               Scheduler::linear_vp(), Scheduler::cosine()}) {
        for (int i = 0; i < 1000; ++i) {
            const double t = rng.uniform(0.01, 0.99);
            const std::vector<double> x0{rng.normal(), rng.normal()};
            const std::vector<double> x1{rng.normal(), rng.normal()};
            const PathSample ps = sample_path(s, t, x0, x1);
            const std::vector<double> u = conditional_velocity(s, t, ps.x_t, x1);
            CHECK(max_abs_diff(u, ps.dx_t) < 1e-9);
        }
    }
}

TEST_CASE("conditional velocity is singular where sigma vanishes") {
    CHECK_THROWS_AS(conditional_velocity(Scheduler::cond_ot(), 1.0, V({0.0}), V({1.0})),
                    SingularityError);
}

TEST_CASE("conditional score closed form") {
    // Zero at the conditional mean.
    const std::vector<double> g0 =
        conditional_score(Scheduler::cond_ot(), 0.5, V({0.5}), V({1.0}));
    CHECK(g0[0] == doctest::Approx(0.0).epsilon(1e-15));
    const std::vector<double> g1 =
        conditional_score(Scheduler::cond_ot(), 0.5, V({1.0}), V({1.0}));
    CHECK(g1[0] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("conditional score matches the log-density gradient numerically") {
    // d/dx log N(x; alpha x1, sigma^2) by central differences.
    Rng rng(3);
    const Scheduler s = Scheduler::cosine();
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform(0.05, 0.95);
        const double x1 = rng.normal();
        const double x = rng.normal();
        const SchedulerEval e = s.eval(t);
        auto logp = [&](double xx) {
            const double r = xx - e.alpha * x1;
            return -0.5 * std::log(2 * M_PI * e.sigma * e.sigma) - 0.5 * r * r / (e.sigma * e.sigma);
        };
        const double h = 1e-5;
        const double fd = (logp(x + h) - logp(x - h)) / (2 * h);
        const std::vector<double> g = conditional_score(s, t, V({x}), V({x1}));
        CHECK(std::abs(g[0] - fd) < 1e-5);
    }
}

TEST_CASE("conversion table: identity and round trips") {
    const Scheduler s = Scheduler::cond_ot();
    const ConversionCoefficients id =
        conversion_coefficients(Parameterization::Velocity, Parameterization::Velocity, s, 0.4);
    CHECK(id.a == 0.0);
    CHECK(id.b == 1.0);

    Rng rng(4);
    for (const Scheduler& sched : {Scheduler::cond_ot(), Scheduler::cosine(), Scheduler::vp()}) {
        for (int i = 0; i < 100; ++i) {
            const double t = rng.uniform(0.05, 0.95);
            const std::vector<double> x{rng.normal(), rng.normal()};
            const std::vector<double> v{rng.normal(), rng.normal()};
            for (Parameterization from : kParams) {
                for (Parameterization to : kParams) {
                    const std::vector<double> fwd = convert(from, to, sched, t, x, v);
                    const std::vector<double> back = convert(to, from, sched, t, x, fwd);
                    CHECK(max_abs_diff(back, v) < 1e-9);
                }
            }
        }
    }
}

TEST_CASE("x1-prediction converts to the conditional velocity") {
    // Feeding the true x1 through the x1->velocity conversion must reproduce
    // (x1 - x) / (1 - t) exactly under the linear schedule.
    const Scheduler s = Scheduler::cond_ot();
    const std::vector<double> u = convert(Parameterization::X1Prediction,
                                          Parameterization::Velocity, s, 0.5,
                                          V({0.0}), V({1.0}));
    CHECK(u[0] == doctest::Approx(2.0).epsilon(1e-13));

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double t = rng.uniform(0.05, 0.95);
        const double x = rng.normal(), x1 = rng.normal();
        const std::vector<double> got = convert(Parameterization::X1Prediction,
                                                Parameterization::Velocity, s, t, V({x}), V({x1}));
        CHECK(std::abs(got[0] - (x1 - x) / (1.0 - t)) < 1e-12);
    }
}

TEST_CASE("score to velocity drops to the drift term at zero score") {
    const Scheduler s = Scheduler::cosine();
    const double t = 0.6;
    const SchedulerEval e = s.eval(t);
    const std::vector<double> u = convert(Parameterization::Score, Parameterization::Velocity,
                                          s, t, V({1.3}), V({0.0}));
    CHECK(u[0] == doctest::Approx(e.d_alpha / e.alpha * 1.3).epsilon(1e-12));
}

TEST_CASE("score conversions require a Gaussian-source path") {
    CHECK_THROWS_AS(conversion_coefficients(Parameterization::Score, Parameterization::Velocity,
                                            Scheduler::cond_ot(), 0.5, /*gaussian_source=*/false),
                    IncompatibilityError);
}

TEST_CASE("singular conversions raise instead of returning inf") {
    // x1 -> velocity divides by sigma, which vanishes at t = 1.
    CHECK_THROWS_AS(conversion_coefficients(Parameterization::X1Prediction,
                                            Parameterization::Velocity, Scheduler::cond_ot(), 1.0),
                    SingularityError);
    // x0 -> velocity divides by alpha, which vanishes at t = 0.
    CHECK_THROWS_AS(conversion_coefficients(Parameterization::X0Prediction,
                                            Parameterization::Velocity, Scheduler::cond_ot(), 0.0),
                    SingularityError);
}

TEST_CASE("gaussian oracle: symmetry and endpoint limits") {
    // mu = 0, s2 = 1 makes source and target identical; the marginal velocity
    // vanishes at the origin by symmetry.
    const std::vector<double> zero{0.0, 0.0};
    for (double t : {0.1, 0.5, 0.9}) {
        const std::vector<double> u =
            marginal_velocity_gaussian_oracle(t, zero, std::vector<double>{0.0, 0.0}, 1.0);
        CHECK(std::abs(u[0]) < 1e-14);
        CHECK(std::abs(u[1]) < 1e-14);
    }

    // As t -> 1 at x = mu the posterior pins X1 = mu and the independent
    // coupling leaves E[X0] = 0, so the velocity tends to mu.
    const std::vector<double> mu{2.0, -1.0};
    const std::vector<double> u1 = marginal_velocity_gaussian_oracle(1.0 - 1e-9, mu, mu, 1.0);
    CHECK(u1[0] == doctest::Approx(mu[0]).epsilon(1e-6));
    CHECK(u1[1] == doctest::Approx(mu[1]).epsilon(1e-6));
}

TEST_CASE("gaussian oracle against a Monte-Carlo conditional expectation") {
    // d = 1, mu = 2, s2 = 1, t = 0.5, x = 1: estimate E[X1 - X0 | X_t in
    // 1 +- 0.01] by rejection over many draws and compare within 3 standard
    // errors.
    Rng rng(99);
    const double t = 0.5, window = 0.01, x_query = 1.0, mu = 2.0;
    double sum = 0.0, sum2 = 0.0;
    long hits = 0;
    for (long i = 0; i < 10'000'000; ++i) {
        const double x0 = rng.normal();
        const double x1 = mu + rng.normal();
        const double xt = t * x1 + (1.0 - t) * x0;
        if (std::abs(xt - x_query) < window) {
            const double v = x1 - x0;
            sum += v;
            sum2 += v * v;
            ++hits;
        }
    }
    REQUIRE(hits > 1000);
    const double mean = sum / hits;
    const double var = sum2 / hits - mean * mean;
    const double se = std::sqrt(var / hits);
    const std::vector<double> u =
        marginal_velocity_gaussian_oracle(t, V({x_query}), V({mu}), 1.0);
    CHECK(std::abs(u[0] - mean) < 3.0 * se + 1e-3);
}

TEST_CASE("kinetic energy of the oracle velocity is bounded by the coupling cost") {
    // Monte-Carlo estimate of int E|u_t(X_t)|^2 dt against E|X1 - X0|^2.
    Rng rng(123);
    const std::vector<double> mu{2.0, 0.0};
    const GaussianOracle oracle(Scheduler::cond_ot(), mu, 1.0);
    const long n = 200'000;
    double ke_sum = 0.0, ke_sum2 = 0.0, cost_sum = 0.0, cost_sum2 = 0.0;
    for (long i = 0; i < n; ++i) {
        const double t = rng.uniform();
        std::vector<double> x0{rng.normal(), rng.normal()};
        std::vector<double> x1{mu[0] + rng.normal(), mu[1] + rng.normal()};
        std::vector<double> xt(2);
        for (int k = 0; k < 2; ++k) xt[k] = t * x1[k] + (1 - t) * x0[k];
        const std::vector<double> u = oracle.velocity(t, xt);
        const double ke = u[0] * u[0] + u[1] * u[1];
        double cost = 0.0;
        for (int k = 0; k < 2; ++k) {
            const double d = x1[k] - x0[k];
            cost += d * d;
        }
        ke_sum += ke;
        ke_sum2 += ke * ke;
        cost_sum += cost;
        cost_sum2 += cost * cost;
    }
    const double ke_mean = ke_sum / n;
    const double cost_mean = cost_sum / n;
    const double ke_se = std::sqrt((ke_sum2 / n - ke_mean * ke_mean) / n);
    const double cost_se = std::sqrt((cost_sum2 / n - cost_mean * cost_mean) / n);
    CHECK(ke_mean <= cost_mean + 3.0 * std::sqrt(ke_se * ke_se + cost_se * cost_se));
}

TEST_CASE("gaussian oracle score matches the marginal log-density gradient") {
    Rng rng(8);
    const GaussianOracle oracle(Scheduler::linear_vp(), {1.0, -0.5}, 2.0);
    for (int i = 0; i < 50; ++i) {
        const double t = rng.uniform(0.05, 0.95);
        const std::vector<double> x{rng.normal(), rng.normal()};
        const std::vector<double> g = oracle.score(t, x);
        const double h = 1e-5;
        for (int k = 0; k < 2; ++k) {
            std::vector<double> xp = x, xm = x;
            xp[static_cast<std::size_t>(k)] += h;
            xm[static_cast<std::size_t>(k)] -= h;
            const double fd = (oracle.marginal_logpdf(t, xp) - oracle.marginal_logpdf(t, xm)) / (2 * h);
            CHECK(std::abs(g[static_cast<std::size_t>(k)] - fd) < 1e-6);
        }
    }
}

TEST_CASE("endpoint velocity overrides") {
    const Scheduler s = Scheduler::cond_ot();
    const std::vector<double> x{0.7, -0.2};
    const std::vector<double> u0 = endpoint_velocity_at_source(s, x);
    const std::vector<double> u1 = endpoint_velocity_at_target(s, x);
    CHECK(u0[0] == doctest::Approx(-x[0]));  // d_sigma(0) = -1
    CHECK(u1[0] == doctest::Approx(x[0]));   // d_alpha(1) = 1
}
