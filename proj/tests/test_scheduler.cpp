#include <doctest.h>

#include <cmath>

#include "fmkit/rng.hpp"
#include "fmkit/scheduler.hpp"

using namespace fmkit;

namespace {

const Scheduler kAllKinds[] = {
    Scheduler::cond_ot(),    Scheduler::polynomial(2.0), Scheduler::linear_vp(),
    Scheduler::cosine(),     Scheduler::vp(),            Scheduler::ve(),
};

}  // namespace

TEST_CASE("cond_ot evaluation at the midpoint") {
    const SchedulerEval e = Scheduler::cond_ot().eval(0.5);
    CHECK(e.alpha == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(e.sigma == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(e.d_alpha == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(e.d_sigma == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("polynomial with n=1 reduces to cond_ot") {
    const SchedulerEval a = Scheduler::polynomial(1.0).eval(0.3);
    const SchedulerEval b = Scheduler::cond_ot().eval(0.3);
    CHECK(a.alpha == doctest::Approx(b.alpha).epsilon(1e-14));
    CHECK(a.sigma == doctest::Approx(b.sigma).epsilon(1e-14));
    CHECK(a.d_alpha == doctest::Approx(b.d_alpha).epsilon(1e-14));
    CHECK(a.d_sigma == doctest::Approx(b.d_sigma).epsilon(1e-14));
}

TEST_CASE("cosine evaluation matches the differentiated closed form") {
    // alpha = sin(pi t / 2): at t = 0.5 the value is sin(pi/4) and the
    // derivative (pi/2) cos(pi/4); cross-checked against finite differences.
    const SchedulerEval e = Scheduler::cosine().eval(0.5);
    CHECK(e.alpha == doctest::Approx(std::sin(M_PI / 4)).epsilon(1e-14));
    CHECK(e.sigma == doctest::Approx(std::cos(M_PI / 4)).epsilon(1e-14));
    CHECK(e.d_alpha == doctest::Approx(0.5 * M_PI * std::cos(M_PI / 4)).epsilon(1e-14));
    CHECK(e.d_sigma == doctest::Approx(-0.5 * M_PI * std::sin(M_PI / 4)).epsilon(1e-14));

    const double h = 1e-6;
    const double fd_alpha =
        (Scheduler::cosine().eval(0.5 + h).alpha - Scheduler::cosine().eval(0.5 - h).alpha) / (2 * h);
    CHECK(e.d_alpha == doctest::Approx(fd_alpha).epsilon(1e-8));
}

TEST_CASE("boundary conditions") {
    for (const Scheduler& s : kAllKinds) {
        if (s.approximate_boundary()) continue;
        CHECK(s.eval(0.0).alpha == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(s.eval(1.0).alpha == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.eval(0.0).sigma == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.eval(1.0).sigma == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(Scheduler::vp().approximate_boundary());
    CHECK(Scheduler::ve().approximate_boundary());
    // VP still lands exactly on the data boundary and approximately on noise.
    CHECK(Scheduler::vp().eval(1.0).alpha == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(Scheduler::vp().eval(0.0).alpha < 0.01);
    CHECK(Scheduler::vp().eval(0.0).sigma == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(Scheduler::ve().eval(0.0).sigma == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("analytic derivatives match central finite differences") {
    Rng rng(42);
    const double h = 1e-5;
    for (const Scheduler& s : kAllKinds) {
        for (int i = 0; i < 1000; ++i) {
            const double t = rng.uniform(0.05, 0.95);
            const SchedulerEval e = s.eval(t);
            const SchedulerEval ep = s.eval(t + h);
            const SchedulerEval em = s.eval(t - h);
            CHECK(std::abs(e.d_alpha - (ep.alpha - em.alpha) / (2 * h)) < 1e-5);
            CHECK(std::abs(e.d_sigma - (ep.sigma - em.sigma) / (2 * h)) < 1e-5);
        }
    }
}

TEST_CASE("monotonicity: alpha increasing, sigma decreasing") {
    Rng rng(7);
    for (const Scheduler& s : kAllKinds) {
        const bool alpha_flat = s.kind() == SchedulerKind::VE;  // alpha constant at 1
        for (int i = 0; i < 200; ++i) {
            const double t = rng.uniform(0.01, 0.99);
            const SchedulerEval e = s.eval(t);
            if (!alpha_flat) CHECK(e.d_alpha > 0.0);
            CHECK(e.d_sigma < 0.0);
        }
    }
}

TEST_CASE("snr values and inverse at the midpoint") {
    CHECK(Scheduler::cond_ot().snr(0.5) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(Scheduler::cond_ot().snr_inverse(1.0) == doctest::Approx(0.5).epsilon(1e-11));
}

TEST_CASE("cosine snr is tan(pi t / 2)") {
    const double rho = std::tan(0.3 * M_PI / 2.0);
    CHECK(Scheduler::cosine().snr(0.3) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(std::abs(Scheduler::cosine().snr_inverse(rho) - 0.3) < 1e-9);
}

TEST_CASE("snr_inverse is a right inverse of snr") {
    Rng rng(3);
    for (const Scheduler& s : kAllKinds) {
        double prev = s.snr(0.01);
        for (int i = 0; i < 100; ++i) {
            const double t = rng.uniform(0.01, 0.99);
            CHECK(std::abs(s.snr_inverse(s.snr(t)) - t) < 1e-10);
        }
        // strictly increasing on a grid
        for (int k = 1; k <= 50; ++k) {
            const double t = 0.01 + (0.98 * k) / 50.0;
            const double cur = s.snr(t);
            CHECK(cur > prev);
            prev = cur;
        }
    }
}

TEST_CASE("snr_inverse rejects values outside the range") {
    CHECK_THROWS_AS(Scheduler::cond_ot().snr_inverse(-1.0), DomainError);
}

TEST_CASE("unknown scheduler kind is a configuration error") {
    CHECK_THROWS_AS(Scheduler::from_name("warp_drive"), ConfigError);
    CHECK_THROWS_AS(MixtureScheduler::from_name("warp_drive"), ConfigError);
}

TEST_CASE("scale-time transform with identical schedulers is the identity") {
    const ScaleTimeTransform id(Scheduler::cond_ot(), Scheduler::cond_ot());
    const ScaleTimeEval e = id.eval(0.7);
    CHECK(e.t == 0.7);
    CHECK(e.s == 1.0);
    CHECK(e.dt == 1.0);
    CHECK(e.ds == 0.0);

    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        const double r = rng.uniform(0.01, 0.99);
        const ScaleTimeEval ev = id.eval(r);
        CHECK(std::abs(ev.t - r) < 1e-12);
        CHECK(std::abs(ev.s - 1.0) < 1e-12);
    }
}

TEST_CASE("scale-time between equivalent schedulers of different kinds") {
    // polynomial(1) is cond_ot under a different name, so no short-circuit:
    // the bisection route must still recover the identity.
    const ScaleTimeTransform tr(Scheduler::polynomial(1.0), Scheduler::cond_ot());
    Rng rng(13);
    for (int i = 0; i < 50; ++i) {
        const double r = rng.uniform(0.05, 0.95);
        const ScaleTimeEval e = tr.eval(r);
        CHECK(std::abs(e.t - r) < 1e-9);
        CHECK(std::abs(e.s - 1.0) < 1e-9);
        CHECK(std::abs(e.dt - 1.0) < 1e-6);
        CHECK(std::abs(e.ds) < 1e-6);
    }
}

TEST_CASE("scale-time linear_vp to cond_ot at r = 0.5") {
    // Matching SNRs: t/sqrt(1-t^2) = 1 gives t = 1/sqrt(2), and
    // s = sigma_target(0.5) / sigma_source(t) = 0.5 / sqrt(1/2) = 1/sqrt(2).
    const ScaleTimeTransform tr(Scheduler::linear_vp(), Scheduler::cond_ot());
    const ScaleTimeEval e = tr.eval(0.5);
    CHECK(e.t == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(e.s == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));

    // Derivatives agree with finite differences through the transform.
    const double h = 1e-6;
    const ScaleTimeEval ep = tr.eval(0.5 + h);
    const ScaleTimeEval em = tr.eval(0.5 - h);
    CHECK(e.dt == doctest::Approx((ep.t - em.t) / (2 * h)).epsilon(1e-5));
    CHECK(e.ds == doctest::Approx((ep.s - em.s) / (2 * h)).epsilon(1e-5));
}

TEST_CASE("scale-time approaches the shared endpoint as r -> 1") {
    const ScaleTimeTransform tr(Scheduler::linear_vp(), Scheduler::cond_ot());
    const ScaleTimeEval e = tr.eval(1.0 - 1e-6);
    CHECK(e.t > 1.0 - 1e-6);
    CHECK(e.s == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("mixture schedulers") {
    const MixtureScheduler lin = MixtureScheduler::linear();
    CHECK(lin.kappa(0.0) == 0.0);
    CHECK(lin.kappa(1.0) == 1.0);
    CHECK(lin.d_kappa(0.37) == 1.0);

    const MixtureScheduler quad = MixtureScheduler::polynomial_convex(2.0);
    CHECK(quad.kappa(0.0) == 0.0);
    CHECK(quad.kappa(1.0) == 1.0);
    CHECK(quad.kappa(0.5) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(quad.d_kappa(0.5) == doctest::Approx(1.0).epsilon(1e-15));
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform();
        CHECK(quad.kappa(t) >= 0.0);
        CHECK(quad.kappa(t) <= 1.0);
    }
}
