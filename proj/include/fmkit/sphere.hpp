#pragma once

#include <array>
#include <span>
#include <vector>

#include "fmkit/model.hpp"
#include "fmkit/rng.hpp"
#include "fmkit/scheduler.hpp"

namespace fmkit {

// Geodesic flow matching on the unit 2-sphere embedded in R^3: closed-form
// exp/log maps, geodesic conditional flows driven by a mixture scheduler,
// tangent projection, the RCFM loss, and an exponential-map sampler.

using Vec3 = std::array<double, 3>;

// Unit vector; renormalized on construction.
struct SpherePoint {
    Vec3 v{0.0, 0.0, 1.0};

    SpherePoint() = default;
    explicit SpherePoint(const Vec3& raw);
    SpherePoint(double x, double y, double z) : SpherePoint(Vec3{x, y, z}) {}
};

// Tangent vector at a base point: <components, base> = 0.
struct TangentVector {
    SpherePoint base;
    Vec3 components{0.0, 0.0, 0.0};
};

double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);

// u - <u, x> x.
TangentVector project(const SpherePoint& x, const Vec3& u);

// cos|v| x + sin|v| v/|v| (v -> 0 limit returns x).
SpherePoint exp_map(const SpherePoint& x, const TangentVector& v);

// Inverse of exp_map; throws DomainError for (near-)antipodal y.
TangentVector log_map(const SpherePoint& x, const SpherePoint& y);

// arccos <x, y>.
double geodesic_distance(const SpherePoint& x, const SpherePoint& y);

struct GeodesicSample {
    double t = 0.0;
    SpherePoint x0;
    SpherePoint x1;
    SpherePoint x_t;    // exp_{x0}(kappa(t) log_{x0}(x1))
    TangentVector dx_t; // time derivative, tangent at x_t
};

GeodesicSample geodesic_path_sample(const MixtureScheduler& kappa, double t,
                                    const SpherePoint& x0, const SpherePoint& x1);

// Model contract: raw ambient 3-vectors; the loss projects onto the tangent
// space before comparing. A thin wrapper over the MLP core with input
// (x, y, z, t).
class SphereModel {
public:
    SphereModel() = default;
    explicit SphereModel(std::vector<int> hidden);

    void init_parameters(std::uint64_t seed);

    const std::vector<int>& hidden() const { return hidden_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    void set_parameters(std::span<const double> p);

    Vec3 forward(const SpherePoint& x, double t) const;
    // Gradient of <cotangent, forward> w.r.t. parameters.
    void backward_params(const SpherePoint& x, double t, const Vec3& cotangent,
                         std::span<double> grad) const;

private:
    std::vector<int> hidden_;
    Mlp mlp_;
    std::vector<double> params_;
};

struct SphereLossResult {
    double loss = 0.0;
    std::vector<double> grad;
};

// Mean over the batch of |project(x_t, model(x_t, t)) - dx_t|^2 in the
// ambient Euclidean norm (equal to the round metric on embedded tangents).
SphereLossResult rcfm_loss(const SphereModel& model, std::span<const GeodesicSample> batch,
                           int threads = 1);

// Exponential-map stepping x <- exp_x(h * project(x, model(x, t))) from t=0
// to t=1; every iterate stays on the sphere by construction.
std::vector<SpherePoint> sphere_sample(const SphereModel& model, const SpherePoint& x_init,
                                       double h);

SpherePoint random_sphere_point(Rng& rng);

}  // namespace fmkit
