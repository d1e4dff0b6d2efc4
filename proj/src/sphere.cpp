#include "fmkit/sphere.hpp"

#include <algorithm>
#include <cmath>

#include "fmkit/errors.hpp"
#include "fmkit/parallel.hpp"

namespace fmkit {

namespace {

constexpr double kAntipodalTol = 1e-9;

}  // namespace

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

SpherePoint::SpherePoint(const Vec3& raw) {
    const double n = norm(raw);
    if (!(n > 0.0)) throw DomainError("cannot normalize the zero vector onto the sphere");
    v = {raw[0] / n, raw[1] / n, raw[2] / n};
}

TangentVector project(const SpherePoint& x, const Vec3& u) {
    const double c = dot(u, x.v);
    TangentVector t;
    t.base = x;
    t.components = {u[0] - c * x.v[0], u[1] - c * x.v[1], u[2] - c * x.v[2]};
    return t;
}

SpherePoint exp_map(const SpherePoint& x, const TangentVector& v) {
    const double theta = norm(v.components);
    if (theta < 1e-14) return x;
    const double c = std::cos(theta), s = std::sin(theta) / theta;
    SpherePoint out;
    out.v = {c * x.v[0] + s * v.components[0], c * x.v[1] + s * v.components[1],
             c * x.v[2] + s * v.components[2]};
    // Renormalize to keep iterated stepping exactly on the sphere.
    return SpherePoint(out.v);
}

TangentVector log_map(const SpherePoint& x, const SpherePoint& y) {
    const double c = std::clamp(dot(x.v, y.v), -1.0, 1.0);
    if (c < -1.0 + kAntipodalTol)
        throw DomainError("log_map undefined for antipodal points");
    TangentVector t = project(x, y.v);  // y - <y,x> x
    const double n = norm(t.components);
    const double theta = std::acos(c);
    if (n < 1e-14) {
        t.components = {0.0, 0.0, 0.0};
        return t;
    }
    const double scale = theta / n;
    t.components = {scale * t.components[0], scale * t.components[1], scale * t.components[2]};
    return t;
}

double geodesic_distance(const SpherePoint& x, const SpherePoint& y) {
    return std::acos(std::clamp(dot(x.v, y.v), -1.0, 1.0));
}

GeodesicSample geodesic_path_sample(const MixtureScheduler& kappa, double t,
                                    const SpherePoint& x0, const SpherePoint& x1) {
    const TangentVector v = log_map(x0, x1);  // throws on antipodal pairs
    const double theta = norm(v.components);
    const double k = kappa.kappa(t);
    const double dk = kappa.d_kappa(t);

    GeodesicSample s;
    s.t = t;
    s.x0 = x0;
    s.x1 = x1;
    if (theta < 1e-14) {
        s.x_t = x0;
        s.dx_t.base = x0;
        s.dx_t.components = {0.0, 0.0, 0.0};
        return s;
    }
    const Vec3 dir{v.components[0] / theta, v.components[1] / theta, v.components[2] / theta};
    const double a = k * theta;
    const double c = std::cos(a), si = std::sin(a);
    s.x_t = SpherePoint(Vec3{c * x0.v[0] + si * dir[0], c * x0.v[1] + si * dir[1],
                             c * x0.v[2] + si * dir[2]});
    const double scale = dk * theta;
    s.dx_t.base = s.x_t;
    s.dx_t.components = {scale * (-si * x0.v[0] + c * dir[0]),
                         scale * (-si * x0.v[1] + c * dir[1]),
                         scale * (-si * x0.v[2] + c * dir[2])};
    return s;
}

SphereModel::SphereModel(std::vector<int> hidden) : hidden_(std::move(hidden)) {
    std::vector<int> widths;
    widths.push_back(4);
    for (int h : hidden_) widths.push_back(h);
    widths.push_back(3);
    mlp_ = Mlp(std::move(widths));
    params_.assign(mlp_.parameter_count(), 0.0);
}

void SphereModel::init_parameters(std::uint64_t seed) {
    Rng rng(seed);
    mlp_.init_parameters(params_, rng);
}

void SphereModel::set_parameters(std::span<const double> p) {
    if (p.size() != params_.size()) throw ArgumentError("set_parameters: size mismatch");
    params_.assign(p.begin(), p.end());
}

Vec3 SphereModel::forward(const SpherePoint& x, double t) const {
    const double input[4] = {x.v[0], x.v[1], x.v[2], t};
    Mlp::Workspace ws;
    Vec3 out;
    mlp_.forward(params_, std::span<const double>(input, 4), out, ws);
    return out;
}

void SphereModel::backward_params(const SpherePoint& x, double t, const Vec3& cotangent,
                                  std::span<double> grad) const {
    const double input[4] = {x.v[0], x.v[1], x.v[2], t};
    Mlp::Workspace ws;
    Vec3 out;
    mlp_.forward(params_, std::span<const double>(input, 4), out, ws);
    mlp_.backward(params_, cotangent, ws, grad, {});
}

SphereLossResult rcfm_loss(const SphereModel& model, std::span<const GeodesicSample> batch,
                           int threads) {
    if (batch.empty()) throw ArgumentError("rcfm_loss: empty batch");
    const std::size_t n_params = model.parameter_count();
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    constexpr std::size_t kBlock = 32;
    const std::size_t n_blocks = (batch.size() + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> block_grad(n_blocks);
    std::vector<double> block_loss(n_blocks, 0.0);

    parallel_for(n_blocks, threads, [&](std::size_t blk) {
        auto& grad = block_grad[blk];
        grad.assign(n_params, 0.0);
        const std::size_t begin = blk * kBlock;
        const std::size_t end = std::min(batch.size(), begin + kBlock);
        for (std::size_t i = begin; i < end; ++i) {
            const GeodesicSample& s = batch[i];
            const Vec3 raw = model.forward(s.x_t, s.t);
            const TangentVector proj = project(s.x_t, raw);
            Vec3 r{proj.components[0] - s.dx_t.components[0],
                   proj.components[1] - s.dx_t.components[1],
                   proj.components[2] - s.dx_t.components[2]};
            block_loss[blk] += dot(r, r);
            // d/d raw of |P raw - dx|^2 = 2 P (P raw - dx) = 2 P r.
            const TangentVector pr = project(s.x_t, r);
            const Vec3 cot{2.0 * inv_b * pr.components[0], 2.0 * inv_b * pr.components[1],
                           2.0 * inv_b * pr.components[2]};
            model.backward_params(s.x_t, s.t, cot, grad);
        }
    });

    SphereLossResult res;
    res.grad.assign(n_params, 0.0);
    for (std::size_t blk = 0; blk < n_blocks; ++blk) {
        res.loss += block_loss[blk];
        for (std::size_t p = 0; p < n_params; ++p) res.grad[p] += block_grad[blk][p];
    }
    res.loss *= inv_b;
    return res;
}

std::vector<SpherePoint> sphere_sample(const SphereModel& model, const SpherePoint& x_init,
                                       double h) {
    if (!(h > 0.0 && h <= 1.0)) throw ConfigError("sphere_sample: h must lie in (0, 1]");
    std::vector<SpherePoint> traj;
    SpherePoint x = x_init;
    traj.push_back(x);
    const int n = static_cast<int>(std::ceil(1.0 / h - 1e-12));
    double t = 0.0;
    for (int k = 0; k < n; ++k) {
        const double t_next = (k + 1 == n) ? 1.0 : (k + 1) * h;
        const double step = t_next - t;
        const Vec3 raw = model.forward(x, t);
        for (double c : raw)
            if (!std::isfinite(c))
                throw SimulationError("non-finite sphere model output at t = " + std::to_string(t));
        TangentVector v = project(x, raw);
        v.components = {step * v.components[0], step * v.components[1], step * v.components[2]};
        x = exp_map(x, v);
        t = t_next;
        traj.push_back(x);
    }
    return traj;
}

SpherePoint random_sphere_point(Rng& rng) {
    for (;;) {
        const Vec3 g{rng.normal(), rng.normal(), rng.normal()};
        const double n = norm(g);
        if (n > 1e-12) return SpherePoint(g);
    }
}

}  // namespace fmkit
