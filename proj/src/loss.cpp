#include "fmkit/loss.hpp"

#include <cmath>

#include "fmkit/errors.hpp"
#include "fmkit/parallel.hpp"

namespace fmkit {

TimeDistribution TimeDistribution::uniform() { return TimeDistribution{}; }

TimeDistribution TimeDistribution::logit_normal(double m, double s) {
    if (!(s > 0.0)) throw ConfigError("logit_normal needs s > 0");
    TimeDistribution d;
    d.kind_ = Kind::LogitNormal;
    d.m_ = m;
    d.s_ = s;
    return d;
}

TimeDistribution TimeDistribution::explicit_weights(std::vector<double> weights) {
    if (weights.empty()) throw ConfigError("explicit time weights must be nonempty");
    double integral = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("time density values must be nonnegative");
        integral += w;
    }
    integral /= static_cast<double>(weights.size());
    if (std::abs(integral - 1.0) > 1e-3)
        throw ConfigError("explicit time density does not integrate to 1 (midpoint rule)");
    TimeDistribution d;
    d.kind_ = Kind::ExplicitWeights;
    d.cdf_.resize(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        d.cdf_[i] = acc;
    }
    for (double& c : d.cdf_) c /= acc;
    d.weights_ = std::move(weights);
    return d;
}

double TimeDistribution::sample(Rng& rng) const {
    switch (kind_) {
        case Kind::Uniform:
            return rng.uniform();
        case Kind::LogitNormal: {
            const double z = m_ + s_ * rng.normal();
            return 1.0 / (1.0 + std::exp(-z));
        }
        case Kind::ExplicitWeights: {
            const double u = rng.uniform();
            std::size_t lo = 0, hi = cdf_.size() - 1;
            while (lo < hi) {
                const std::size_t mid = (lo + hi) / 2;
                if (cdf_[mid] < u)
                    lo = mid + 1;
                else
                    hi = mid;
            }
            const double n = static_cast<double>(weights_.size());
            return (static_cast<double>(lo) + rng.uniform()) / n;
        }
    }
    throw ConfigError("invalid time distribution");
}

std::string TimeDistribution::name() const {
    switch (kind_) {
        case Kind::Uniform: return "uniform";
        case Kind::LogitNormal: return "logit_normal";
        case Kind::ExplicitWeights: return "explicit_weights";
    }
    return "unknown";
}

void GuidanceConfig::validate() const {
    if (!(p_uncond >= 0.0 && p_uncond <= 1.0))
        throw ConfigError("p_uncond must lie in [0, 1]");
}

namespace {

// Shared core for squared-error matching losses; `target` selects dx_t or x1
// per sample. Gradients accumulate block-by-block in index order so results
// do not depend on the thread count.
LossResult matching_loss(const MlpVelocityModel& model, std::span<const PathSample> batch,
                         const std::vector<int>* labels, const GuidanceConfig* guidance,
                         Rng* dropout_rng, int threads, bool target_is_x1) {
    if (batch.empty()) throw ArgumentError("matching loss: empty batch");
    if (labels && labels->size() != batch.size())
        throw ArgumentError("matching loss: labels/batch size mismatch");
    if (guidance) guidance->validate();

    // Per-sample conditions after CFG dropout, drawn in batch order from the
    // dedicated stream.
    std::vector<std::optional<int>> conds(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::optional<int> c = labels ? std::optional<int>((*labels)[i]) : std::nullopt;
        if (c && guidance && guidance->p_uncond > 0.0) {
            if (!dropout_rng) throw ArgumentError("condition dropout needs a dropout stream");
            if (dropout_rng->bernoulli(guidance->p_uncond)) c = std::nullopt;
        }
        conds[i] = c;
    }

    const std::size_t n_params = model.parameter_count();
    const std::size_t d = static_cast<std::size_t>(model.dim());
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const PathSample& s : batch)
        if (s.x_t.size() != d || s.dx_t.size() != d || s.x1.size() != d)
            throw ArgumentError("matching loss: sample dimension mismatch");

    constexpr std::size_t kBlock = 32;
    const std::size_t n_blocks = (batch.size() + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> block_grad(n_blocks);
    std::vector<double> block_loss(n_blocks, 0.0);

    parallel_for(n_blocks, threads, [&](std::size_t blk) {
        auto& grad = block_grad[blk];
        grad.assign(n_params, 0.0);
        std::vector<double> out(d), cot(d);
        const std::size_t begin = blk * kBlock;
        const std::size_t end = std::min(batch.size(), begin + kBlock);
        for (std::size_t i = begin; i < end; ++i) {
            const PathSample& s = batch[i];
            model.forward(s.x_t, s.t, conds[i], out);
            const std::vector<double>& target = target_is_x1 ? s.x1 : s.dx_t;
            double l = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double r = out[j] - target[j];
                l += r * r;
                cot[j] = 2.0 * r * inv_b;
            }
            block_loss[blk] += l;
            model.backward_params(s.x_t, s.t, conds[i], cot, grad);
        }
    });

    LossResult res;
    res.grad.assign(n_params, 0.0);
    for (std::size_t blk = 0; blk < n_blocks; ++blk) {
        res.loss += block_loss[blk];
        for (std::size_t p = 0; p < n_params; ++p) res.grad[p] += block_grad[blk][p];
    }
    res.loss *= inv_b;
    return res;
}

}  // namespace

LossResult cfm_loss(const MlpVelocityModel& model, std::span<const PathSample> batch,
                    const std::vector<int>* labels, const GuidanceConfig* guidance,
                    Rng* dropout_rng, int threads) {
    return matching_loss(model, batch, labels, guidance, dropout_rng, threads, false);
}

LossResult x1_prediction_loss(const MlpVelocityModel& model, std::span<const PathSample> batch,
                              const std::vector<int>* labels, const GuidanceConfig* guidance,
                              Rng* dropout_rng, int threads) {
    return matching_loss(model, batch, labels, guidance, dropout_rng, threads, true);
}

std::vector<double> cfg_velocity(const MlpVelocityModel& model, std::span<const double> x,
                                 double t, int label, double w) {
    const std::vector<double> u_cond = model.forward(x, t, label);
    if (w == 1.0) return u_cond;
    const std::vector<double> u_null = model.forward(x, t, std::nullopt);
    std::vector<double> out(u_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - w) * u_null[i] + w * u_cond[i];
    return out;
}

void CfgVelocityField::eval(std::span<const double> x, double t, std::span<double> out) const {
    const std::vector<double> u = cfg_velocity(*model_, x, t, label_, w_);
    std::copy(u.begin(), u.end(), out.begin());
}

void CfgVelocityField::input_vjp(std::span<const double> x, double t,
                                 std::span<const double> cotangent,
                                 std::span<double> x_bar) const {
    std::vector<double> bar_cond(x.size());
    model_->input_vjp_cond(x, t, label_, cotangent, bar_cond);
    if (w_ == 1.0) {
        std::copy(bar_cond.begin(), bar_cond.end(), x_bar.begin());
        return;
    }
    std::vector<double> bar_null(x.size());
    model_->input_vjp_cond(x, t, std::nullopt, cotangent, bar_null);
    for (std::size_t i = 0; i < x.size(); ++i)
        x_bar[i] = (1.0 - w_) * bar_null[i] + w_ * bar_cond[i];
}

}  // namespace fmkit
