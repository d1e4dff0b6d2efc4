#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fmkit/model.hpp"
#include "fmkit/path.hpp"
#include "fmkit/rng.hpp"

namespace fmkit {

// Training objectives for continuous models: conditional flow matching with
// squared-error regression, x1-prediction matching, time-distribution
// sampling, and classifier-free guidance mixing.

class TimeDistribution {
public:
    enum class Kind { Uniform, LogitNormal, ExplicitWeights };

    static TimeDistribution uniform();
    static TimeDistribution logit_normal(double m, double s);
    // weights are density values at the midpoints of a uniform grid on [0,1];
    // their midpoint-rule integral must be 1 within 1e-3.
    static TimeDistribution explicit_weights(std::vector<double> weights);

    Kind kind() const { return kind_; }
    double sample(Rng& rng) const;
    std::string name() const;

private:
    Kind kind_ = Kind::Uniform;
    double m_ = 0.0;
    double s_ = 1.0;
    std::vector<double> weights_;
    std::vector<double> cdf_;
};

struct GuidanceConfig {
    double w = 1.0;        // guidance calibration scale
    double p_uncond = 0.0; // probability of replacing the label by the null condition

    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;
};

// Mean over the batch of |u_theta(x_t, t, cond~) - dx_t|^2 where cond~ is the
// sample's label replaced by the null condition with probability p_uncond.
// Dropout draws come from the dedicated dropout_rng stream, one per sample in
// batch order, so results are independent of threading. labels may be null
// for unconditional training.
LossResult cfm_loss(const MlpVelocityModel& model, std::span<const PathSample> batch,
                    const std::vector<int>* labels = nullptr,
                    const GuidanceConfig* guidance = nullptr, Rng* dropout_rng = nullptr,
                    int threads = 1);

// Same shape with regression target x1 instead of dx_t (model output read as
// an x1 prediction).
LossResult x1_prediction_loss(const MlpVelocityModel& model, std::span<const PathSample> batch,
                              const std::vector<int>* labels = nullptr,
                              const GuidanceConfig* guidance = nullptr,
                              Rng* dropout_rng = nullptr, int threads = 1);

// (1 - w) u(x | null) + w u(x | y).
std::vector<double> cfg_velocity(const MlpVelocityModel& model, std::span<const double> x,
                                 double t, int label, double w);

// Guided field for sampling: evaluates the classifier-free combination at
// every solver query.
class CfgVelocityField : public VelocityField {
public:
    CfgVelocityField(const MlpVelocityModel& model, int label, double w)
        : model_(&model), label_(label), w_(w) {}

    int dim() const override { return model_->dim(); }
    void eval(std::span<const double> x, double t, std::span<double> out) const override;
    void input_vjp(std::span<const double> x, double t, std::span<const double> cotangent,
                   std::span<double> x_bar) const override;

private:
    const MlpVelocityModel* model_;
    int label_;
    double w_;
};

}  // namespace fmkit
