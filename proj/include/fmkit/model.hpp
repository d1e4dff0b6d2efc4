#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fmkit/rng.hpp"

namespace fmkit {

// The learnable objects: a plain MLP core with hand-written forward/backward
// passes, a velocity-field wrapper that assembles (x, t, class embedding)
// inputs, and an Adam optimizer. No autodiff dependency; the architectures
// are fixed and tiny, and the gradient tests exercise the backward passes
// directly.

// Velocity-field contract used by the solvers. Implementations must be
// deterministic given (parameters, inputs) and safe to call concurrently.
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual int dim() const = 0;
    virtual void eval(std::span<const double> x, double t, std::span<double> out) const = 0;
    // cotangent^T * (d out / d x); required for divergence estimation.
    virtual void input_vjp(std::span<const double> x, double t, std::span<const double> cotangent,
                           std::span<double> x_bar) const = 0;
};

// Fully connected net: linear layers with ELU on hidden layers and a linear
// output. The class holds the shape only; parameters live in a caller-owned
// flat array packed as [W0, b0, W1, b1, ...] with W row-major.
class Mlp {
public:
    Mlp() = default;
    // widths include input and output sizes, e.g. {3, 64, 64, 2}.
    explicit Mlp(std::vector<int> widths);

    const std::vector<int>& widths() const { return widths_; }
    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    std::size_t parameter_count() const { return n_params_; }

    // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void init_parameters(std::span<double> params, Rng& rng) const;

    struct Workspace {
        std::vector<std::vector<double>> activations;  // [l] = input to layer l
        std::vector<std::vector<double>> pre;          // preactivation of layer l
    };

    void forward(std::span<const double> params, std::span<const double> input,
                 std::span<double> output, Workspace& ws) const;
    std::vector<double> forward(std::span<const double> params,
                                std::span<const double> input) const;

    // Gradient of <cotangent, forward(input)> accumulated into param_grad;
    // input_grad, when non-empty, receives the gradient w.r.t. the input.
    // Requires the workspace filled by the matching forward call.
    void backward(std::span<const double> params, std::span<const double> cotangent,
                  Workspace& ws, std::span<double> param_grad,
                  std::span<double> input_grad) const;

private:
    std::vector<int> widths_;
    std::size_t n_params_ = 0;
};

// MLP velocity field over (x, t, optional class label). Conditioning appends
// a learned embedding row to the input; row 0 is reserved for the null
// condition, labels map to rows 1..num_classes. Parameters are one flat
// array: embedding table first, then the MLP.
class MlpVelocityModel : public VelocityField {
public:
    MlpVelocityModel() = default;
    MlpVelocityModel(int dim, std::vector<int> hidden, int num_classes = 0, int embed_dim = 0);

    void init_parameters(std::uint64_t seed);

    int dim() const override { return dim_; }
    int num_classes() const { return num_classes_; }
    int embed_dim() const { return embed_dim_; }
    const std::vector<int>& hidden() const { return hidden_; }
    const Mlp& core() const { return mlp_; }

    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    void set_parameters(std::span<const double> p);

    void forward(std::span<const double> x, double t, std::optional<int> cond,
                 std::span<double> out) const;
    std::vector<double> forward(std::span<const double> x, double t,
                                std::optional<int> cond = std::nullopt) const;

    // Gradient of <cotangent, forward(x, t, cond)> w.r.t. all parameters,
    // accumulated into grad (length parameter_count()).
    void backward_params(std::span<const double> x, double t, std::optional<int> cond,
                         std::span<const double> cotangent, std::span<double> grad) const;

    // VelocityField surface: unconditional evaluation.
    void eval(std::span<const double> x, double t, std::span<double> out) const override {
        forward(x, t, std::nullopt, out);
    }
    void input_vjp(std::span<const double> x, double t, std::span<const double> cotangent,
                   std::span<double> x_bar) const override {
        input_vjp_cond(x, t, std::nullopt, cotangent, x_bar);
    }
    void input_vjp_cond(std::span<const double> x, double t, std::optional<int> cond,
                        std::span<const double> cotangent, std::span<double> x_bar) const;

private:
    void assemble_input(std::span<const double> x, double t, std::optional<int> cond,
                        std::vector<double>& input) const;
    int embedding_row(std::optional<int> cond) const;
    std::size_t embedding_size() const {
        return static_cast<std::size_t>(num_classes_ > 0 ? (num_classes_ + 1) * embed_dim_ : 0);
    }
    std::span<const double> mlp_params() const {
        return std::span<const double>(params_).subspan(embedding_size());
    }

    int dim_ = 0;
    int num_classes_ = 0;
    int embed_dim_ = 0;
    std::vector<int> hidden_;
    Mlp mlp_;
    std::vector<double> params_;  // [embedding | mlp]
};

// Binds a condition to a model so the solvers see a plain field.
class ConditionedField : public VelocityField {
public:
    ConditionedField(const MlpVelocityModel& model, std::optional<int> cond)
        : model_(&model), cond_(cond) {}
    int dim() const override { return model_->dim(); }
    void eval(std::span<const double> x, double t, std::span<double> out) const override {
        model_->forward(x, t, cond_, out);
    }
    void input_vjp(std::span<const double> x, double t, std::span<const double> cotangent,
                   std::span<double> x_bar) const override {
        model_->input_vjp_cond(x, t, cond_, cotangent, x_bar);
    }

private:
    const MlpVelocityModel* model_;
    std::optional<int> cond_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Standard first/second-moment update with bias correction.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               const AdamConfig& cfg);

// Checkpoint container: 8-byte magic "FMKIT\0\0\x01", 4-byte little-endian
// header length, UTF-8 JSON header, raw little-endian float32 block.
struct Checkpoint {
    nlohmann::json header;
    std::vector<float> params;
};

void save_checkpoint(const std::string& path, const nlohmann::json& header,
                     std::span<const double> params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fmkit
