#include "fmkit/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fmkit/errors.hpp"

namespace fmkit {

namespace {

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

constexpr char kMagic[8] = {'F', 'M', 'K', 'I', 'T', '\0', '\0', '\x01'};

}  // namespace

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ConfigError("mlp needs at least input and output widths");
    for (int w : widths_)
        if (w <= 0) throw ConfigError("mlp widths must be positive");
    n_params_ = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
        n_params_ += static_cast<std::size_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
}

void Mlp::init_parameters(std::span<double> params, Rng& rng) const {
    if (params.size() != n_params_) throw ArgumentError("mlp init: parameter size mismatch");
    std::size_t at = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const int fan_in = widths_[l], fan_out = widths_[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        const std::size_t n = static_cast<std::size_t>(fan_out) * fan_in + fan_out;
        for (std::size_t i = 0; i < n; ++i) params[at++] = rng.uniform(-bound, bound);
    }
}

void Mlp::forward(std::span<const double> params, std::span<const double> input,
                  std::span<double> output, Workspace& ws) const {
    if (input.size() != static_cast<std::size_t>(widths_.front()))
        throw ArgumentError("mlp forward: input size mismatch");
    if (output.size() != static_cast<std::size_t>(widths_.back()))
        throw ArgumentError("mlp forward: output size mismatch");
    const std::size_t n_layers = widths_.size() - 1;
    ws.activations.resize(n_layers);
    ws.pre.resize(n_layers);

    ws.activations[0].assign(input.begin(), input.end());
    std::size_t at = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int rows = widths_[l + 1], cols = widths_[l];
        const auto& in = ws.activations[l];
        auto& pre = ws.pre[l];
        pre.resize(static_cast<std::size_t>(rows));
        const double* W = params.data() + at;
        const double* b = W + static_cast<std::size_t>(rows) * cols;
        for (int r = 0; r < rows; ++r) {
            double acc = b[r];
            const double* w_row = W + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) acc += w_row[c] * in[static_cast<std::size_t>(c)];
            pre[static_cast<std::size_t>(r)] = acc;
        }
        at += static_cast<std::size_t>(rows) * cols + rows;
        if (l + 1 == n_layers) {
            for (int r = 0; r < rows; ++r) output[static_cast<std::size_t>(r)] = pre[static_cast<std::size_t>(r)];
        } else {
            auto& next = ws.activations[l + 1];
            next.resize(static_cast<std::size_t>(rows));
            for (int r = 0; r < rows; ++r) next[static_cast<std::size_t>(r)] = elu(pre[static_cast<std::size_t>(r)]);
        }
    }
}

std::vector<double> Mlp::forward(std::span<const double> params,
                                 std::span<const double> input) const {
    Workspace ws;
    std::vector<double> out(static_cast<std::size_t>(widths_.back()));
    forward(params, input, out, ws);
    return out;
}

void Mlp::backward(std::span<const double> params, std::span<const double> cotangent,
                   Workspace& ws, std::span<double> param_grad,
                   std::span<double> input_grad) const {
    if (cotangent.size() != static_cast<std::size_t>(widths_.back()))
        throw ArgumentError("mlp backward: cotangent size mismatch");
    if (!param_grad.empty() && param_grad.size() != n_params_)
        throw ArgumentError("mlp backward: param_grad size mismatch");
    const std::size_t n_layers = widths_.size() - 1;

    // Offsets of each layer's weight block.
    std::vector<std::size_t> offsets(n_layers);
    std::size_t at = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        offsets[l] = at;
        at += static_cast<std::size_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
    }

    std::vector<double> delta(cotangent.begin(), cotangent.end());
    for (std::size_t li = n_layers; li-- > 0;) {
        const int rows = widths_[li + 1], cols = widths_[li];
        const double* W = params.data() + offsets[li];
        const auto& in = ws.activations[li];
        if (li + 1 != n_layers) {
            // Pass delta through the ELU of this layer's output.
            for (int r = 0; r < rows; ++r)
                delta[static_cast<std::size_t>(r)] *= elu_grad(ws.pre[li][static_cast<std::size_t>(r)]);
        }
        if (!param_grad.empty()) {
            double* gW = param_grad.data() + offsets[li];
            double* gb = gW + static_cast<std::size_t>(rows) * cols;
            for (int r = 0; r < rows; ++r) {
                const double d = delta[static_cast<std::size_t>(r)];
                double* g_row = gW + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) g_row[c] += d * in[static_cast<std::size_t>(c)];
                gb[r] += d;
            }
        }
        if (li > 0 || !input_grad.empty()) {
            std::vector<double> prev(static_cast<std::size_t>(cols), 0.0);
            for (int r = 0; r < rows; ++r) {
                const double d = delta[static_cast<std::size_t>(r)];
                const double* w_row = W + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) prev[static_cast<std::size_t>(c)] += d * w_row[c];
            }
            if (li == 0) {
                for (std::size_t c = 0; c < input_grad.size(); ++c) input_grad[c] = prev[c];
                return;
            }
            delta = std::move(prev);
        }
    }
}

MlpVelocityModel::MlpVelocityModel(int dim, std::vector<int> hidden, int num_classes,
                                   int embed_dim)
    : dim_(dim), num_classes_(num_classes), embed_dim_(num_classes > 0 ? embed_dim : 0),
      hidden_(std::move(hidden)) {
    if (dim <= 0) throw ConfigError("velocity model needs dim > 0");
    if (num_classes_ > 0 && embed_dim_ <= 0)
        throw ConfigError("conditioned velocity model needs embed_dim > 0");
    std::vector<int> widths;
    widths.push_back(dim_ + 1 + embed_dim_);
    for (int h : hidden_) widths.push_back(h);
    widths.push_back(dim_);
    mlp_ = Mlp(std::move(widths));
    params_.assign(embedding_size() + mlp_.parameter_count(), 0.0);
}

void MlpVelocityModel::init_parameters(std::uint64_t seed) {
    Rng rng(seed);
    if (embedding_size() > 0) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim_));
        for (std::size_t i = 0; i < embedding_size(); ++i) params_[i] = rng.uniform(-bound, bound);
    }
    mlp_.init_parameters(std::span<double>(params_).subspan(embedding_size()), rng);
}

void MlpVelocityModel::set_parameters(std::span<const double> p) {
    if (p.size() != params_.size()) throw ArgumentError("set_parameters: size mismatch");
    params_.assign(p.begin(), p.end());
}

int MlpVelocityModel::embedding_row(std::optional<int> cond) const {
    if (!cond.has_value()) return 0;
    if (num_classes_ == 0) throw IncompatibilityError("model has no conditioning head");
    if (*cond < 0 || *cond >= num_classes_) throw ArgumentError("class label out of range");
    return *cond + 1;
}

void MlpVelocityModel::assemble_input(std::span<const double> x, double t,
                                      std::optional<int> cond, std::vector<double>& input) const {
    if (x.size() != static_cast<std::size_t>(dim_)) throw ArgumentError("model input: shape mismatch");
    input.resize(static_cast<std::size_t>(dim_ + 1 + embed_dim_));
    std::copy(x.begin(), x.end(), input.begin());
    input[static_cast<std::size_t>(dim_)] = t;
    if (embed_dim_ > 0) {
        const int row = embedding_row(cond);
        const double* e = params_.data() + static_cast<std::size_t>(row) * embed_dim_;
        std::copy(e, e + embed_dim_, input.begin() + dim_ + 1);
    }
}

void MlpVelocityModel::forward(std::span<const double> x, double t, std::optional<int> cond,
                               std::span<double> out) const {
    std::vector<double> input;
    assemble_input(x, t, cond, input);
    Mlp::Workspace ws;
    mlp_.forward(mlp_params(), input, out, ws);
}

std::vector<double> MlpVelocityModel::forward(std::span<const double> x, double t,
                                              std::optional<int> cond) const {
    std::vector<double> out(static_cast<std::size_t>(dim_));
    forward(x, t, cond, out);
    return out;
}

void MlpVelocityModel::backward_params(std::span<const double> x, double t,
                                       std::optional<int> cond,
                                       std::span<const double> cotangent,
                                       std::span<double> grad) const {
    if (grad.size() != params_.size()) throw ArgumentError("backward_params: grad size mismatch");
    if (cotangent.size() != static_cast<std::size_t>(dim_))
        throw ArgumentError("backward_params: cotangent size mismatch");
    std::vector<double> input;
    assemble_input(x, t, cond, input);
    Mlp::Workspace ws;
    std::vector<double> out(static_cast<std::size_t>(dim_));
    mlp_.forward(mlp_params(), input, out, ws);
    std::vector<double> input_grad(input.size(), 0.0);
    mlp_.backward(mlp_params(), cotangent, ws, grad.subspan(embedding_size()), input_grad);
    if (embed_dim_ > 0) {
        const int row = embedding_row(cond);
        double* ge = grad.data() + static_cast<std::size_t>(row) * embed_dim_;
        for (int i = 0; i < embed_dim_; ++i) ge[i] += input_grad[static_cast<std::size_t>(dim_ + 1 + i)];
    }
}

void MlpVelocityModel::input_vjp_cond(std::span<const double> x, double t, std::optional<int> cond,
                                      std::span<const double> cotangent,
                                      std::span<double> x_bar) const {
    if (x_bar.size() != static_cast<std::size_t>(dim_))
        throw ArgumentError("input_vjp: output size mismatch");
    std::vector<double> input;
    assemble_input(x, t, cond, input);
    Mlp::Workspace ws;
    std::vector<double> out(static_cast<std::size_t>(dim_));
    mlp_.forward(mlp_params(), input, out, ws);
    std::vector<double> input_grad(input.size(), 0.0);
    mlp_.backward(mlp_params(), cotangent, ws, {}, input_grad);
    for (int i = 0; i < dim_; ++i) x_bar[static_cast<std::size_t>(i)] = input_grad[static_cast<std::size_t>(i)];
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               const AdamConfig& cfg) {
    if (params.size() != grad.size() || params.size() != state.m.size())
        throw ArgumentError("adam_step: size mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

void save_checkpoint(const std::string& path, const nlohmann::json& header,
                     std::span<const double> params) {
    nlohmann::json h = header;
    h["param_count"] = params.size();
    const std::string hs = h.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    unsigned char len_le[4] = {static_cast<unsigned char>(len & 0xff),
                               static_cast<unsigned char>((len >> 8) & 0xff),
                               static_cast<unsigned char>((len >> 16) & 0xff),
                               static_cast<unsigned char>((len >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(len_le), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (double p : params) {
        const float f = static_cast<float>(p);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        unsigned char le[4] = {static_cast<unsigned char>(bits & 0xff),
                               static_cast<unsigned char>((bits >> 8) & 0xff),
                               static_cast<unsigned char>((bits >> 16) & 0xff),
                               static_cast<unsigned char>((bits >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(le), 4);
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path);
    unsigned char len_le[4];
    in.read(reinterpret_cast<char*>(len_le), 4);
    if (!in) throw IoError("truncated checkpoint header: " + path);
    const std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) |
                              (static_cast<std::uint32_t>(len_le[1]) << 8) |
                              (static_cast<std::uint32_t>(len_le[2]) << 16) |
                              (static_cast<std::uint32_t>(len_le[3]) << 24);
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated checkpoint header: " + path);
    Checkpoint ckpt;
    try {
        ckpt.header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("malformed checkpoint header: " + std::string(e.what()));
    }
    const std::size_t count = ckpt.header.value("param_count", std::size_t{0});
    ckpt.params.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char le[4];
        in.read(reinterpret_cast<char*>(le), 4);
        if (!in) throw IoError("checkpoint parameter block shorter than header count");
        const std::uint32_t bits = static_cast<std::uint32_t>(le[0]) |
                                   (static_cast<std::uint32_t>(le[1]) << 8) |
                                   (static_cast<std::uint32_t>(le[2]) << 16) |
                                   (static_cast<std::uint32_t>(le[3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        ckpt.params[i] = f;
    }
    return ckpt;
}

}  // namespace fmkit
