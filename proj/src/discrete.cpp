#include "fmkit/discrete.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fmkit/errors.hpp"
#include "fmkit/parallel.hpp"

namespace fmkit {

namespace {

constexpr double kLogFloor = 1e-30;
constexpr double kTrainTimeCap = 1.0 - 1e-3;

void require_tokens_in_range(const DiscreteState& x, int K, const char* what) {
    for (int tok : x)
        if (tok < 0 || tok >= K) throw ArgumentError(std::string(what) + ": token out of range");
}

double clamp_train_time(double t) { return t > kTrainTimeCap ? kTrainTimeCap : t; }

}  // namespace

bool satisfies_rate_conditions(std::span<const double> rate, int current_token, double tol) {
    double sum = 0.0;
    for (std::size_t y = 0; y < rate.size(); ++y) {
        sum += rate[y];
        if (static_cast<int>(y) != current_token && rate[y] < -tol) return false;
    }
    return std::abs(sum) <= tol;
}

DiscretePathSample sample_mixture_path(const MixtureScheduler& kappa, double t,
                                       const DiscreteState& x0, const DiscreteState& x1,
                                       Rng& rng) {
    if (x0.size() != x1.size()) throw ArgumentError("sample_mixture_path: shape mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("sample_mixture_path: t outside [0,1]");
    const double k = kappa.kappa(t);
    DiscretePathSample s;
    s.t = t;
    s.x0 = x0;
    s.x1 = x1;
    s.x_t.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
        s.x_t[i] = rng.bernoulli(k) ? x1[i] : x0[i];
    return s;
}

std::vector<double> conditional_rate(const MixtureScheduler& kappa, double t, int K, int token,
                                     int target_token) {
    const double k = kappa.kappa(t);
    if (k >= 1.0) throw SingularityError("conditional_rate: kappa_t = 1");
    const double lam = kappa.d_kappa(t) / (1.0 - k);
    std::vector<double> rate(static_cast<std::size_t>(K), 0.0);
    rate[static_cast<std::size_t>(target_token)] += lam;
    rate[static_cast<std::size_t>(token)] -= lam;
    return rate;
}

RateMatrixView marginal_rate(const ProbabilityDenoiser& denoiser, const MixtureScheduler& kappa,
                             double t, const DiscreteState& x) {
    const double k = kappa.kappa(t);
    if (k >= 1.0) throw SingularityError("marginal_rate: kappa_t = 1");
    const double lam = kappa.d_kappa(t) / (1.0 - k);
    std::vector<std::vector<double>> post;
    denoiser.posteriors(x, t, post);
    RateMatrixView view;
    view.rates.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto& row = view.rates[i];
        row.resize(static_cast<std::size_t>(denoiser.vocab_size()));
        double off_mass = 0.0;
        for (std::size_t y = 0; y < row.size(); ++y) {
            if (static_cast<int>(y) == x[i]) continue;
            row[y] = lam * post[i][y];
            off_mass += row[y];
        }
        row[static_cast<std::size_t>(x[i])] = -off_mass;
    }
    return view;
}

DiscreteState ctmc_euler_step(const RateMatrixView& rates, const DiscreteState& x, double h,
                              Rng& rng) {
    if (rates.rates.size() != x.size()) throw ArgumentError("ctmc_euler_step: shape mismatch");
    if (!(h > 0.0)) throw ArgumentError("ctmc_euler_step: h must be positive");
    DiscreteState next = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto& row = rates.rates[i];
        const double diag = row[static_cast<std::size_t>(x[i])];
        if (diag >= 0.0) continue;  // zero total rate: stay with probability 1
        const double p_stay = std::exp(h * diag);
        const double u = rng.uniform();
        if (u < p_stay) continue;
        // Move: token y != x^i with conditional probability row[y] / |diag|.
        const double z = rng.uniform() * (-diag);
        double acc = 0.0;
        int chosen = x[i];
        for (std::size_t y = 0; y < row.size(); ++y) {
            if (static_cast<int>(y) == x[i]) continue;
            acc += row[y];
            if (z < acc) {
                chosen = static_cast<int>(y);
                break;
            }
        }
        next[i] = chosen;
    }
    return next;
}

std::vector<double> corrector_rate(const MixtureScheduler& kappa, double t, int K, int token,
                                   int target_token, std::span<const double> source_pmf,
                                   double c) {
    const double k = kappa.kappa(t);
    if (!(k > 0.0 && k < 1.0)) throw SingularityError("corrector_rate: kappa_t at an endpoint");
    if (source_pmf.size() != static_cast<std::size_t>(K))
        throw ArgumentError("corrector_rate: source pmf size mismatch");
    const double lam_fwd = kappa.d_kappa(t) / (1.0 - k);
    const double lam_bwd = kappa.d_kappa(t) / k;
    std::vector<double> rate(static_cast<std::size_t>(K), 0.0);
    const std::size_t cur = static_cast<std::size_t>(token);
    const std::size_t tgt = static_cast<std::size_t>(target_token);
    // forward + c * (forward - backward); backward(y) = lam_bwd [delta(y, x^i) - p(y)].
    rate[tgt] += (1.0 + c) * lam_fwd;
    rate[cur] -= (1.0 + c) * lam_fwd;
    for (std::size_t y = 0; y < rate.size(); ++y) rate[y] += c * lam_bwd * source_pmf[y];
    rate[cur] -= c * lam_bwd;
    return rate;
}

MlpDenoiser::MlpDenoiser(int K, int d, std::vector<int> hidden)
    : K_(K), d_(d), hidden_(std::move(hidden)) {
    if (K <= 1 || d <= 0) throw ConfigError("denoiser needs K > 1 and d > 0");
    std::vector<int> widths;
    widths.push_back(K_ * d_ + 1);
    for (int h : hidden_) widths.push_back(h);
    widths.push_back(K_ * d_);
    mlp_ = Mlp(std::move(widths));
    params_.assign(mlp_.parameter_count(), 0.0);
}

void MlpDenoiser::init_parameters(std::uint64_t seed) {
    Rng rng(seed);
    mlp_.init_parameters(params_, rng);
}

void MlpDenoiser::set_parameters(std::span<const double> p) {
    if (p.size() != params_.size()) throw ArgumentError("set_parameters: size mismatch");
    params_.assign(p.begin(), p.end());
}

void MlpDenoiser::encode(const DiscreteState& x, double t, std::vector<double>& input) const {
    if (static_cast<int>(x.size()) != d_) throw ArgumentError("denoiser: sequence length mismatch");
    require_tokens_in_range(x, K_, "denoiser");
    input.assign(static_cast<std::size_t>(K_ * d_ + 1), 0.0);
    for (int i = 0; i < d_; ++i) input[static_cast<std::size_t>(i * K_ + x[static_cast<std::size_t>(i)])] = 1.0;
    input.back() = t;
}

void MlpDenoiser::forward_logits(const DiscreteState& x, double t, Mlp::Workspace& ws,
                                 std::vector<double>& logits) const {
    std::vector<double> input;
    encode(x, t, input);
    logits.resize(static_cast<std::size_t>(K_ * d_));
    mlp_.forward(params_, input, logits, ws);
}

void MlpDenoiser::backward_logits(Mlp::Workspace& ws, std::span<const double> cotangent,
                                  std::span<double> grad) const {
    mlp_.backward(params_, cotangent, ws, grad, {});
}

void MlpDenoiser::posteriors(const DiscreteState& x, double t,
                             std::vector<std::vector<double>>& out) const {
    Mlp::Workspace ws;
    std::vector<double> logits;
    forward_logits(x, t, ws, logits);
    out.assign(static_cast<std::size_t>(d_), std::vector<double>(static_cast<std::size_t>(K_)));
    for (int i = 0; i < d_; ++i) {
        const double* z = logits.data() + static_cast<std::size_t>(i) * K_;
        double zmax = z[0];
        for (int a = 1; a < K_; ++a) zmax = std::max(zmax, z[a]);
        double norm = 0.0;
        auto& row = out[static_cast<std::size_t>(i)];
        for (int a = 0; a < K_; ++a) {
            row[static_cast<std::size_t>(a)] = std::exp(z[a] - zmax);
            norm += row[static_cast<std::size_t>(a)];
        }
        for (int a = 0; a < K_; ++a) row[static_cast<std::size_t>(a)] /= norm;
    }
}

DiscreteLossResult generalized_kl_loss(const MlpDenoiser& denoiser,
                                       std::span<const DiscretePathSample> batch,
                                       const MixtureScheduler& kappa, int threads) {
    if (batch.empty()) throw ArgumentError("generalized_kl_loss: empty batch");
    const int K = denoiser.vocab_size();
    const int d = denoiser.seq_len();
    for (const auto& s : batch)
        if (static_cast<int>(s.x_t.size()) != d || static_cast<int>(s.x1.size()) != d)
            throw ArgumentError("generalized_kl_loss: sample shape mismatch");

    const std::size_t n_params = denoiser.parameter_count();
    const double inv_total = 1.0 / (static_cast<double>(batch.size()) * d);

    constexpr std::size_t kBlock = 16;
    const std::size_t n_blocks = (batch.size() + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> block_grad(n_blocks);
    std::vector<double> block_loss(n_blocks, 0.0);
    std::vector<long> block_clamped(n_blocks, 0);

    parallel_for(n_blocks, threads, [&](std::size_t blk) {
        auto& grad = block_grad[blk];
        grad.assign(n_params, 0.0);
        Mlp::Workspace ws;
        std::vector<double> logits, cot(static_cast<std::size_t>(K * d));
        std::vector<double> p(static_cast<std::size_t>(K));
        const std::size_t begin = blk * kBlock;
        const std::size_t end = std::min(batch.size(), begin + kBlock);
        for (std::size_t n = begin; n < end; ++n) {
            const auto& s = batch[n];
            const double t = clamp_train_time(s.t);
            const double k = kappa.kappa(t);
            const double lam = kappa.d_kappa(t) / (1.0 - k);
            denoiser.forward_logits(s.x_t, t, ws, logits);
            std::fill(cot.begin(), cot.end(), 0.0);
            for (int i = 0; i < d; ++i) {
                const double* z = logits.data() + static_cast<std::size_t>(i) * K;
                double zmax = z[0];
                for (int a = 1; a < K; ++a) zmax = std::max(zmax, z[a]);
                double norm = 0.0;
                for (int a = 0; a < K; ++a) {
                    p[static_cast<std::size_t>(a)] = std::exp(z[a] - zmax);
                    norm += p[static_cast<std::size_t>(a)];
                }
                for (int a = 0; a < K; ++a) p[static_cast<std::size_t>(a)] /= norm;

                const int a1 = s.x1[static_cast<std::size_t>(i)];
                const int at = s.x_t[static_cast<std::size_t>(i)];
                const double delta = (a1 == at) ? 1.0 : 0.0;
                double p1 = p[static_cast<std::size_t>(a1)];
                if (p1 < kLogFloor) {
                    p1 = kLogFloor;
                    block_clamped[blk] += 1;
                }
                block_loss[blk] +=
                    lam * ((delta - 1.0) * std::log(p1) + delta - p[static_cast<std::size_t>(at)]);

                // d loss / d z_j = lam [(delta-1)(1[j=a1] - p_j) - p_at (1[j=at] - p_j)]
                double* c = cot.data() + static_cast<std::size_t>(i) * K;
                const double pat = p[static_cast<std::size_t>(at)];
                for (int j = 0; j < K; ++j) {
                    const double pj = p[static_cast<std::size_t>(j)];
                    double g = (delta - 1.0) * ((j == a1 ? 1.0 : 0.0) - pj);
                    g -= pat * ((j == at ? 1.0 : 0.0) - pj);
                    c[j] = lam * g * inv_total;
                }
            }
            denoiser.backward_logits(ws, cot, grad);
        }
    });

    DiscreteLossResult res;
    res.grad.assign(n_params, 0.0);
    for (std::size_t blk = 0; blk < n_blocks; ++blk) {
        res.loss += block_loss[blk];
        res.clamped_logs += block_clamped[blk];
        for (std::size_t pidx = 0; pidx < n_params; ++pidx) res.grad[pidx] += block_grad[blk][pidx];
    }
    res.loss *= inv_total;
    return res;
}

double elbo_nll_bound(const ProbabilityDenoiser& denoiser, const MixtureScheduler& kappa,
                      const DiscreteState& x1, std::span<const double> source_pmf, int n_draws,
                      Rng& rng) {
    const int K = denoiser.vocab_size();
    const int d = denoiser.seq_len();
    if (static_cast<int>(x1.size()) != d) throw ArgumentError("elbo: sequence length mismatch");
    if (source_pmf.size() != static_cast<std::size_t>(K))
        throw ArgumentError("elbo: source pmf size mismatch");
    std::vector<std::vector<double>> post;
    double acc = 0.0;
    DiscreteState x0(static_cast<std::size_t>(d));
    for (int n = 0; n < n_draws; ++n) {
        const double t = rng.uniform() * kTrainTimeCap;
        for (int i = 0; i < d; ++i) {
            const double z = rng.uniform();
            double cum = 0.0;
            int tok = K - 1;
            for (int a = 0; a < K; ++a) {
                cum += source_pmf[static_cast<std::size_t>(a)];
                if (z < cum) {
                    tok = a;
                    break;
                }
            }
            x0[static_cast<std::size_t>(i)] = tok;
        }
        const DiscretePathSample s = sample_mixture_path(kappa, t, x0, x1, rng);
        const double k = kappa.kappa(t);
        const double lam = kappa.d_kappa(t) / (1.0 - k);
        denoiser.posteriors(s.x_t, t, post);
        for (int i = 0; i < d; ++i) {
            const int a1 = x1[static_cast<std::size_t>(i)];
            const int at = s.x_t[static_cast<std::size_t>(i)];
            const double delta = (a1 == at) ? 1.0 : 0.0;
            double p1 = post[static_cast<std::size_t>(i)][static_cast<std::size_t>(a1)];
            if (p1 < kLogFloor) p1 = kLogFloor;
            acc += lam * ((delta - 1.0) * std::log(p1) + delta -
                          post[static_cast<std::size_t>(i)][static_cast<std::size_t>(at)]);
        }
    }
    // Times are uniform on [0, cap]; rescale to approximate the full [0,1]
    // integral of the bound.
    return acc / static_cast<double>(n_draws) * kTrainTimeCap;
}

DiscreteState dfm_sample(const ProbabilityDenoiser& denoiser, const MixtureScheduler& kappa,
                         const DiscreteState& x0, std::span<const double> source_pmf,
                         const DfmSampleConfig& cfg, Rng& rng) {
    const int K = denoiser.vocab_size();
    const int d = denoiser.seq_len();
    if (static_cast<int>(x0.size()) != d) throw ArgumentError("dfm_sample: sequence length mismatch");
    require_tokens_in_range(x0, K, "dfm_sample");
    if (!(cfg.h > 0.0 && cfg.t_end > 0.0 && cfg.t_end < 1.0))
        throw ConfigError("dfm_sample: need h > 0 and t_end in (0,1)");

    DiscreteState x = x0;
    std::vector<std::vector<double>> post;
    RateMatrixView view;
    view.rates.resize(static_cast<std::size_t>(d));
    double t = 0.0;
    while (t < cfg.t_end - 1e-12) {
        const double h = std::min(cfg.h, cfg.t_end - t);
        const double k = kappa.kappa(t);
        denoiser.posteriors(x, t, post);
        const double c_t = cfg.corrector_linear ? cfg.corrector_c * t : cfg.corrector_c;
        const bool use_corrector = c_t > 0.0 && k > 0.0 && k < 1.0;
        for (int i = 0; i < d; ++i) {
            // Draw X1^i from the posterior, then Euler-step the conditional rate.
            const double z = rng.uniform();
            double cum = 0.0;
            int x1i = K - 1;
            for (int a = 0; a < K; ++a) {
                cum += post[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
                if (z < cum) {
                    x1i = a;
                    break;
                }
            }
            view.rates[static_cast<std::size_t>(i)] =
                use_corrector
                    ? corrector_rate(kappa, t, K, x[static_cast<std::size_t>(i)], x1i, source_pmf, c_t)
                    : conditional_rate(kappa, t, K, x[static_cast<std::size_t>(i)], x1i);
        }
        x = ctmc_euler_step(view, x, h, rng);
        t += h;
    }
    return x;
}

namespace {

class EnumerationDenoiserImpl : public ProbabilityDenoiser {
public:
    explicit EnumerationDenoiserImpl(const DiscreteEnumeration* owner) : owner_(owner) {}
    int vocab_size() const override { return owner_->K(); }
    int seq_len() const override { return owner_->d(); }
    void posteriors(const DiscreteState& x, double t,
                    std::vector<std::vector<double>>& out) const override {
        out = owner_->posteriors(t, x);
    }

private:
    const DiscreteEnumeration* owner_;
};

}  // namespace

DiscreteEnumeration::DiscreteEnumeration(int K, int d, std::vector<double> coupling,
                                         MixtureScheduler kappa)
    : K_(K), d_(d), kappa_(kappa) {
    if (K <= 1 || d <= 0) throw ConfigError("enumeration needs K > 1 and d > 0");
    double states = std::pow(static_cast<double>(K), d);
    if (states > 1e4) throw ConfigError("enumeration state space exceeds 1e4");
    n_states_ = static_cast<std::size_t>(std::llround(states));
    if (coupling.size() != n_states_ * n_states_)
        throw ArgumentError("enumeration: coupling table has wrong size");
    double mass = 0.0;
    for (double c : coupling) {
        if (c < 0.0) throw ArgumentError("enumeration: negative coupling entry");
        mass += c;
    }
    if (std::abs(mass - 1.0) > 1e-9)
        throw ArgumentError("enumeration: coupling does not sum to 1");
    coupling_ = std::move(coupling);
    denoiser_ = std::make_unique<EnumerationDenoiserImpl>(this);
}

std::size_t DiscreteEnumeration::state_index(const DiscreteState& x) const {
    require_tokens_in_range(x, K_, "enumeration");
    std::size_t idx = 0, base = 1;
    for (int i = 0; i < d_; ++i) {
        idx += static_cast<std::size_t>(x[static_cast<std::size_t>(i)]) * base;
        base *= static_cast<std::size_t>(K_);
    }
    return idx;
}

DiscreteState DiscreteEnumeration::state_at(std::size_t index) const {
    DiscreteState x(static_cast<std::size_t>(d_));
    for (int i = 0; i < d_; ++i) {
        x[static_cast<std::size_t>(i)] = static_cast<int>(index % static_cast<std::size_t>(K_));
        index /= static_cast<std::size_t>(K_);
    }
    return x;
}

// p_{t|0,1}(x | x0, x1) factorizes per coordinate as
// kappa delta(x^i, x1^i) + (1-kappa) delta(x^i, x0^i).
std::vector<double> DiscreteEnumeration::marginal_pmf(double t) const {
    const double k = kappa_.kappa(t);
    std::vector<double> pmf(n_states_, 0.0);
    for (std::size_t i0 = 0; i0 < n_states_; ++i0) {
        const DiscreteState x0 = state_at(i0);
        for (std::size_t i1 = 0; i1 < n_states_; ++i1) {
            const double w = coupling_[i0 * n_states_ + i1];
            if (w == 0.0) continue;
            const DiscreteState x1 = state_at(i1);
            // Enumerate x by mixing coordinates; expand the product of
            // two-point supports.
            std::vector<std::pair<std::size_t, double>> partial{{0, 1.0}};
            std::size_t base = 1;
            for (int i = 0; i < d_; ++i) {
                std::vector<std::pair<std::size_t, double>> next;
                next.reserve(partial.size() * 2);
                const int a0 = x0[static_cast<std::size_t>(i)];
                const int a1 = x1[static_cast<std::size_t>(i)];
                for (const auto& [idx, p] : partial) {
                    if (a0 == a1) {
                        next.emplace_back(idx + static_cast<std::size_t>(a1) * base, p);
                    } else {
                        if (k > 0.0) next.emplace_back(idx + static_cast<std::size_t>(a1) * base, p * k);
                        if (k < 1.0)
                            next.emplace_back(idx + static_cast<std::size_t>(a0) * base, p * (1.0 - k));
                    }
                }
                partial = std::move(next);
                base *= static_cast<std::size_t>(K_);
            }
            for (const auto& [idx, p] : partial) pmf[idx] += w * p;
        }
    }
    return pmf;
}

std::vector<std::vector<double>> DiscreteEnumeration::posteriors(double t,
                                                                 const DiscreteState& x) const {
    const double k = kappa_.kappa(t);
    std::vector<std::vector<double>> post(static_cast<std::size_t>(d_),
                                          std::vector<double>(static_cast<std::size_t>(K_), 0.0));
    double total = 0.0;
    for (std::size_t i0 = 0; i0 < n_states_; ++i0) {
        const DiscreteState x0 = state_at(i0);
        for (std::size_t i1 = 0; i1 < n_states_; ++i1) {
            const double w = coupling_[i0 * n_states_ + i1];
            if (w == 0.0) continue;
            const DiscreteState x1 = state_at(i1);
            double lik = w;
            for (int i = 0; i < d_ && lik > 0.0; ++i) {
                const double pk = k * (x[static_cast<std::size_t>(i)] == x1[static_cast<std::size_t>(i)] ? 1.0 : 0.0) +
                                  (1.0 - k) * (x[static_cast<std::size_t>(i)] == x0[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
                lik *= pk;
            }
            if (lik == 0.0) continue;
            total += lik;
            for (int i = 0; i < d_; ++i)
                post[static_cast<std::size_t>(i)][static_cast<std::size_t>(x1[static_cast<std::size_t>(i)])] += lik;
        }
    }
    if (total <= 0.0) throw DomainError("enumeration posterior: state has zero probability");
    for (auto& row : post)
        for (double& p : row) p /= total;
    return post;
}

RateMatrixView DiscreteEnumeration::marginal_rates(double t, const DiscreteState& x) const {
    const double k = kappa_.kappa(t);
    if (k >= 1.0) throw SingularityError("enumeration rates: kappa_t = 1");
    const double lam = kappa_.d_kappa(t) / (1.0 - k);
    // Average the conditional rate vectors over the exact joint posterior of
    // (x0, x1) given X_t = x; this is an independent route from
    // marginal_rate()'s posterior formula.
    RateMatrixView view;
    view.rates.assign(static_cast<std::size_t>(d_),
                      std::vector<double>(static_cast<std::size_t>(K_), 0.0));
    double total = 0.0;
    for (std::size_t i0 = 0; i0 < n_states_; ++i0) {
        const DiscreteState x0 = state_at(i0);
        for (std::size_t i1 = 0; i1 < n_states_; ++i1) {
            const double w = coupling_[i0 * n_states_ + i1];
            if (w == 0.0) continue;
            const DiscreteState x1 = state_at(i1);
            double lik = w;
            for (int i = 0; i < d_ && lik > 0.0; ++i) {
                const double pk = k * (x[static_cast<std::size_t>(i)] == x1[static_cast<std::size_t>(i)] ? 1.0 : 0.0) +
                                  (1.0 - k) * (x[static_cast<std::size_t>(i)] == x0[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
                lik *= pk;
            }
            if (lik == 0.0) continue;
            total += lik;
            for (int i = 0; i < d_; ++i) {
                auto& row = view.rates[static_cast<std::size_t>(i)];
                row[static_cast<std::size_t>(x1[static_cast<std::size_t>(i)])] += lik * lam;
                row[static_cast<std::size_t>(x[static_cast<std::size_t>(i)])] -= lik * lam;
            }
        }
    }
    if (total <= 0.0) throw DomainError("enumeration rates: state has zero probability");
    for (auto& row : view.rates)
        for (double& r : row) r /= total;
    return view;
}

double DiscreteEnumeration::kolmogorov_residual(double t) const {
    constexpr double kFd = 1e-5;
    const std::vector<double> p = marginal_pmf(t);
    const std::vector<double> pp = marginal_pmf(t + kFd);
    const std::vector<double> pm = marginal_pmf(t - kFd);

    std::vector<double> flux(n_states_, 0.0);
    for (std::size_t ix = 0; ix < n_states_; ++ix) {
        if (p[ix] == 0.0) continue;
        const DiscreteState x = state_at(ix);
        const RateMatrixView rates = marginal_rates(t, x);
        std::size_t base = 1;
        for (int i = 0; i < d_; ++i) {
            const auto& row = rates.rates[static_cast<std::size_t>(i)];
            const std::size_t cur = static_cast<std::size_t>(x[static_cast<std::size_t>(i)]) * base;
            for (int y = 0; y < K_; ++y) {
                const std::size_t iy = ix - cur + static_cast<std::size_t>(y) * base;
                flux[iy] += row[static_cast<std::size_t>(y)] * p[ix];
            }
            base *= static_cast<std::size_t>(K_);
        }
    }
    double residual = 0.0;
    for (std::size_t iy = 0; iy < n_states_; ++iy) {
        const double dpdt = (pp[iy] - pm[iy]) / (2.0 * kFd);
        residual = std::max(residual, std::abs(dpdt - flux[iy]));
    }
    return residual;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ArgumentError("tv_distance: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

}  // namespace fmkit
