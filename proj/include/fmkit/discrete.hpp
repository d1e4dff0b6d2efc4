#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fmkit/model.hpp"
#include "fmkit/rng.hpp"
#include "fmkit/scheduler.hpp"

namespace fmkit {

// Discrete Flow Matching over CTMCs on [K]^d: mixture probability paths,
// posterior-parameterized factorized rates, per-coordinate Euler sampling
// with an optional divergence-free corrector, the generalized-KL training
// loss, and exhaustive enumeration oracles for tiny state spaces.

using DiscreteState = std::vector<int>;

struct DiscretePathSample {
    double t = 0.0;
    DiscreteState x0;
    DiscreteState x1;
    DiscreteState x_t;  // per coordinate: x1 with probability kappa_t, else x0
};

// Per-coordinate rate vectors u_t^i(., x) over the vocabulary; entry [i][y]
// is the rate into token y for coordinate i. Off-state entries are >= 0 and
// each row sums to zero.
struct RateMatrixView {
    std::vector<std::vector<double>> rates;  // [d][K]
};

bool satisfies_rate_conditions(std::span<const double> rate, int current_token, double tol = 1e-9);

DiscretePathSample sample_mixture_path(const MixtureScheduler& kappa, double t,
                                       const DiscreteState& x0, const DiscreteState& x1,
                                       Rng& rng);

// (d kappa / (1 - kappa)) [delta(y, x1^i) - delta(y, x^i)] as a vector over
// [K]. Throws SingularityError at kappa_t = 1.
std::vector<double> conditional_rate(const MixtureScheduler& kappa, double t, int K,
                                     int token, int target_token);

// Posterior contract: d probability vectors over [K], each nonnegative and
// summing to 1 within 1e-6.
class ProbabilityDenoiser {
public:
    virtual ~ProbabilityDenoiser() = default;
    virtual int vocab_size() const = 0;
    virtual int seq_len() const = 0;
    // out[i][a] = p^i(a | x, t)
    virtual void posteriors(const DiscreteState& x, double t,
                            std::vector<std::vector<double>>& out) const = 0;
};

// Marginal rates from the posterior:
// u^i(y, x) = (d kappa / (1 - kappa)) [p^i(y | x) - delta(y, x^i)].
RateMatrixView marginal_rate(const ProbabilityDenoiser& denoiser, const MixtureScheduler& kappa,
                             double t, const DiscreteState& x);

// One Euler step of the CTMC: per coordinate, stay with exp(h u(x^i, x)),
// otherwise move to y != x^i with probability proportional to the rate. The
// per-coordinate transition probabilities sum to one exactly for every h > 0.
DiscreteState ctmc_euler_step(const RateMatrixView& rates, const DiscreteState& x, double h,
                              Rng& rng);

// Forward conditional rate plus c * (forward - backward) where the backward
// velocity for one-sided mixture paths with an i.i.d. source p is
// (d kappa / kappa) [delta(y, x^i) - p(y)]. Requires 0 < kappa_t < 1 and an
// independent coupling with i.i.d. source.
std::vector<double> corrector_rate(const MixtureScheduler& kappa, double t, int K, int token,
                                   int target_token, std::span<const double> source_pmf,
                                   double c);

// Trainable posterior: an MLP over (one-hot tokens, t) emitting d*K logits,
// one softmax per coordinate.
class MlpDenoiser : public ProbabilityDenoiser {
public:
    MlpDenoiser() = default;
    MlpDenoiser(int K, int d, std::vector<int> hidden);

    void init_parameters(std::uint64_t seed);

    int vocab_size() const override { return K_; }
    int seq_len() const override { return d_; }
    const std::vector<int>& hidden() const { return hidden_; }

    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    void set_parameters(std::span<const double> p);

    void posteriors(const DiscreteState& x, double t,
                    std::vector<std::vector<double>>& out) const override;

    // Raw logits (length d*K) plus the workspace needed for the backward
    // pass; gradient of <cotangent, logits> accumulates into grad.
    void forward_logits(const DiscreteState& x, double t, Mlp::Workspace& ws,
                        std::vector<double>& logits) const;
    void backward_logits(Mlp::Workspace& ws, std::span<const double> cotangent,
                         std::span<double> grad) const;

private:
    void encode(const DiscreteState& x, double t, std::vector<double>& input) const;

    int K_ = 0;
    int d_ = 0;
    std::vector<int> hidden_;
    Mlp mlp_;
    std::vector<double> params_;
};

struct DiscreteLossResult {
    double loss = 0.0;
    std::vector<double> grad;
    long clamped_logs = 0;  // posterior hit the 1e-30 floor inside a log
};

// Generalized-KL loss for mixture paths, averaged over batch and coordinates:
//   (d kappa / (1-kappa)) [(delta(x1^i, x_t^i) - 1) log p(x1^i | x_t)
//                          + delta(x1^i, x_t^i) - p(x_t^i | x_t)].
// Times are clamped to 1 - 1e-3 before evaluating the schedule.
DiscreteLossResult generalized_kl_loss(const MlpDenoiser& denoiser,
                                       std::span<const DiscretePathSample> batch,
                                       const MixtureScheduler& kappa, int threads = 1);

// Monte-Carlo estimate of the generalized-KL upper bound on -log p_1(x1)
// (sum over coordinates, mean over draws of t ~ U[0, 1-1e-3] and the path).
double elbo_nll_bound(const ProbabilityDenoiser& denoiser, const MixtureScheduler& kappa,
                      const DiscreteState& x1, std::span<const double> source_pmf, int n_draws,
                      Rng& rng);

// Per-coordinate Euler sampler for mixture paths: at each step draw
// X1^i ~ p^i(. | x) from the denoiser and Euler-step with the conditional
// rate, plus c_t * (forward - backward) correction when corrector_c != 0
// (skipped at path endpoints where the backward rate is undefined).
// c_t = corrector_c (constant) or corrector_c * t (linear schedule).
struct DfmSampleConfig {
    double h = 0.01;
    double t_end = 1.0 - 1e-3;
    double corrector_c = 0.0;
    bool corrector_linear = false;
};

DiscreteState dfm_sample(const ProbabilityDenoiser& denoiser, const MixtureScheduler& kappa,
                         const DiscreteState& x0, std::span<const double> source_pmf,
                         const DfmSampleConfig& cfg, Rng& rng);

// Exhaustive oracle over a full coupling table on [K]^d x [K]^d. States are
// indexed little-endian: index = sum_i x^i K^i. Intended for K^d <= 1e4.
class DiscreteEnumeration {
public:
    DiscreteEnumeration(int K, int d, std::vector<double> coupling,
                        MixtureScheduler kappa);

    int K() const { return K_; }
    int d() const { return d_; }
    std::size_t n_states() const { return n_states_; }

    std::size_t state_index(const DiscreteState& x) const;
    DiscreteState state_at(std::size_t index) const;

    // Exact marginal PMF of X_t.
    std::vector<double> marginal_pmf(double t) const;
    // Exact posteriors p^i(a | x) for every coordinate of one state.
    std::vector<std::vector<double>> posteriors(double t, const DiscreteState& x) const;
    // Exact marginal rates for one state, enumerated from conditional rates
    // averaged over the joint posterior on (x0, x1).
    RateMatrixView marginal_rates(double t, const DiscreteState& x) const;

    // max_y | d/dt p_t(y) - sum_x u_t(y, x) p_t(x) | with d/dt by central
    // differences (step 1e-5) and the full-state rates assembled from the
    // factorized ones.
    double kolmogorov_residual(double t) const;

    // Adapter: the exact posteriors as a ProbabilityDenoiser.
    const ProbabilityDenoiser& as_denoiser() const { return *denoiser_; }

private:
    friend class EnumerationDenoiser;
    int K_ = 0;
    int d_ = 0;
    std::size_t n_states_ = 0;
    std::vector<double> coupling_;  // [x0_index * n_states + x1_index]
    MixtureScheduler kappa_;
    std::unique_ptr<ProbabilityDenoiser> denoiser_;
};

// Total-variation distance between two PMFs.
double tv_distance(std::span<const double> p, std::span<const double> q);

}  // namespace fmkit
