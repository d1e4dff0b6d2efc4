#pragma once

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "fmkit/discrete.hpp"
#include "fmkit/model.hpp"
#include "fmkit/path.hpp"
#include "fmkit/scheduler.hpp"
#include "fmkit/solver.hpp"
#include "fmkit/sphere.hpp"

namespace fmkit {

// Command implementations behind the `fm` binary. Every command takes one
// JSON config (see README for schemas); all stochastic work derives from the
// mandatory "seed" field, so identical configs give byte-identical outputs.

using Config = nlohmann::json;

Config load_config_file(const std::string& path);
// "--a.b.c=value" style overrides; value parsed as JSON when possible.
void apply_override(Config& cfg, const std::string& dotted_key, const std::string& value);

nlohmann::json scheduler_to_json(const Scheduler& s);
Scheduler scheduler_from_json(const nlohmann::json& j);
nlohmann::json kappa_to_json(const MixtureScheduler& k);
MixtureScheduler kappa_from_json(const nlohmann::json& j);
SolveConfig solve_config_from_json(const nlohmann::json& j, std::uint64_t seed);

// A continuous checkpoint resolved into something the solvers can run:
// either a trained MLP or the builtin analytic Gaussian model (registered as
// the pseudo-checkpoint kind "gaussian_oracle").
struct ContinuousModel {
    std::unique_ptr<MlpVelocityModel> mlp;
    std::unique_ptr<GaussianOracleField> oracle;
    Scheduler scheduler;
    Parameterization parameterization = Parameterization::Velocity;
    bool gaussian_source = true;
    nlohmann::json header;

    int dim() const;
    const VelocityField& raw_field() const;
    // Velocity view (conversion applied when the checkpoint stores another
    // parameterization).
    std::unique_ptr<VelocityField> velocity_field() const;
    ScoreFn score_fn(const VelocityField& velocity_view) const;
};

ContinuousModel load_continuous_model(const std::string& path);

struct DiscreteModel {
    std::unique_ptr<MlpDenoiser> denoiser;
    MixtureScheduler kappa;
    std::vector<double> source_pmf;
    std::string source_kind;
    nlohmann::json header;
};

DiscreteModel load_discrete_model(const std::string& path);

struct SphereCheckpoint {
    std::unique_ptr<SphereModel> model;
    MixtureScheduler kappa;
    nlohmann::json header;
};

SphereCheckpoint load_sphere_model(const std::string& path);

// Commands. Each returns the path of its main output.
std::string run_gen_data(const Config& cfg);
std::string run_train(const Config& cfg);
std::string run_sample(const Config& cfg);
std::string run_likelihood(const Config& cfg);
std::string run_transform_scheduler(const Config& cfg);
std::string run_dfm_train(const Config& cfg);
std::string run_dfm_sample(const Config& cfg);
std::string run_sphere_train(const Config& cfg);
std::string run_sphere_sample(const Config& cfg);
std::string run_eval(const Config& cfg);
std::string run_dump_path(const Config& cfg);

}  // namespace fmkit
