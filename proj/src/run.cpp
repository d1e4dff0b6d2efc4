#include "fmkit/run.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fmkit/coupling.hpp"
#include "fmkit/datasets.hpp"
#include "fmkit/errors.hpp"
#include "fmkit/loss.hpp"
#include "fmkit/metrics.hpp"
#include "fmkit/parallel.hpp"

namespace fmkit {

namespace {

const nlohmann::json& require(const Config& cfg, const std::string& key) {
    if (!cfg.contains(key)) throw ConfigError("missing config key: " + key);
    return cfg.at(key);
}

std::uint64_t require_seed(const Config& cfg) {
    if (!cfg.contains("seed")) throw ConfigError("config must set a seed (reproducibility contract)");
    return cfg.at("seed").get<std::uint64_t>();
}

int thread_count(const Config& cfg) {
    return cfg.contains("threads") ? cfg.at("threads").get<int>() : default_thread_count();
}

void ensure_parent_dir(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

TimeDistribution time_dist_from_json(const nlohmann::json& j) {
    if (j.is_null()) return TimeDistribution::uniform();
    const std::string kind = j.value("kind", "uniform");
    if (kind == "uniform") return TimeDistribution::uniform();
    if (kind == "logit_normal")
        return TimeDistribution::logit_normal(j.value("m", 0.0), j.value("s", 1.0));
    if (kind == "explicit_weights") {
        if (!j.contains("weights")) throw ConfigError("explicit_weights needs a weights array");
        return TimeDistribution::explicit_weights(j.at("weights").get<std::vector<double>>());
    }
    throw ConfigError("unknown time distribution: " + kind);
}

struct ContinuousDataset {
    std::vector<std::vector<double>> points;
    std::vector<int> labels;
};

ContinuousDataset load_continuous_dataset(const nlohmann::json& j) {
    ContinuousDataset ds;
    if (j.contains("path")) {
        const LabeledPoints lp = read_points_csv(j.at("path").get<std::string>());
        ds.points = lp.points;
        ds.labels = lp.labels;
        return ds;
    }
    const std::string kind = require(j, "kind").get<std::string>();
    const int n = require(j, "n").get<int>();
    const std::uint64_t seed = require(j, "seed").get<std::uint64_t>();
    if (kind == "moons") {
        const LabeledPoints lp = moons(n, j.value("noise", 0.05), seed);
        ds.points = lp.points;
        ds.labels = lp.labels;
    } else if (kind == "checkerboard") {
        ds.points = checkerboard(n, seed).points;
    } else {
        throw ConfigError("unknown continuous dataset kind: " + kind);
    }
    return ds;
}

void append_metric(std::ofstream& out, long step, double loss, const std::string& time_dist,
                   long clamped = -1) {
    nlohmann::json line;
    line["step"] = step;
    line["loss"] = loss;
    line["time_dist"] = time_dist;
    if (clamped >= 0) line["clamped_logs"] = clamped;
    out << line.dump() << '\n';
}

double standard_normal_logpdf(std::span<const double> x) {
    double q = 0.0;
    for (double v : x) q += v * v;
    return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI) - 0.5 * q;
}

}  // namespace

Config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
}

void apply_override(Config& cfg, const std::string& dotted_key, const std::string& value) {
    nlohmann::json* node = &cfg;
    std::size_t begin = 0;
    for (;;) {
        const std::size_t dot = dotted_key.find('.', begin);
        const std::string part = dotted_key.substr(begin, dot - begin);
        if (part.empty()) throw ConfigError("bad override key: " + dotted_key);
        if (dot == std::string::npos) {
            nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
            (*node)[part] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
            return;
        }
        node = &(*node)[part];
        begin = dot + 1;
    }
}

nlohmann::json scheduler_to_json(const Scheduler& s) {
    nlohmann::json j;
    j["kind"] = s.name();
    nlohmann::json params = nlohmann::json::object();
    switch (s.kind()) {
        case SchedulerKind::Polynomial: params["n"] = s.param_a(); break;
        case SchedulerKind::VP:
            params["beta_min"] = s.param_a();
            params["beta_max"] = s.param_b();
            break;
        case SchedulerKind::VE:
            params["sigma0"] = s.param_a();
            params["sigma_min"] = s.param_b();
            break;
        default: break;
    }
    j["params"] = params;
    return j;
}

Scheduler scheduler_from_json(const nlohmann::json& j) {
    if (j.is_string()) return Scheduler::from_name(j.get<std::string>());
    const std::string kind = require(j, "kind").get<std::string>();
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    if (kind == "polynomial") return Scheduler::polynomial(params.value("n", 1.0));
    if (kind == "vp") return Scheduler::vp(params.value("beta_min", 0.1), params.value("beta_max", 20.0));
    if (kind == "ve") return Scheduler::ve(params.value("sigma0", 100.0), params.value("sigma_min", 0.01));
    return Scheduler::from_name(kind);
}

nlohmann::json kappa_to_json(const MixtureScheduler& k) {
    nlohmann::json j;
    j["kind"] = k.name();
    j["n"] = k.exponent();
    return j;
}

MixtureScheduler kappa_from_json(const nlohmann::json& j) {
    if (j.is_null()) return MixtureScheduler::linear();
    if (j.is_string()) return MixtureScheduler::from_name(j.get<std::string>());
    return MixtureScheduler::from_name(require(j, "kind").get<std::string>(), j.value("n", 1.0));
}

SolveConfig solve_config_from_json(const nlohmann::json& j, std::uint64_t seed) {
    SolveConfig cfg;
    cfg.seed = seed;
    if (j.is_null()) return cfg;
    if (j.contains("method")) cfg.method = ode_method_from_name(j.at("method").get<std::string>());
    cfg.h = j.value("h", cfg.h);
    cfg.t_start = j.value("t_start", cfg.t_start);
    cfg.t_end = j.value("t_end", cfg.t_end);
    cfg.eps = j.value("eps", cfg.eps);
    cfg.churn_base = j.value("beta", cfg.churn_base);
    cfg.churn_slope = j.value("beta_slope", cfg.churn_slope);
    if (j.contains("divergence")) {
        const std::string d = j.at("divergence").get<std::string>();
        if (d == "exact_fd")
            cfg.divergence = DivergenceKind::ExactFd;
        else if (d == "hutchinson")
            cfg.divergence = DivergenceKind::Hutchinson;
        else
            throw ConfigError("unknown divergence estimator: " + d);
    }
    cfg.n_probes = j.value("n_probes", cfg.n_probes);
    if (j.contains("probe_dist")) {
        const std::string p = j.at("probe_dist").get<std::string>();
        if (p == "rademacher")
            cfg.probe_dist = ProbeDist::Rademacher;
        else if (p == "gaussian")
            cfg.probe_dist = ProbeDist::Gaussian;
        else
            throw ConfigError("unknown probe distribution: " + p);
    }
    cfg.validate();
    return cfg;
}

int ContinuousModel::dim() const {
    return mlp ? mlp->dim() : oracle->dim();
}

const VelocityField& ContinuousModel::raw_field() const {
    if (mlp) return *mlp;
    return *oracle;
}

std::unique_ptr<VelocityField> ContinuousModel::velocity_field() const {
    return std::make_unique<ParameterizedVelocityField>(raw_field(), parameterization, scheduler,
                                                        gaussian_source);
}

ScoreFn ContinuousModel::score_fn(const VelocityField& velocity_view) const {
    if (oracle) {
        const GaussianOracle& g = oracle->oracle();
        return [&g](double t, std::span<const double> x) { return g.score(t, x); };
    }
    return score_from_velocity(velocity_view, scheduler, gaussian_source);
}

ContinuousModel load_continuous_model(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    ContinuousModel m;
    m.header = ckpt.header;
    const std::string kind = ckpt.header.value("kind", "");
    m.scheduler = scheduler_from_json(ckpt.header.value("scheduler", nlohmann::json("cond_ot")));
    m.parameterization =
        parameterization_from_name(ckpt.header.value("parameterization", "velocity"));
    m.gaussian_source = ckpt.header.value("gaussian_source", true);
    if (kind == "gaussian_oracle") {
        const std::vector<double> mu = ckpt.header.at("mu").get<std::vector<double>>();
        const double s2 = ckpt.header.value("s2", 1.0);
        m.oracle = std::make_unique<GaussianOracleField>(GaussianOracle(m.scheduler, mu, s2));
        return m;
    }
    if (kind != "mlp_velocity")
        throw IncompatibilityError("checkpoint kind '" + kind + "' is not a continuous model");
    const int dim = ckpt.header.at("dim").get<int>();
    const std::vector<int> hidden = ckpt.header.at("hidden").get<std::vector<int>>();
    int num_classes = 0, embed_dim = 0;
    if (ckpt.header.contains("conditioning") && !ckpt.header.at("conditioning").is_null()) {
        num_classes = ckpt.header.at("conditioning").value("num_classes", 0);
        embed_dim = ckpt.header.at("conditioning").value("embed_dim", 0);
    }
    m.mlp = std::make_unique<MlpVelocityModel>(dim, hidden, num_classes, embed_dim);
    if (ckpt.params.size() != m.mlp->parameter_count())
        throw IoError("checkpoint parameter count does not match the architecture");
    std::vector<double> params(ckpt.params.begin(), ckpt.params.end());
    m.mlp->set_parameters(params);
    return m;
}

DiscreteModel load_discrete_model(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.header.value("kind", "") != "mlp_denoiser")
        throw IncompatibilityError("checkpoint is not a discrete denoiser");
    DiscreteModel m;
    m.header = ckpt.header;
    const int K = ckpt.header.at("K").get<int>();
    const int d = ckpt.header.at("d").get<int>();
    m.denoiser = std::make_unique<MlpDenoiser>(K, d, ckpt.header.at("hidden").get<std::vector<int>>());
    if (ckpt.params.size() != m.denoiser->parameter_count())
        throw IoError("checkpoint parameter count does not match the architecture");
    std::vector<double> params(ckpt.params.begin(), ckpt.params.end());
    m.denoiser->set_parameters(params);
    m.kappa = kappa_from_json(ckpt.header.value("kappa", nlohmann::json()));
    m.source_kind = ckpt.header.value("source", "uniform");
    if (m.source_kind == "uniform") {
        m.source_pmf.assign(static_cast<std::size_t>(K), 1.0 / K);
    } else if (m.source_kind == "mask") {
        m.source_pmf.assign(static_cast<std::size_t>(K), 0.0);
        m.source_pmf.back() = 1.0;  // reserved mask token K-1
    } else {
        throw ConfigError("unknown discrete source kind: " + m.source_kind);
    }
    return m;
}

SphereCheckpoint load_sphere_model(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.header.value("kind", "") != "mlp_sphere")
        throw IncompatibilityError("checkpoint is not a sphere model");
    SphereCheckpoint m;
    m.header = ckpt.header;
    m.model = std::make_unique<SphereModel>(ckpt.header.at("hidden").get<std::vector<int>>());
    if (ckpt.params.size() != m.model->parameter_count())
        throw IoError("checkpoint parameter count does not match the architecture");
    std::vector<double> params(ckpt.params.begin(), ckpt.params.end());
    m.model->set_parameters(params);
    m.kappa = kappa_from_json(ckpt.header.value("kappa", nlohmann::json()));
    return m;
}

std::string run_gen_data(const Config& cfg) {
    const std::string kind = require(cfg, "kind").get<std::string>();
    const std::string out = require(cfg, "out").get<std::string>();
    const std::uint64_t seed = require_seed(cfg);
    ensure_parent_dir(out);
    if (kind == "moons") {
        const LabeledPoints lp = moons(require(cfg, "n").get<int>(), cfg.value("noise", 0.05), seed);
        write_points_csv(out, lp.points, cfg.value("labeled", false) ? &lp.labels : nullptr);
    } else if (kind == "checkerboard") {
        write_points_csv(out, checkerboard(require(cfg, "n").get<int>(), seed).points);
    } else if (kind == "discrete_toy") {
        const DiscreteToyData data = discrete_toy(require(cfg, "K").get<int>(),
                                                  require(cfg, "d").get<int>(),
                                                  require(cfg, "n").get<int>(), seed);
        write_tokens(out, data.sequences);
        std::ofstream pmf(out + ".pmf.json");
        if (!pmf) throw IoError("cannot write pmf next to " + out);
        pmf << data.pmf_json().dump(2) << '\n';
    } else if (kind == "sphere_mixture") {
        write_sphere_csv(out, sphere_mixture(require(cfg, "n").get<int>(), cfg.value("centers", 2),
                                             cfg.value("concentration", 50.0), seed));
    } else {
        throw ConfigError("unknown dataset kind: " + kind);
    }
    return out;
}

std::string run_train(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const ContinuousDataset ds = load_continuous_dataset(require(cfg, "dataset"));
    const Scheduler scheduler = scheduler_from_json(cfg.value("scheduler", nlohmann::json("cond_ot")));
    const Parameterization param =
        parameterization_from_name(cfg.value("parameterization", "velocity"));
    if (param != Parameterization::Velocity && param != Parameterization::X1Prediction)
        throw IncompatibilityError("training supports velocity and x1_prediction targets");

    const nlohmann::json model_cfg = cfg.value("model", nlohmann::json::object());
    const std::vector<int> hidden = model_cfg.value("hidden", std::vector<int>{64, 64});
    const bool conditional = model_cfg.value("conditional", false);
    int num_classes = 0;
    if (conditional) {
        if (ds.labels.empty()) throw IncompatibilityError("conditional training needs a labeled dataset");
        num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    }
    const int embed_dim = conditional ? model_cfg.value("embed_dim", 8) : 0;
    const int dim = static_cast<int>(ds.points.front().size());

    MlpVelocityModel model(dim, hidden, num_classes, embed_dim);
    model.init_parameters(Rng::derive(seed, 0));

    const nlohmann::json train_cfg = cfg.value("train", nlohmann::json::object());
    const long steps = train_cfg.value("steps", 2000L);
    const int batch = train_cfg.value("batch", 256);
    const double lr = train_cfg.value("lr", 1e-3);
    const long log_every = train_cfg.value("log_every", 200L);
    const TimeDistribution time_dist =
        time_dist_from_json(train_cfg.value("time_dist", nlohmann::json()));
    GuidanceConfig guidance;
    guidance.p_uncond = train_cfg.value("p_uncond", 0.0);
    guidance.validate();
    if (guidance.p_uncond > 0.0 && !conditional)
        throw IncompatibilityError("p_uncond > 0 requires a conditional model");
    const std::string coupling = train_cfg.value("coupling", "independent");
    if (coupling != "independent" && coupling != "multisample_ot")
        throw ConfigError("unknown coupling: " + coupling);
    const int threads = thread_count(cfg);

    const std::string output_dir = cfg.value("output_dir", std::string("out"));
    std::filesystem::create_directories(output_dir);
    std::ofstream metrics(output_dir + "/metrics.jsonl");
    if (!metrics) throw IoError("cannot write metrics in " + output_dir);

    Rng data_rng = Rng::substream(seed, 1);
    Rng source_rng = Rng::substream(seed, 2);
    Rng time_rng = Rng::substream(seed, 3);
    Rng dropout_rng = Rng::substream(seed, 4);

    AdamState opt(model.parameter_count());
    AdamConfig adam;
    adam.lr = lr;

    std::vector<PathSample> batch_samples(static_cast<std::size_t>(batch));
    std::vector<int> batch_labels(static_cast<std::size_t>(batch));
    std::vector<std::vector<double>> x0s(static_cast<std::size_t>(batch)),
        x1s(static_cast<std::size_t>(batch));
    std::vector<int> picked(static_cast<std::size_t>(batch));

    for (long step = 1; step <= steps; ++step) {
        for (int b = 0; b < batch; ++b) {
            const std::size_t idx =
                static_cast<std::size_t>(data_rng.uniform_index(ds.points.size()));
            picked[static_cast<std::size_t>(b)] = static_cast<int>(idx);
            x1s[static_cast<std::size_t>(b)] = ds.points[idx];
            auto& x0 = x0s[static_cast<std::size_t>(b)];
            x0.resize(static_cast<std::size_t>(dim));
            for (double& v : x0) v = source_rng.normal();
        }
        std::vector<int> pairing(static_cast<std::size_t>(batch));
        if (coupling == "multisample_ot") {
            pairing = multisample_ot(x0s, x1s).pairing;
        } else {
            for (int b = 0; b < batch; ++b) pairing[static_cast<std::size_t>(b)] = b;
        }
        for (int b = 0; b < batch; ++b) {
            const std::size_t sb = static_cast<std::size_t>(b);
            const std::size_t tb = static_cast<std::size_t>(pairing[sb]);
            const double t = time_dist.sample(time_rng);
            batch_samples[sb] = sample_path(scheduler, t, x0s[sb], x1s[tb]);
            if (conditional)
                batch_labels[sb] = ds.labels[static_cast<std::size_t>(picked[tb])];
        }
        const LossResult res =
            param == Parameterization::Velocity
                ? cfm_loss(model, batch_samples, conditional ? &batch_labels : nullptr,
                           conditional ? &guidance : nullptr, &dropout_rng, threads)
                : x1_prediction_loss(model, batch_samples, conditional ? &batch_labels : nullptr,
                                     conditional ? &guidance : nullptr, &dropout_rng, threads);
        adam_step(opt, model.parameters(), res.grad, adam);
        if (step % log_every == 0 || step == steps)
            append_metric(metrics, step, res.loss, time_dist.name());
    }

    nlohmann::json header;
    header["version"] = 1;
    header["kind"] = "mlp_velocity";
    header["dim"] = dim;
    header["hidden"] = hidden;
    header["activation"] = "elu";
    header["scheduler"] = scheduler_to_json(scheduler);
    header["parameterization"] = parameterization_name(param);
    header["gaussian_source"] = true;
    if (conditional) {
        header["conditioning"] = {{"num_classes", num_classes}, {"embed_dim", embed_dim}};
    } else {
        header["conditioning"] = nullptr;
    }
    const std::string ckpt_path = output_dir + "/model.fmk";
    save_checkpoint(ckpt_path, header, model.parameters());
    return ckpt_path;
}

namespace {

// Shared by sample and transform-scheduler.
std::string sample_continuous(const ContinuousModel& model, const VelocityField& field,
                              const Config& cfg, std::uint64_t seed) {
    const std::string out = require(cfg, "out").get<std::string>();
    const int n = require(cfg, "n").get<int>();
    const int threads = thread_count(cfg);
    SolveConfig solve = solve_config_from_json(cfg.value("solve", nlohmann::json()), seed);

    const bool stochastic = solve.churn_base != 0.0 || solve.churn_slope != 0.0;
    const bool singular_param = model.parameterization != Parameterization::Velocity;
    if (stochastic || singular_param) {
        solve.t_start = solve.clipped_start();
        solve.t_end = solve.clipped_end();
        solve.validate();
    }

    const int dim = model.dim();
    ScoreFn score;
    if (stochastic) score = model.score_fn(field);

    std::vector<std::vector<double>> endpoints(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        Rng rng = Rng::substream(seed, 100 + i);
        std::vector<double> x0(static_cast<std::size_t>(dim));
        for (double& v : x0) v = rng.normal();
        endpoints[i] = stochastic ? sde_endpoint(field, score, x0, solve, rng)
                                  : ode_endpoint(field, x0, solve);
    });
    ensure_parent_dir(out);
    write_points_csv(out, endpoints);

    if (cfg.contains("hist") && !cfg.at("hist").is_null()) {
        const nlohmann::json h = cfg.at("hist");
        HistogramBounds bounds;
        if (h.contains("bounds")) {
            const std::vector<double> b = h.at("bounds").get<std::vector<double>>();
            if (b.size() != 4) throw ConfigError("hist bounds must be [x_lo, x_hi, y_lo, y_hi]");
            bounds = {b[0], b[1], b[2], b[3]};
        }
        render_histogram(endpoints, h.value("bins", 64), bounds,
                         require(h, "path").get<std::string>());
    }
    return out;
}

}  // namespace

std::string run_sample(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const ContinuousModel model = load_continuous_model(require(cfg, "checkpoint").get<std::string>());
    const std::unique_ptr<VelocityField> velocity = model.velocity_field();

    if (cfg.contains("label") && !cfg.at("label").is_null()) {
        if (!model.mlp || model.mlp->num_classes() == 0)
            throw IncompatibilityError("guided sampling needs a conditional checkpoint");
        const int label = cfg.at("label").get<int>();
        const double w = cfg.value("guidance_w", 1.0);
        const CfgVelocityField guided(*model.mlp, label, w);
        const ParameterizedVelocityField view(guided, model.parameterization, model.scheduler,
                                              model.gaussian_source);
        return sample_continuous(model, view, cfg, seed);
    }
    return sample_continuous(model, *velocity, cfg, seed);
}

std::string run_likelihood(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const ContinuousModel model = load_continuous_model(require(cfg, "checkpoint").get<std::string>());
    const std::unique_ptr<VelocityField> velocity = model.velocity_field();
    const LabeledPoints pts = read_points_csv(require(cfg, "points").get<std::string>());
    SolveConfig solve = solve_config_from_json(cfg.value("solve", nlohmann::json()), seed);

    nlohmann::json results = nlohmann::json::array();
    for (const auto& p : pts.points) {
        if (static_cast<int>(p.size()) != model.dim())
            throw IncompatibilityError("point dimension does not match the checkpoint");
        const LikelihoodResult r = compute_likelihood(*velocity, p, standard_normal_logpdf, solve);
        nlohmann::json item;
        item["x"] = p;
        item["x0"] = r.x0;
        item["log_p1"] = r.log_p1;
        results.push_back(item);
    }
    nlohmann::json out_json;
    out_json["results"] = results;
    nlohmann::json config_echo = cfg;
    out_json["config"] = config_echo;

    const std::string out = require(cfg, "out").get<std::string>();
    ensure_parent_dir(out);
    std::ofstream f(out);
    if (!f) throw IoError("cannot open for writing: " + out);
    f << out_json.dump(2) << '\n';
    return out;
}

std::string run_transform_scheduler(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const ContinuousModel model = load_continuous_model(require(cfg, "checkpoint").get<std::string>());
    const std::unique_ptr<VelocityField> velocity = model.velocity_field();
    const Scheduler target = scheduler_from_json(require(cfg, "target_scheduler"));
    const ScaleTimeTransform transform(model.scheduler, target);
    const ScheduleTransformedField transformed(*velocity, transform);

    Config sample_cfg = cfg;
    if (!transform.identity()) {
        // The matched source time hits sigma = 0 at the window ends; sample on
        // the eps-clipped window.
        nlohmann::json solve = sample_cfg.value("solve", nlohmann::json::object());
        SolveConfig probe = solve_config_from_json(solve, seed);
        solve["t_start"] = probe.clipped_start();
        solve["t_end"] = probe.clipped_end();
        sample_cfg["solve"] = solve;
    }
    return sample_continuous(model, transformed, sample_cfg, seed);
}

std::string run_dfm_train(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const nlohmann::json ds_cfg = require(cfg, "dataset");
    std::vector<DiscreteState> data;
    int K = 0, d = 0;
    if (ds_cfg.contains("path")) {
        data = read_tokens(ds_cfg.at("path").get<std::string>());
        d = static_cast<int>(data.front().size());
        K = require(cfg, "K").get<int>();
    } else {
        if (require(ds_cfg, "kind").get<std::string>() != "discrete_toy")
            throw ConfigError("unknown discrete dataset kind");
        K = require(ds_cfg, "K").get<int>();
        d = require(ds_cfg, "d").get<int>();
        data = discrete_toy(K, d, require(ds_cfg, "n").get<int>(),
                            require(ds_cfg, "seed").get<std::uint64_t>())
                   .sequences;
    }
    for (const auto& seq : data)
        if (static_cast<int>(seq.size()) != d) throw ConfigError("ragged discrete dataset");

    const std::string source_kind = cfg.value("source", "uniform");
    std::vector<double> source_pmf;
    if (source_kind == "uniform") {
        source_pmf.assign(static_cast<std::size_t>(K), 1.0 / K);
    } else if (source_kind == "mask") {
        source_pmf.assign(static_cast<std::size_t>(K), 0.0);
        source_pmf.back() = 1.0;
    } else {
        throw ConfigError("unknown discrete source kind: " + source_kind);
    }

    const MixtureScheduler kappa = kappa_from_json(cfg.value("kappa", nlohmann::json()));
    const nlohmann::json model_cfg = cfg.value("model", nlohmann::json::object());
    const std::vector<int> hidden = model_cfg.value("hidden", std::vector<int>{64, 64});
    MlpDenoiser denoiser(K, d, hidden);
    denoiser.init_parameters(Rng::derive(seed, 0));

    const nlohmann::json train_cfg = cfg.value("train", nlohmann::json::object());
    const long steps = train_cfg.value("steps", 2000L);
    const int batch = train_cfg.value("batch", 256);
    const double lr = train_cfg.value("lr", 1e-3);
    const long log_every = train_cfg.value("log_every", 200L);
    const int threads = thread_count(cfg);

    const std::string output_dir = cfg.value("output_dir", std::string("out"));
    std::filesystem::create_directories(output_dir);
    std::ofstream metrics(output_dir + "/metrics.jsonl");
    if (!metrics) throw IoError("cannot write metrics in " + output_dir);

    Rng data_rng = Rng::substream(seed, 1);
    Rng path_rng = Rng::substream(seed, 2);

    AdamState opt(denoiser.parameter_count());
    AdamConfig adam;
    adam.lr = lr;

    std::vector<DiscretePathSample> batch_samples(static_cast<std::size_t>(batch));
    DiscreteState x0(static_cast<std::size_t>(d));
    long clamped_total = 0;
    for (long step = 1; step <= steps; ++step) {
        for (int b = 0; b < batch; ++b) {
            const DiscreteState& x1 =
                data[static_cast<std::size_t>(data_rng.uniform_index(data.size()))];
            for (int i = 0; i < d; ++i) {
                if (source_kind == "uniform") {
                    x0[static_cast<std::size_t>(i)] =
                        static_cast<int>(path_rng.uniform_index(static_cast<std::uint64_t>(K)));
                } else {
                    x0[static_cast<std::size_t>(i)] = K - 1;
                }
            }
            const double t = path_rng.uniform() * (1.0 - 1e-3);
            batch_samples[static_cast<std::size_t>(b)] =
                sample_mixture_path(kappa, t, x0, x1, path_rng);
        }
        const DiscreteLossResult res = generalized_kl_loss(denoiser, batch_samples, kappa, threads);
        clamped_total += res.clamped_logs;
        adam_step(opt, denoiser.parameters(), res.grad, adam);
        if (step % log_every == 0 || step == steps)
            append_metric(metrics, step, res.loss, "uniform", clamped_total);
    }

    nlohmann::json header;
    header["version"] = 1;
    header["kind"] = "mlp_denoiser";
    header["K"] = K;
    header["d"] = d;
    header["hidden"] = hidden;
    header["activation"] = "elu";
    header["kappa"] = kappa_to_json(kappa);
    header["source"] = source_kind;
    const std::string ckpt_path = output_dir + "/model.fmk";
    save_checkpoint(ckpt_path, header, denoiser.parameters());
    return ckpt_path;
}

std::string run_dfm_sample(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const DiscreteModel model = load_discrete_model(require(cfg, "checkpoint").get<std::string>());
    const int n = require(cfg, "n").get<int>();
    const std::string out = require(cfg, "out").get<std::string>();
    const int threads = thread_count(cfg);
    DfmSampleConfig sample_cfg;
    sample_cfg.h = cfg.value("h", 0.01);
    sample_cfg.t_end = cfg.value("t_end", 1.0 - 1e-3);
    sample_cfg.corrector_c = cfg.value("corrector_c", 0.0);
    sample_cfg.corrector_linear = cfg.value("corrector_linear", false);

    const int K = model.denoiser->vocab_size();
    const int d = model.denoiser->seq_len();
    std::vector<DiscreteState> samples(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        Rng rng = Rng::substream(seed, 100 + i);
        DiscreteState x0(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            if (model.source_kind == "uniform")
                x0[static_cast<std::size_t>(j)] =
                    static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(K)));
            else
                x0[static_cast<std::size_t>(j)] = K - 1;
        }
        samples[i] = dfm_sample(*model.denoiser, model.kappa, x0, model.source_pmf, sample_cfg, rng);
    });
    ensure_parent_dir(out);
    write_tokens(out, samples);
    return out;
}

std::string run_sphere_train(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const nlohmann::json ds_cfg = require(cfg, "dataset");
    std::vector<SpherePoint> data;
    if (ds_cfg.contains("path")) {
        data = read_sphere_csv(ds_cfg.at("path").get<std::string>());
    } else {
        if (require(ds_cfg, "kind").get<std::string>() != "sphere_mixture")
            throw ConfigError("unknown sphere dataset kind");
        data = sphere_mixture(require(ds_cfg, "n").get<int>(), ds_cfg.value("centers", 2),
                              ds_cfg.value("concentration", 50.0),
                              require(ds_cfg, "seed").get<std::uint64_t>());
    }

    const MixtureScheduler kappa = kappa_from_json(cfg.value("kappa", nlohmann::json()));
    const nlohmann::json model_cfg = cfg.value("model", nlohmann::json::object());
    const std::vector<int> hidden = model_cfg.value("hidden", std::vector<int>{64, 64});
    SphereModel model(hidden);
    model.init_parameters(Rng::derive(seed, 0));

    const nlohmann::json train_cfg = cfg.value("train", nlohmann::json::object());
    const long steps = train_cfg.value("steps", 2000L);
    const int batch = train_cfg.value("batch", 128);
    const double lr = train_cfg.value("lr", 1e-3);
    const long log_every = train_cfg.value("log_every", 200L);
    const int threads = thread_count(cfg);

    const std::string output_dir = cfg.value("output_dir", std::string("out"));
    std::filesystem::create_directories(output_dir);
    std::ofstream metrics(output_dir + "/metrics.jsonl");
    if (!metrics) throw IoError("cannot write metrics in " + output_dir);

    Rng data_rng = Rng::substream(seed, 1);
    Rng source_rng = Rng::substream(seed, 2);
    Rng time_rng = Rng::substream(seed, 3);

    AdamState opt(model.parameter_count());
    AdamConfig adam;
    adam.lr = lr;

    std::vector<GeodesicSample> batch_samples(static_cast<std::size_t>(batch));
    for (long step = 1; step <= steps; ++step) {
        for (int b = 0; b < batch; ++b) {
            const SpherePoint& x1 =
                data[static_cast<std::size_t>(data_rng.uniform_index(data.size()))];
            SpherePoint x0 = random_sphere_point(source_rng);
            // Antipodal pairs are excluded (zero-measure set); redraw.
            while (dot(x0.v, x1.v) < -1.0 + 1e-9) x0 = random_sphere_point(source_rng);
            const double t = time_rng.uniform();
            batch_samples[static_cast<std::size_t>(b)] = geodesic_path_sample(kappa, t, x0, x1);
        }
        const SphereLossResult res = rcfm_loss(model, batch_samples, threads);
        adam_step(opt, model.parameters(), res.grad, adam);
        if (step % log_every == 0 || step == steps)
            append_metric(metrics, step, res.loss, "uniform");
    }

    nlohmann::json header;
    header["version"] = 1;
    header["kind"] = "mlp_sphere";
    header["hidden"] = hidden;
    header["activation"] = "elu";
    header["kappa"] = kappa_to_json(kappa);
    const std::string ckpt_path = output_dir + "/model.fmk";
    save_checkpoint(ckpt_path, header, model.parameters());
    return ckpt_path;
}

std::string run_sphere_sample(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const SphereCheckpoint model = load_sphere_model(require(cfg, "checkpoint").get<std::string>());
    const int n = require(cfg, "n").get<int>();
    const double h = cfg.value("h", 0.01);
    const std::string out = require(cfg, "out").get<std::string>();
    const int threads = thread_count(cfg);

    std::vector<SpherePoint> endpoints(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        Rng rng = Rng::substream(seed, 100 + i);
        const SpherePoint x0 = random_sphere_point(rng);
        endpoints[i] = sphere_sample(*model.model, x0, h).back();
    });
    ensure_parent_dir(out);
    write_sphere_csv(out, endpoints);
    return out;
}

std::string run_eval(const Config& cfg) {
    const std::string metric = require(cfg, "metric").get<std::string>();
    const std::string out = require(cfg, "out").get<std::string>();
    nlohmann::json result;
    result["metric"] = metric;
    if (metric == "energy") {
        const LabeledPoints a = read_points_csv(require(cfg, "generated").get<std::string>());
        const LabeledPoints b = read_points_csv(require(cfg, "reference").get<std::string>());
        result["value"] = energy_distance(a.points, b.points, thread_count(cfg));
    } else if (metric == "tv") {
        const std::vector<DiscreteState> gen = read_tokens(require(cfg, "generated").get<std::string>());
        std::ifstream pf(require(cfg, "pmf").get<std::string>());
        if (!pf) throw IoError("cannot open pmf file");
        nlohmann::json pmf_json;
        pf >> pmf_json;
        const int K = pmf_json.at("K").get<int>();
        const int d = pmf_json.at("d").get<int>();
        DiscreteToyData target;
        target.K = K;
        target.d = d;
        target.atoms = pmf_json.at("atoms").get<std::vector<DiscreteState>>();
        target.probs = pmf_json.at("probs").get<std::vector<double>>();
        const auto gen_marg = empirical_marginals(gen, K, d);
        const auto tgt_marg = target.coordinate_marginals();
        result["value"] = max_marginal_tv(gen_marg, tgt_marg);
        nlohmann::json per;
        for (int i = 0; i < d; ++i)
            per.push_back(tv_distance(gen_marg[static_cast<std::size_t>(i)],
                                      tgt_marg[static_cast<std::size_t>(i)]));
        result["per_coordinate"] = per;
    } else if (metric == "elbo") {
        const std::uint64_t seed = require_seed(cfg);
        const DiscreteModel model = load_discrete_model(require(cfg, "checkpoint").get<std::string>());
        const std::vector<DiscreteState> data = read_tokens(require(cfg, "data").get<std::string>());
        const int n_seq = std::min<int>(cfg.value("n_sequences", 100), static_cast<int>(data.size()));
        const int n_mc = cfg.value("n_mc", 64);
        Rng rng(seed);
        double acc = 0.0;
        for (int i = 0; i < n_seq; ++i)
            acc += elbo_nll_bound(*model.denoiser, model.kappa, data[static_cast<std::size_t>(i)],
                                  model.source_pmf, n_mc, rng);
        result["value"] = acc / n_seq;
        result["interpretation"] = "upper bound on mean negative log-likelihood";
    } else {
        throw ConfigError("unknown metric: " + metric);
    }
    ensure_parent_dir(out);
    std::ofstream f(out);
    if (!f) throw IoError("cannot open for writing: " + out);
    f << result.dump(2) << '\n';
    return out;
}

std::string run_dump_path(const Config& cfg) {
    const std::uint64_t seed = require_seed(cfg);
    const LabeledPoints data = read_points_csv(require(cfg, "data").get<std::string>());
    const Scheduler scheduler = scheduler_from_json(cfg.value("scheduler", nlohmann::json("cond_ot")));
    const int n = require(cfg, "n").get<int>();
    const std::string out = require(cfg, "out").get<std::string>();
    const std::size_t dim = data.points.front().size();

    Rng rng(seed);
    ensure_parent_dir(out);
    std::ofstream f(out);
    if (!f) throw IoError("cannot open for writing: " + out);
    f << "t";
    for (std::size_t j = 0; j < dim; ++j) f << ",x0_" << j;
    for (std::size_t j = 0; j < dim; ++j) f << ",x1_" << j;
    for (std::size_t j = 0; j < dim; ++j) f << ",xt_" << j;
    for (std::size_t j = 0; j < dim; ++j) f << ",dxt_" << j;
    f << '\n';
    std::vector<double> x0(dim);
    for (int i = 0; i < n; ++i) {
        const auto& x1 = data.points[static_cast<std::size_t>(rng.uniform_index(data.points.size()))];
        for (double& v : x0) v = rng.normal();
        const double t = rng.uniform();
        const PathSample s = sample_path(scheduler, t, x0, x1);
        f << format_double(s.t);
        for (double v : s.x0) f << ',' << format_double(v);
        for (double v : s.x1) f << ',' << format_double(v);
        for (double v : s.x_t) f << ',' << format_double(v);
        for (double v : s.dx_t) f << ',' << format_double(v);
        f << '\n';
    }
    return out;
}

}  // namespace fmkit
