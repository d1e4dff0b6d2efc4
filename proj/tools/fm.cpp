// fm: flow-matching toolkit CLI. Commands take a JSON config (--config) plus
// --key=value overrides on dotted paths; a few common fields have dedicated
// flags for convenience. Exit codes: 0 ok, 2 config error, 3 io error,
// 4 numeric/simulation error, 5 incompatibility.

#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fmkit/errors.hpp"
#include "fmkit/run.hpp"

namespace {

constexpr const char* kUsage = R"(usage: fm <command> [--config FILE] [--KEY=VALUE ...]

commands:
  gen-data             write a dataset (moons | checkerboard | discrete_toy | sphere_mixture)
  train                train a continuous velocity/x1-prediction model
  sample               draw samples from a continuous checkpoint (CSV; optional PGM histogram)
  likelihood           exact-likelihood estimates for points under a checkpoint
  transform-scheduler  sample a checkpoint through a different scheduler post-training
  dfm-train            train a discrete (CTMC) denoiser
  dfm-sample           sample token sequences from a discrete checkpoint
  sphere-train         train a velocity model on the unit 2-sphere
  sphere-sample        sample points on the sphere from a checkpoint
  eval                 metrics: energy | tv | elbo
  dump-path            dump (t, x0, x1, x_t, dx_t) path-sample rows for a dataset

options:
  --config FILE        JSON config; every stochastic command requires "seed"
  --KEY=VALUE          override a config field (dotted path, e.g. --train.lr=3e-4)
  --help               this message

exit codes:
  0 success
  2 configuration or argument error
  3 io error (missing/corrupt files)
  4 numeric or simulation error
  5 model/path incompatibility
)";

int dispatch(const std::string& command, const fmkit::Config& cfg) {
    using Runner = std::function<std::string(const fmkit::Config&)>;
    static const std::map<std::string, Runner> runners = {
        {"gen-data", fmkit::run_gen_data},
        {"train", fmkit::run_train},
        {"sample", fmkit::run_sample},
        {"likelihood", fmkit::run_likelihood},
        {"transform-scheduler", fmkit::run_transform_scheduler},
        {"dfm-train", fmkit::run_dfm_train},
        {"dfm-sample", fmkit::run_dfm_sample},
        {"sphere-train", fmkit::run_sphere_train},
        {"sphere-sample", fmkit::run_sphere_sample},
        {"eval", fmkit::run_eval},
        {"dump-path", fmkit::run_dump_path},
    };
    const auto it = runners.find(command);
    if (it == runners.end()) {
        std::cerr << "unknown command: " << command << "\n" << kUsage;
        return 2;
    }
    const std::string out = it->second(cfg);
    std::cout << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
        std::cout << kUsage;
        return args.empty() ? 2 : 0;
    }
    const std::string command = args[0];

    try {
        fmkit::Config cfg = nlohmann::json::object();
        // First locate --config, then apply --key=value overrides in order.
        for (std::size_t i = 1; i < args.size(); ++i) {
            if (args[i] == "--help" || args[i] == "-h") {
                std::cout << kUsage;
                return 0;
            }
            if (args[i] == "--config") {
                if (i + 1 >= args.size()) throw fmkit::ConfigError("--config needs a file path");
                cfg = fmkit::load_config_file(args[i + 1]);
            }
        }
        for (std::size_t i = 1; i < args.size(); ++i) {
            const std::string& a = args[i];
            if (a == "--config") {
                ++i;
                continue;
            }
            if (a.rfind("--", 0) == 0) {
                const std::size_t eq = a.find('=');
                if (eq == std::string::npos)
                    throw fmkit::ConfigError("expected --key=value, got: " + a);
                fmkit::apply_override(cfg, a.substr(2, eq - 2), a.substr(eq + 1));
                continue;
            }
            throw fmkit::ConfigError("unexpected argument: " + a);
        }
        return dispatch(command, cfg);
    } catch (const fmkit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fmkit::ArgumentError& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return 2;
    } catch (const fmkit::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const fmkit::SimulationError& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return 4;
    } catch (const fmkit::SingularityError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const fmkit::DomainError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const fmkit::IncompatibilityError& e) {
        std::cerr << "incompatibility: " << e.what() << "\n";
        return 5;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
