#include <CLI11.hpp>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "crsos/errors.hpp"
#include "crsos/io.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string rates_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<double> t_end;
  std::vector<double> quadratic;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verification toolkit for the conserved restricted"
               " solid-on-solid surface model"};
  app.set_version_flag("--version", crsos::kCodeVersion);
  app.require_subcommand(1);

  Flags flags;
  const std::pair<const char*, const char*> engines[] = {
      {"enumerate", "list every restricted configuration"},
      {"exact", "integrate the master equation on the full state space"},
      {"kmc", "sample trajectories with the event-driven simulator"},
      {"meanfield", "integrate the factorized one-site evolution"},
      {"stationary", "solve the stationary quadratic and its geometric law"},
      {"selfsim", "evaluate the spreading solution and its scaling fits"},
      {"compare", "cross-validate the exact, sampled, and factorized laws"},
  };
  for (const auto& [name, description] : engines) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", flags.config_path,
                    "JSON experiment configuration")
        ->check(CLI::ExistingFile);
    sub->add_option("--rates", flags.rates_path, "JSON rate table")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "base seed for replica streams");
    sub->add_option("--replicas", flags.replicas, "replica count");
    sub->add_option("--t-end", flags.t_end, "final time");
    if (std::string(name) == "stationary")
      sub->add_option("--quadratic", flags.quadratic,
                      "explicit coefficients q2 q1 q0")
          ->expected(3);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? crsos::kExitOk : crsos::kExitConfig;
  }

  try {
    crsos::ExperimentConfig config;
    if (!flags.config_path.empty())
      config = crsos::load_config(flags.config_path);
    config.engine = app.get_subcommands().front()->get_name();
    if (!flags.rates_path.empty()) {
      config.rates = crsos::load_rate_table(flags.rates_path);
      config.rates_path = flags.rates_path;
    }
    if (!flags.out.empty()) config.out = flags.out;
    if (flags.seed) config.seed = *flags.seed;
    if (flags.replicas) config.replicas = *flags.replicas;
    if (flags.t_end) config.t_end = *flags.t_end;
    if (!flags.quadratic.empty())
      config.quadratic = crsos::QuadraticTriple{
          flags.quadratic[0], flags.quadratic[1], flags.quadratic[2]};
    if (!(config.resolved_t_end() > 0.0))
      throw crsos::ConfigError("t_end must be positive");
    if (!config.times.empty() &&
        config.times.back() > config.resolved_t_end())
      throw crsos::ConfigError("sample times exceed the overridden t_end");

    const crsos::RunManifest manifest = crsos::run_experiment(config);
    std::cout << manifest.summary.dump() << "\n"
              << "outputs in " << config.out << "\n";
    return crsos::kExitOk;
  } catch (const crsos::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return crsos::kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return crsos::kExitConfig;
  } catch (const crsos::ResourceLimitError& e) {
    std::cerr << "resource limit: " << e.what() << "\n";
    return crsos::kExitResource;
  } catch (const crsos::IntegrationError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return crsos::kExitNumeric;
  } catch (const crsos::NegativityError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return crsos::kExitNumeric;
  } catch (const crsos::InvalidMoveError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return crsos::kExitNumeric;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return crsos::kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return crsos::kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
