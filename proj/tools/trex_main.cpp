#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "trex/trex.hpp"

namespace {

struct CommonArgs {
  std::string spec_path;
  std::string out_dir = "out";
  trex::SpecOverrides overrides;
};

void attach_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--spec", args.spec_path, "experiment spec file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory");

  auto opt_u64 = [&](const char* flag, std::optional<std::uint64_t>& slot,
                     const char* help) {
    cmd->add_option_function<std::uint64_t>(
        flag, [&slot](const std::uint64_t& v) { slot = v; }, help);
  };
  auto opt_int = [&](const char* flag, std::optional<int>& slot,
                     const char* help) {
    cmd->add_option_function<int>(
        flag, [&slot](const int& v) { slot = v; }, help);
  };
  auto opt_dbl = [&](const char* flag, std::optional<double>& slot,
                     const char* help) {
    cmd->add_option_function<double>(
        flag, [&slot](const double& v) { slot = v; }, help);
  };
  auto opt_str = [&](const char* flag, std::optional<std::string>& slot,
                     const char* help) {
    cmd->add_option_function<std::string>(
        flag, [&slot](const std::string& v) { slot = v; }, help);
  };

  opt_u64("--seed", args.overrides.seed, "noise seed override");
  opt_int("--jobs", args.overrides.jobs, "worker threads for compare");
  opt_str("--method", args.overrides.method,
          "method override (SART, CGLS, TREX-SART-ITV, ...)");
  opt_int("--views", args.overrides.views, "view count override");
  opt_dbl("--alpha", args.overrides.alpha, "relaxation override");
  opt_dbl("--rho", args.overrides.rho, "splitting penalty override");
  opt_dbl("--mu", args.overrides.mu, "primal step override (0 = automatic)");
  opt_dbl("--sigma", args.overrides.sigma,
          "regularization strength override");
  opt_int("--inner-iters", args.overrides.inner_iters,
          "prox sweeps per outer iteration");
  cmd->add_option_function<std::string>(
         "--lambda-map",
         [&args](const std::string& v) { args.overrides.lambda_map = v; },
         "statistical weight compression")
      ->check(CLI::IsMember({"r1", "r2", "r3"}));
}

trex::ExperimentSpec load_spec(const CommonArgs& args) {
  trex::ExperimentSpec spec = trex::load_experiment(args.spec_path);
  trex::apply_overrides(spec, args.overrides);
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matrix-free iterative CT reconstruction"};
  app.require_subcommand(1);

  CommonArgs sim_args, rec_args, cmp_args;
  CLI::App* sim = app.add_subcommand(
      "simulate", "rasterize a phantom, project it and add photon noise");
  attach_common(sim, sim_args);
  CLI::App* rec = app.add_subcommand(
      "reconstruct", "run one reconstruction method on the experiment data");
  attach_common(rec, rec_args);
  CLI::App* cmp = app.add_subcommand(
      "compare", "run every method listed in the spec on identical data");
  attach_common(cmp, cmp_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const auto spec = load_spec(sim_args);
      trex::cmd_simulate(spec, sim_args.out_dir, std::cout);
    } else if (rec->parsed()) {
      const auto spec = load_spec(rec_args);
      trex::cmd_reconstruct(spec, rec_args.out_dir, std::cout);
    } else if (cmp->parsed()) {
      const auto spec = load_spec(cmp_args);
      trex::cmd_compare(spec, cmp_args.out_dir, std::cout);
    }
  } catch (const trex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
