// Pipeline front end. Each subcommand runs one stage against a run
// directory; the simulate stage creates the run and freezes its config.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "erec/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"impact sequence reconstruction pipeline"};
  app.require_subcommand(1);

  std::string config_path, run_dir;
  unsigned long long seed = 0;
  bool f64 = false, no_adversarial = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline configuration file");
    cmd->add_option("--run-dir", run_dir, "run directory (defaults to output.dir from the config)");
    cmd->add_option("--seed", seed, "override the configured seed (simulate only)");
    cmd->add_flag("--f64", f64, "64-bit deterministic mode");
  };
  CLI::App* sim = app.add_subcommand("simulate", "integrate the impact scenario and render frames");
  CLI::App* train = app.add_subcommand("train", "train the latent model on the simulated frames");
  CLI::App* recon = app.add_subcommand("reconstruct", "densify the latent trajectory and decode frames");
  CLI::App* enhance = app.add_subcommand("enhance", "train the enhancement network on decoded/simulated pairs");
  CLI::App* report = app.add_subcommand("report", "print the consolidated run report");
  for (CLI::App* cmd : {sim, train, recon, enhance, report}) add_common(cmd);
  train->add_flag("--no-adversarial", no_adversarial, "train the plain variational model (critic disabled)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  CLI::App* cmd = app.get_subcommands().front();

  try {
    std::optional<erec::PipelineConfig> cfg;
    if (!config_path.empty()) {
      cfg = erec::load_config_file(config_path);
      if (cmd->count("--seed") > 0) cfg->seed = seed;
    } else if (cmd->count("--seed") > 0) {
      throw erec::ConfigError("config: --seed needs --config");
    }
    const std::string dir = !run_dir.empty() ? run_dir : (cfg ? cfg->output_dir : std::string());
    if (dir.empty()) throw erec::ConfigError("config: provide --config or --run-dir");
    const erec::PipelineConfig* override_cfg = cfg ? &*cfg : nullptr;

    if (cmd == sim) {
      if (!cfg) throw erec::ConfigError("config: simulate requires --config");
      erec::run_simulate(dir, *cfg);
      std::cout << "simulate: frames written to " << dir << "/" << erec::paths::kFramesDir << "\n";
    } else if (cmd == train) {
      if (f64)
        erec::run_train<double>(dir, !no_adversarial, override_cfg);
      else
        erec::run_train<float>(dir, !no_adversarial, override_cfg);
      std::cout << "train: model and history written to " << dir << "\n";
    } else if (cmd == recon) {
      if (f64)
        erec::run_reconstruct<double>(dir, override_cfg);
      else
        erec::run_reconstruct<float>(dir, override_cfg);
      std::cout << "reconstruct: trajectory, dense frames and error report written to " << dir << "\n";
    } else if (cmd == enhance) {
      if (f64)
        erec::run_enhance<double>(dir, override_cfg);
      else
        erec::run_enhance<float>(dir, override_cfg);
      std::cout << "enhance: enhanced frames and metrics written to " << dir << "\n";
    } else {
      std::cout << erec::run_report(dir);
    }
    return 0;
  } catch (const erec::ConfigError& e) {
    std::cerr << "erec: " << e.what() << "\n";
    return 2;
  } catch (const erec::MissingStageError& e) {
    std::cerr << "erec: " << e.what() << "\n";
    return 3;
  } catch (const erec::UnknownRunError& e) {
    std::cerr << "erec: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "erec: " << e.what() << "\n";
    return 1;
  }
}
