#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "inpaint360/errors.hpp"
#include "inpaint360/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kMissing = 3, kNumerical = 4, kOther = 5 };

void report(const inpaint360::StageResult& r) {
  std::printf("%-13s %s (%zu files)\n", r.stage.c_str(), r.skipped ? "up to date" : "done", r.outputs.size());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace inpaint360;
  CLI::App app{"Object removal and inpainting in a voxel radiance field"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool force = false;
  std::string print_config_path;

  std::vector<std::pair<std::string, CLI::App*>> commands;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--out", out_dir, "Output directory (overrides the config)");
    sub->add_option("--workers", workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_flag("--force", force, "Rerun even when outputs are up to date");
  };
  for (const auto& name : stage_names()) {
    auto* sub = app.add_subcommand(name, "Run the '" + name + "' stage");
    add_common(sub);
    commands.emplace_back(name, sub);
  }
  auto* all = app.add_subcommand("run-all", "Run every stage in order");
  add_common(all);
  auto* show = app.add_subcommand("print-config", "Print the effective config with defaults filled in");
  show->add_option("--config", print_config_path, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (show->parsed()) {
      const PipelineConfig cfg = print_config_path.empty() ? PipelineConfig{} : load_config(print_config_path);
      std::cout << config_to_json(cfg);
      return kOk;
    }
    PipelineConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (workers) cfg.workers = *workers;
    if (all->parsed()) {
      run_all(cfg, force, report);
      return kOk;
    }
    for (const auto& [name, sub] : commands)
      if (sub->parsed()) report(run_stage(name, cfg, force));
    return kOk;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const MissingInput& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return kMissing;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const BadSpec& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const UnknownObject& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
