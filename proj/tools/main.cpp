// Command-line front end over the pipeline commands.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "voxfuse/errors.hpp"
#include "voxfuse/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "run configuration (JSON)");
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--out", flags.out, "override the output directory");
  cmd->add_option("--jobs", flags.jobs, "worker threads for per-scene work");
}

voxfuse::pipeline::RunConfig resolve(const CommonFlags& flags) {
  voxfuse::pipeline::RunConfig cfg =
      flags.config.empty() ? voxfuse::pipeline::default_run_config()
                           : voxfuse::pipeline::load_run_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.jobs) cfg.jobs = *flags.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxel-image fusion pipeline: augmentation, projection "
               "visualization, KITTI-protocol evaluation, and the confidence "
               "rectification demo"};
  app.require_subcommand(1);

  CommonFlags augment_flags, project_flags, eval_flags, fcr_flags, stats_flags;
  std::string project_scene;
  std::string detections_file;

  CLI::App* augment =
      app.add_subcommand("augment", "occlusion-aware ground-truth sampling");
  add_common(augment, augment_flags);

  CLI::App* project =
      app.add_subcommand("project", "draw projected voxel centers and boxes");
  add_common(project, project_flags);
  project->add_option("--scene", project_scene, "scene id")->required();

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a detections file (candidate JSON)");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--detections", detections_file, "detections file")
      ->required();

  CLI::App* fcr =
      app.add_subcommand("fcr-demo", "train and score the rectification head");
  add_common(fcr, fcr_flags);

  CLI::App* stats =
      app.add_subcommand("voxel-stats", "per-scale occupancy statistics");
  add_common(stats, stats_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : voxfuse::pipeline::kExitUsage;
  }

  try {
    if (augment->parsed())
      return voxfuse::pipeline::cmd_augment(resolve(augment_flags), std::cout);
    if (project->parsed())
      return voxfuse::pipeline::cmd_project(resolve(project_flags),
                                            project_scene, std::cout);
    if (eval_cmd->parsed())
      return voxfuse::pipeline::cmd_eval(resolve(eval_flags), detections_file,
                                         std::cout);
    if (fcr->parsed())
      return voxfuse::pipeline::cmd_fcr_demo(resolve(fcr_flags), std::cout);
    if (stats->parsed())
      return voxfuse::pipeline::cmd_voxel_stats(resolve(stats_flags),
                                                std::cout);
  } catch (const voxfuse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return voxfuse::pipeline::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return voxfuse::pipeline::kExitPartial;
  }
  return voxfuse::pipeline::kExitUsage;
}
