#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "mammo/error.hpp"
#include "mammo/pipeline.hpp"

namespace {

namespace mp = mammo::pipeline;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kConvergence = 4 };

int run(int argc, char** argv) {
  CLI::App app{"Mass / non-mass patch classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, input_dir, work_dir, weights, tap;
  std::uint64_t seed = 0, random_weights = 0;
  std::size_t workers = 1, per_class = 0;
  bool augment = false, skip_blank = false, faithful_rows = false;

  auto* o_config = app.add_option("--config", config_path,
                                  "key=value config file or run manifest");
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  auto* o_workers = app.add_option("--workers", workers, "worker threads");
  auto* o_tap = app.add_option("--tap", tap, "feature tap")
                    ->check(CLI::IsMember({"fc2", "flatten"}));
  app.add_flag("--augment", augment, "add flipped and rotated copies of patches");
  app.add_flag("--skip-blank", skip_blank, "drop constant-intensity patches");
  auto* o_random = app.add_option("--random-weights", random_weights,
                                  "use a seeded random network");
  app.add_flag("--paper-faithful-rows", faithful_rows,
               "split by rows instead of source patches");
  auto* o_input = app.add_option("--input-dir", input_dir, "image directory");
  auto* o_work = app.add_option("--work-dir", work_dir, "stage artifact directory");
  auto* o_weights = app.add_option("--weights", weights, "VGGW weight file");
  auto* o_per_class = app.add_option("--per-class", per_class,
                                     "base patches kept per class (0: all)");

  const std::map<std::string, std::pair<std::string, std::function<void(const mp::PipelineConfig&)>>>
      commands{
          {"synth", {"generate a synthetic image/mask corpus", mp::cmd_synth}},
          {"extract-patches", {"cut labeled patches from the images", mp::cmd_extract_patches}},
          {"extract-features", {"run the CNN over the patches", mp::cmd_extract_features}},
          {"select-features", {"rank features and keep the cumulative-importance prefix", mp::cmd_select_features}},
          {"split", {"assign rows to groups A-E", mp::cmd_split}},
          {"grid-search", {"tune C and nu on the validation groups", mp::cmd_grid_search}},
          {"evaluate", {"score the test groups and write reports", mp::cmd_evaluate}},
          {"run-pipeline", {"extract-patches through evaluate", mp::run_pipeline}},
      };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  mp::PipelineConfig cfg;
  if (*o_config) mp::load_config(cfg, config_path);
  if (*o_seed) cfg.seed = seed;
  if (*o_workers) cfg.workers = workers;
  if (*o_tap) mp::apply_setting(cfg, "tap", tap);
  if (augment) cfg.augment = true;
  if (skip_blank) cfg.skip_blank = true;
  if (*o_random) cfg.random_weights = random_weights;
  if (faithful_rows) cfg.paper_faithful_rows = true;
  if (*o_input) cfg.input_dir = input_dir;
  if (*o_work) cfg.work_dir = work_dir;
  if (*o_weights) cfg.weights = weights;
  if (*o_per_class) cfg.per_class = per_class;
  cfg.validate();

  const auto* sub = app.get_subcommands().front();
  commands.at(sub->get_name()).second(cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mammo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const mammo::ConvergenceError& e) {
    std::cerr << "solver failed: " << e.what() << " (residual " << e.residual()
              << ")\n";
    return kConvergence;
  } catch (const mammo::SearchError& e) {
    std::cerr << "solver failed: " << e.what() << '\n';
    return kConvergence;
  } catch (const mammo::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
