#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mammo/eval.hpp"
#include "mammo/image_io.hpp"
#include "mammo/io.hpp"
#include "mammo/pipeline.hpp"

using namespace mammo;
using namespace mammo::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mammo_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Twelve default-size synthetic images, ten base patches per class.
PipelineConfig small_config(const fs::path& root) {
  PipelineConfig cfg;
  cfg.input_dir = root / "data";
  cfg.work_dir = root / "work";
  cfg.synth.images = 12;
  cfg.synth.positives = 6;
  cfg.per_class = 10;
  cfg.random_weights = 5;
  cfg.seed = 99;
  cfg.ensemble.n_trees = 20;
  return cfg;
}

std::string slurp(const fs::path& p) { return io::read_text(p); }

int run_cli(const std::string& args, std::string* output = nullptr) {
  const char* cli = std::getenv("MAMMO_CLI");
  if (!cli) return -1;
  const auto log = fs::temp_directory_path() / "mammo_cli_output.txt";
  const std::string cmd = std::string(cli) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, SettingsRoundTripThroughFile) {
  PipelineConfig cfg;
  apply_setting(cfg, "stride", "150");
  apply_setting(cfg, "tap", "flatten");
  apply_setting(cfg, "c_values", "0.5,2,8");
  apply_setting(cfg, "formulations", "nu_svm");
  apply_setting(cfg, "gamma", "0.125");
  apply_setting(cfg, "augment", "true");
  EXPECT_EQ(cfg.grid.stride, 150u);
  EXPECT_EQ(cfg.tap, cnn::Tap::flatten);
  EXPECT_EQ(cfg.grids.c_values, (std::vector<double>{0.5, 2, 8}));
  ASSERT_EQ(cfg.formulations.size(), 1u);
  EXPECT_EQ(cfg.formulations[0], svm::FormulationKind::nu_svm);

  const auto dir = scratch("config");
  std::ostringstream text;
  text << "# snapshot\n";
  for (const auto& [k, v] : config_entries(cfg)) text << k << " = " << v << '\n';
  io::atomic_write_text(dir / "run.cfg", text.str());
  PipelineConfig back;
  load_config(back, dir / "run.cfg");
  EXPECT_EQ(config_entries(back), config_entries(cfg));
  fs::remove_all(dir);
}

TEST(Config, BadKeysAndValues) {
  PipelineConfig cfg;
  EXPECT_THROW(apply_setting(cfg, "strdie", "3"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "stride", "three"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "augment", "maybe"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "tap", "fc7"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "kernel", "laplace"), ConfigError);
  EXPECT_THROW(apply_setting(cfg, "formulations", "nu"), ConfigError);
  apply_setting(cfg, "formulations", "nu_svm, c_svm");
  EXPECT_EQ(cfg.formulations.size(), 2u);
  cfg.select_threshold = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(load_config(cfg, "/nonexistent/run.cfg"), ConfigError);
}

TEST(Synth, DeterministicWithMaskedDisc) {
  const auto [a, ma] = synth_image(3, true, 760, 760, "a");
  const auto [b, mb] = synth_image(3, true, 760, 760, "a");
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(ma.bits, mb.bits);
  EXPECT_NO_THROW(a.validate());
  std::size_t marked = 0;
  for (const auto v : ma.bits) marked += v != 0;
  EXPECT_GT(marked, 30000u);
  // Every default patch overlaps the disc by more than the positive share.
  for (const auto o : patch_origins(760, 760, {})) {
    EXPECT_EQ(label_patch(o, {}, ma), PatchClass::mass);
  }
  const auto [n, mn] = synth_image(4, false, 760, 760, "n");
  for (const auto v : mn.bits) ASSERT_EQ(v, 0);
}

TEST(Stages, MissingPrerequisitesNameTheStage) {
  const auto root = scratch("prereq");
  auto cfg = small_config(root);
  fs::create_directories(cfg.work_dir);
  try {
    cmd_select_features(cfg);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("extract-features"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cmd_grid_search(cfg), DataError);
  EXPECT_THROW(cmd_evaluate(cfg), DataError);
  EXPECT_THROW(cmd_extract_patches(cfg), DataError);  // no input directory
  fs::remove_all(root);
}

TEST(Stages, NoWeightsIsConfigError) {
  const auto root = scratch("noweights");
  auto cfg = small_config(root);
  cfg.synth.images = 2;
  cfg.synth.positives = 1;
  cfg.random_weights.reset();
  cmd_synth(cfg);
  cmd_extract_patches(cfg);
  EXPECT_THROW(cmd_extract_features(cfg), ConfigError);
  fs::remove_all(root);
}

TEST(Stages, StagewiseRunMatchesRunPipelineBitForBit) {
  const auto root = scratch("e2e");
  auto cfg = small_config(root);
  cfg.augment = true;
  cmd_synth(cfg);

  auto staged = cfg;
  staged.work_dir = root / "staged";
  cmd_extract_patches(staged);
  cmd_extract_features(staged);
  cmd_select_features(staged);
  cmd_split(staged);
  cmd_grid_search(staged);
  cmd_evaluate(staged);

  auto whole = cfg;
  whole.work_dir = root / "whole";
  whole.workers = 2;
  run_pipeline(whole);

  const WorkPaths a{staged.work_dir}, b{whole.work_dir};
  for (const auto& [pa, pb] : std::vector<std::pair<fs::path, fs::path>>{
           {a.features(), b.features()},
           {a.selection(), b.selection()},
           {a.split(), b.split()},
           {a.grid(), b.grid()},
           {a.report(svm::FormulationKind::c_svm), b.report(svm::FormulationKind::c_svm)},
           {a.report(svm::FormulationKind::nu_svm), b.report(svm::FormulationKind::nu_svm)},
           {staged.work_dir / "manifest.csv", whole.work_dir / "manifest.csv"}}) {
    ASSERT_TRUE(fs::exists(pa)) << pa;
    EXPECT_EQ(io::sha256_file(pa), io::sha256_file(pb)) << pa.filename();
  }

  // 10 + 10 base patches, three rows each.
  const auto fm = read_feature_set(a.features());
  EXPECT_EQ(fm.rows(), 60u);
  EXPECT_EQ(fm.cols(), 4096u);

  // Split is leak-free across every case.
  const auto groups = eval::read_split(a.split(), fm.rows());
  const auto of = groups.group_of(fm.rows());
  std::map<std::tuple<std::string, std::size_t, std::size_t>, std::set<std::size_t>> seen;
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    const auto& p = fm.provenance[r];
    seen[{p.source_id, p.origin.row, p.origin.col}].insert(of[r]);
  }
  for (const auto& [key, gs] : seen) EXPECT_EQ(gs.size(), 1u);

  const auto rep = eval::read_report(a.report(svm::FormulationKind::c_svm));
  EXPECT_EQ(rep.cases.size(), 5u);
  for (const auto& c : rep.cases) EXPECT_TRUE(fs::exists(a.roc_csv(svm::FormulationKind::c_svm, c.name)));
  EXPECT_TRUE(fs::exists(a.roc_svg(svm::FormulationKind::nu_svm)));

  // The run manifest reproduces the configuration.
  PipelineConfig replay;
  load_config(replay, b.manifest());
  EXPECT_EQ(config_entries(replay), config_entries(whole));
  fs::remove_all(root);
}

TEST(Cli, ExitCodes) {
  if (!std::getenv("MAMMO_CLI")) GTEST_SKIP() << "MAMMO_CLI not set";
  const auto root = scratch("cli");
  std::string out;
  EXPECT_EQ(run_cli("--help", &out), 0);
  EXPECT_NE(out.find("run-pipeline"), std::string::npos);
  EXPECT_EQ(run_cli("", &out), 2);
  EXPECT_EQ(run_cli("split --no-such-flag", &out), 2);
  EXPECT_EQ(run_cli("split --tap fc7", &out), 2);
  {
    std::ofstream cfg(root / "bad.cfg");
    cfg << "stride = -4\n";
  }
  EXPECT_EQ(run_cli("split --config " + (root / "bad.cfg").string(), &out), 2);
  EXPECT_EQ(run_cli("select-features --work-dir " + (root / "work").string(), &out), 3);
  EXPECT_NE(out.find("extract-features"), std::string::npos) << out;
  EXPECT_EQ(run_cli("extract-patches --input-dir " + (root / "absent").string(), &out), 3);

  const std::string common = " --input-dir " + (root / "data").string() + " --work-dir " +
                             (root / "work").string() + " --seed 3 --per-class 10 --random-weights 1";
  {
    std::ofstream cfg(root / "synth.cfg");
    cfg << "synth_images = 4\nsynth_positives = 2\nmax_iterations = 1\n";
  }
  EXPECT_EQ(run_cli("synth --config " + (root / "synth.cfg").string() + common, &out), 0) << out;
  EXPECT_EQ(run_cli("extract-patches" + common, &out), 0) << out;
  EXPECT_TRUE(fs::exists(root / "work" / "manifest.csv"));
  fs::remove_all(root);
}
