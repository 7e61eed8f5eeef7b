// End-to-end checks of the command-line tool. The binary path comes from the
// CLIM_CLI environment variable (set by the test harness).

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "clim/clim.hpp"

namespace fs = std::filesystem;
using Catch::Approx;

namespace {

std::string cli_path() {
  const char* p = std::getenv("CLIM_CLI");
  if (p == nullptr || *p == '\0') throw std::runtime_error("CLIM_CLI is not set");
  return p;
}

fs::path scratch_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("clim_cli_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = cli_path() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status < 0) throw std::runtime_error("system() failed");
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

clim::RunConfig toy_run_config() {
  clim::RunConfig rc;
  rc.variant = "climnet+lct";
  rc.template_size = 32;
  rc.search_size = 64;
  rc.backbone_widths = {4, 8, 8, 8, 8};
  rc.token_c = 8;
  rc.heads = 2;
  rc.ffn_mult = 2;
  rc.climnet_widths = {4, 6, 8, 10};
  rc.m = 2;
  rc.frame_w = 96;
  rc.frame_h = 96;
  rc.seq_length = 6;
  rc.n_sequences = 2;
  rc.steps = 2;
  rc.batch = 2;
  rc.seed = 7;
  return rc;
}

fs::path write_config(const fs::path& dir) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << clim::serialize_run_config(toy_run_config());
  return p;
}

std::vector<fs::path> sorted_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

void require_dirs_identical(const fs::path& a, const fs::path& b) {
  const auto fa = sorted_files(a), fb = sorted_files(b);
  REQUIRE(fa == fb);
  for (const fs::path& rel : fa) {
    INFO(rel.string());
    REQUIRE(slurp(a / rel) == slurp(b / rel));
  }
}

}  // namespace

TEST_CASE("cli: help and argument errors map to exit codes") {
  const fs::path d = scratch_dir("usage");
  CHECK(run_cli("--help", d / "help.log") == 0);
  CHECK(slurp(d / "help.log").find("Usage") != std::string::npos);
  CHECK(run_cli("", d / "none.log") != 0);           // a subcommand is required
  CHECK(run_cli("frobnicate", d / "bad.log") == 2);  // unknown subcommand
  CHECK(run_cli("synth", d / "noout.log") == 2);     // missing required --out
}

TEST_CASE("cli: gradcheck runs a named check and rejects unknown names") {
  const fs::path d = scratch_dir("gradcheck");
  REQUIRE(run_cli("gradcheck --op softmax", d / "ok.log") == 0);
  const std::string out = slurp(d / "ok.log");
  CHECK(out.find("softmax") != std::string::npos);
  CHECK(out.find("PASS") != std::string::npos);
  CHECK(run_cli("gradcheck --op not_an_op", d / "bad.log") == 2);
}

TEST_CASE("cli: synth writes a complete, seed-deterministic benchmark set") {
  const fs::path d = scratch_dir("synth");
  const fs::path cfg = write_config(d);
  REQUIRE(run_cli("--config " + cfg.string() + " synth --out " + (d / "a").string(), d / "a.log") == 0);
  REQUIRE(run_cli("--config " + cfg.string() + " synth --out " + (d / "b").string(), d / "b.log") == 0);

  for (const char* seq : {"seq_0000", "seq_0001"}) {
    const fs::path sd = d / "a" / seq;
    REQUIRE(fs::exists(sd / "annotation.txt"));
    for (int t = 0; t < 6; ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.ppm", t);
      REQUIRE(fs::exists(sd / name));
    }
    REQUIRE_FALSE(fs::exists(sd / "frame_0006.ppm"));
  }
  REQUIRE(fs::exists(d / "a" / "config.txt"));
  require_dirs_identical(d / "a", d / "b");

  // A different seed changes the pixels.
  REQUIRE(run_cli("--config " + cfg.string() + " --seed 8 synth --out " + (d / "c").string(), d / "c.log") == 0);
  CHECK(slurp(d / "a" / "seq_0000" / "frame_0000.ppm") != slurp(d / "c" / "seq_0000" / "frame_0000.ppm"));
}

TEST_CASE("cli: track and eval round-trip on a generated sequence") {
  const fs::path d = scratch_dir("track");
  const fs::path cfg = write_config(d);
  REQUIRE(run_cli("--config " + cfg.string() + " synth --out " + (d / "bench").string(), d / "synth.log") == 0);
  const fs::path seq = d / "bench" / "seq_0000";

  REQUIRE(run_cli("--config " + cfg.string() + " track --seq " + seq.string() + " --out " + (d / "run").string(),
                  d / "track.log") == 0);
  REQUIRE(fs::exists(d / "run" / "trajectory.txt"));
  REQUIRE(fs::exists(d / "run" / "report.txt"));
  REQUIRE(fs::exists(d / "run" / "success.csv"));
  CHECK(clim::load_trajectory(d / "run" / "trajectory.txt").size() == 6);
  // Timing is printed but never written into artifacts.
  CHECK(slurp(d / "track.log").find("fps") != std::string::npos);
  CHECK(slurp(d / "run" / "report.txt").find("fps") == std::string::npos);

  REQUIRE(run_cli("eval --seq " + seq.string() + " --results " + (d / "run" / "trajectory.txt").string(),
                  d / "eval.log") == 0);
  CHECK(slurp(d / "eval.log").find("precision") != std::string::npos);

  // Scoring the ground truth against itself gives perfect precision.
  std::vector<clim::Box> truth;
  std::vector<clim::FrameFlags> flags;
  clim::load_annotation(seq / "annotation.txt", truth, flags);
  clim::save_trajectory(d / "oracle.txt", truth);
  REQUIRE(run_cli("eval --seq " + seq.string() + " --results " + (d / "oracle.txt").string(), d / "oracle.log") == 0);
  CHECK(slurp(d / "oracle.log").find("1.0000") != std::string::npos);

  // Truncated trajectories are rejected.
  clim::save_trajectory(d / "short.txt", std::vector<clim::Box>(truth.begin(), truth.begin() + 3));
  CHECK(run_cli("eval --seq " + seq.string() + " --results " + (d / "short.txt").string(), d / "short.log") == 2);
}

TEST_CASE("cli: interp writes an image and rejects off-grid sizes") {
  const fs::path d = scratch_dir("interp");
  const fs::path cfg = write_config(d);
  clim::Rng rng(11);
  auto frame = [&](int side) {
    clim::Tensor<float> t = clim::Tensor<float>::zeros({3, side, side});
    rng.fill_uniform(t, 0.0, 1.0);
    return t;
  };
  clim::save_ppm(d / "a.ppm", frame(16));
  clim::save_ppm(d / "b.ppm", frame(16));
  REQUIRE(run_cli("--config " + cfg.string() + " interp --a " + (d / "a.ppm").string() + " --b " +
                      (d / "b.ppm").string() + " --truth " + (d / "a.ppm").string() + " --out " +
                      (d / "mid.ppm").string(),
                  d / "ok.log") == 0);
  REQUIRE(fs::exists(d / "mid.ppm"));
  CHECK(slurp(d / "mid.ppm").rfind("P6", 0) == 0);
  const clim::Tensor<float> mid = clim::load_ppm<float>(d / "mid.ppm");
  CHECK(mid.extent(1) == 16);
  CHECK(mid.extent(2) == 16);
  CHECK(slurp(d / "ok.log").find("l1") != std::string::npos);

  clim::save_ppm(d / "a10.ppm", frame(10));
  clim::save_ppm(d / "b10.ppm", frame(10));
  CHECK(run_cli("--config " + cfg.string() + " interp --a " + (d / "a10.ppm").string() + " --b " +
                    (d / "b10.ppm").string() + " --out " + (d / "bad.ppm").string(),
                d / "bad.log") == 2);
}

TEST_CASE("cli: train-toy with zero steps saves exactly the fresh initialization") {
  const fs::path d = scratch_dir("train0");
  const fs::path cfg = write_config(d);
  REQUIRE(run_cli("--config " + cfg.string() + " train-toy --phase tracker --steps 0 --out " + (d / "run").string(),
                  d / "train.log") == 0);
  REQUIRE(fs::exists(d / "run" / "loss_tracker.csv"));
  CHECK(slurp(d / "run" / "loss_tracker.csv") == "step,loss\n");
  REQUIRE(fs::exists(d / "run" / "weights" / "manifest.txt"));

  clim::RunConfig rc = toy_run_config();
  rc.steps = 0;
  clim::TrackModel<float> fresh(clim::tracker_config_from(rc), rc.seed);
  clim::save_weight_dir(d / "fresh", fresh.params(), clim::serialize_run_config(rc));
  require_dirs_identical(d / "run" / "weights", d / "fresh");
}

TEST_CASE("cli: trained weights load back and change tracking output") {
  const fs::path d = scratch_dir("train2");
  const fs::path cfg = write_config(d);
  REQUIRE(run_cli("--config " + cfg.string() + " synth --out " + (d / "bench").string(), d / "synth.log") == 0);
  const fs::path seq = d / "bench" / "seq_0000";

  REQUIRE(run_cli("--config " + cfg.string() + " train-toy --phase tracker --steps 2 --out " + (d / "run").string(),
                  d / "train.log") == 0);
  const std::string curve = slurp(d / "run" / "loss_tracker.csv");
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 3);  // header + 2 steps

  REQUIRE(run_cli("--config " + cfg.string() + " track --seq " + seq.string() + " --weights " +
                      (d / "run" / "weights").string() + " --out " + (d / "warm").string(),
                  d / "warm.log") == 0);
  REQUIRE(run_cli("--config " + cfg.string() + " track --seq " + seq.string() + " --out " + (d / "cold").string(),
                  d / "cold.log") == 0);
  CHECK(slurp(d / "warm" / "trajectory.txt") != slurp(d / "cold" / "trajectory.txt"));

  // Missing weight directory is an input error.
  CHECK(run_cli("--config " + cfg.string() + " track --seq " + seq.string() + " --weights " + (d / "nope").string() +
                    " --out " + (d / "x").string(),
                d / "missing.log") == 2);
}

TEST_CASE("cli: sweep-m and ablation write their tables") {
  const fs::path d = scratch_dir("tables");
  const fs::path cfg = write_config(d);

  REQUIRE(run_cli("--config " + cfg.string() + " sweep-m --out " + (d / "sweep").string(), d / "sweep.log") == 0);
  const std::string sweep = slurp(d / "sweep" / "sweep.csv");
  CHECK(sweep.rfind("m,precision,success_auc\n", 0) == 0);
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 6);  // header + m in 1..5

  REQUIRE(run_cli("--config " + cfg.string() + " ablation --out " + (d / "abl").string(), d / "abl.log") == 0);
  const std::string abl = slurp(d / "abl" / "ablation.csv");
  CHECK(abl.rfind("variant,precision,success_auc,d_precision,d_success\n", 0) == 0);
  for (const std::string& v : clim::ablation_variant_names()) CHECK(abl.find("\n" + v + ",") != std::string::npos);
  CHECK(abl.find("baseline,") != std::string::npos);
}
