// clim: synthetic-benchmark toolkit for the latent-interpolation tracker.
//
// Exit codes: 0 success, 2 bad usage or bad input, 3 numerical failure
// (diverged training or a failed gradient check). All file artifacts are
// byte-deterministic for a fixed seed; wall-clock figures go to stdout only.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clim/clim.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

struct Common {
  std::string config_path;
  long long seed = -1;
  int jobs = 1;
};

clim::RunConfig resolve_config(const Common& c) {
  clim::RunConfig cfg;
  if (!c.config_path.empty()) cfg = clim::load_run_config(c.config_path);
  if (c.seed >= 0) {
    if (c.seed > 0xffffffffll) throw clim::ConfigError("--seed out of range");
    cfg.seed = static_cast<std::uint32_t>(c.seed);
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw clim::IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw clim::IoError("short write to " + path.string());
}

std::string curve_csv(const std::vector<double>& curve) {
  std::string out = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i, curve[i]);
    out += buf;
  }
  return out;
}

// Deterministic per-index scene for benchmark sets: mixed velocities, every
// second sequence occluded, every third aspect-modulated.
clim::SceneConfig benchmark_scene(const clim::RunConfig& rc, int index) {
  clim::Rng rng(rc.seed * 7919u + static_cast<std::uint32_t>(index) * 104729u + 1u);
  clim::SceneConfig s;
  s.frame_w = rc.frame_w;
  s.frame_h = rc.frame_h;
  s.length = rc.seq_length;
  const double base = std::min(rc.frame_w, rc.frame_h);
  s.target_w = std::max(2.0, rng.uniform(0.10, 0.16) * base);
  s.target_h = std::max(2.0, s.target_w * rng.uniform(0.85, 1.2));
  // One saturated channel against the light gray background.
  s.target_color = {rng.uniform(0.05, 0.30), rng.uniform(0.05, 0.30), rng.uniform(0.05, 0.30)};
  s.target_color[rng.randint(0, 2)] = rng.uniform(0.70, 0.95);

  auto bounded_vel = [&](int frame, double target) {
    const double budget = frame / 2.0 - 0.7 * target - 4.0;
    const double vmax = budget > 0 ? budget / std::max(1, s.length - 1) : 0.0;
    return rng.uniform(-vmax, vmax);
  };
  s.vel_x = bounded_vel(rc.frame_w, s.target_w);
  s.vel_y = bounded_vel(rc.frame_h, s.target_h);
  s.start_cx = rc.frame_w / 2.0 + rng.uniform(-2.0, 2.0);
  s.start_cy = rc.frame_h / 2.0 + rng.uniform(-2.0, 2.0);
  if (index % 2 == 1) {
    s.occlude_start = s.length / 3;
    s.occlude_len = std::max(1, s.length / 5);
  }
  if (index % 3 == 2) {
    s.aspect_amp = 0.25;
    s.aspect_period = std::max(2, s.length / 2);
  }
  s.texture_seed = rng.next_u32();
  clim::validate_scene(s);
  return s;
}

std::vector<clim::SequenceData<Scalar>> make_benchmark(const clim::RunConfig& rc) {
  std::vector<clim::SequenceData<Scalar>> seqs;
  seqs.reserve(static_cast<std::size_t>(rc.n_sequences));
  for (int i = 0; i < rc.n_sequences; ++i)
    seqs.push_back(clim::generate_sequence<Scalar>(benchmark_scene(rc, i), rc.seed + static_cast<std::uint32_t>(i)));
  return seqs;
}

clim::TrackModel<Scalar> build_model(const clim::RunConfig& rc, const std::string& weights) {
  clim::TrackModel<Scalar> model(clim::tracker_config_from(rc), rc.seed);
  if (!weights.empty()) clim::load_weight_dir(weights, model.params());
  return model;
}

void report_to_stdout(const clim::MetricsReport& r, bool with_fps) {
  std::cout << clim::format_report(r);
  if (r.failures > 0) std::cout << "failures " << r.failures << "\n";
  if (with_fps) std::printf("fps %.1f\n", r.fps);
}

int cmd_gradcheck(const Common& common, const std::string& op) {
  const clim::RunConfig rc = resolve_config(common);
  std::vector<std::string> names;
  if (op == "all")
    names = clim::gradcheck_names();
  else
    names.push_back(op);
  bool all_pass = true;
  for (const std::string& name : names) {
    const clim::GradCheckResult res = clim::run_gradcheck(name, rc.seed);
    std::printf("%-16s %s  max_rel=%.3g (tol %.1g, %d coords)\n", name.c_str(), res.pass ? "PASS" : "FAIL",
                res.max_rel, res.tol, res.coords_checked);
    if (!res.pass) {
      std::printf("  worst: %s\n", res.worst.c_str());
      all_pass = false;
    }
  }
  if (!all_pass) std::cout << "gradient check FAILED\n";
  return all_pass ? 0 : 3;
}

int cmd_synth(const Common& common, const std::string& out_dir) {
  const clim::RunConfig rc = resolve_config(common);
  fs::create_directories(out_dir);
  for (int i = 0; i < rc.n_sequences; ++i) {
    char name[24];
    std::snprintf(name, sizeof name, "seq_%04d", i);
    clim::save_sequence(fs::path(out_dir) / name,
                        clim::generate_sequence<Scalar>(benchmark_scene(rc, i),
                                                        rc.seed + static_cast<std::uint32_t>(i)));
  }
  write_text(fs::path(out_dir) / "config.txt", clim::serialize_run_config(rc));
  std::cout << "wrote " << rc.n_sequences << " sequences of " << rc.seq_length << " frames to " << out_dir << "\n";
  return 0;
}

int cmd_track(const Common& common, const std::string& seq_dir, const std::string& weights,
              const std::string& out_dir) {
  const clim::RunConfig rc = resolve_config(common);
  clim::TrackModel<Scalar> model = build_model(rc, weights);
  std::vector<clim::SequenceData<Scalar>> seqs;
  seqs.push_back(clim::load_sequence<Scalar>(seq_dir));
  const clim::OpeOutcome<Scalar> out = clim::run_ope<Scalar>(seqs, clim::model_tracker_factory(model), common.jobs);
  fs::create_directories(out_dir);
  clim::save_trajectory(fs::path(out_dir) / "trajectory.txt", out.trajectories[0]);
  write_text(fs::path(out_dir) / "report.txt", clim::format_report(out.report));
  write_text(fs::path(out_dir) / "success.csv", clim::format_success_csv(out.report.success));
  report_to_stdout(out.report, true);
  return 0;
}

int cmd_eval(const std::string& seq_dir, const std::string& results_file, const std::string& out_dir) {
  std::vector<clim::Box> truth;
  std::vector<clim::FrameFlags> flags;
  clim::load_annotation(fs::path(seq_dir) / "annotation.txt", truth, flags);
  const std::vector<clim::Box> results = clim::load_trajectory(results_file);
  if (results.size() != truth.size())
    throw clim::GeometryError("eval: trajectory has " + std::to_string(results.size()) + " boxes, annotation has " +
                              std::to_string(truth.size()));
  const clim::MetricsReport report = clim::compute_report(results, truth, flags);
  if (!out_dir.empty()) {
    write_text(fs::path(out_dir) / "report.txt", clim::format_report(report));
    write_text(fs::path(out_dir) / "success.csv", clim::format_success_csv(report.success));
  }
  report_to_stdout(report, false);
  return 0;
}

int cmd_interp(const Common& common, const std::string& a_path, const std::string& b_path,
               const std::string& truth_path, const std::string& weights, const std::string& out_path) {
  const clim::RunConfig rc = resolve_config(common);
  clim::InterpModel<Scalar> model(clim::climnet_config_from(rc), rc.seed);
  if (!weights.empty()) clim::load_weight_dir(weights, model.params);
  const clim::Tensor<Scalar> a = clim::load_ppm<Scalar>(a_path);
  const clim::Tensor<Scalar> b = clim::load_ppm<Scalar>(b_path);
  clim::NoGradGuard ng;
  const clim::Tensor<Scalar> pred = model.net.forward(a, b);
  clim::save_ppm(out_path, pred);
  std::cout << "wrote " << out_path << "\n";
  if (!truth_path.empty()) {
    const clim::Tensor<Scalar> truth = clim::load_ppm<Scalar>(truth_path);
    const double l1 = static_cast<double>(clim::interframe_loss<Scalar>({pred}, {truth}).item());
    std::printf("l1 %.6f\n", l1);
  }
  return 0;
}

int cmd_sweep_m(const Common& common, const std::string& weights, const std::string& out_dir) {
  const clim::RunConfig rc = resolve_config(common);
  clim::TrackModel<Scalar> model = build_model(rc, weights);
  const std::vector<clim::SequenceData<Scalar>> seqs = make_benchmark(rc);
  const std::vector<clim::SweepRow> rows = clim::sweep_m(model, seqs, {1, 2, 3, 4, 5}, common.jobs);
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "sweep.csv", clim::format_sweep_csv(rows));
  std::cout << clim::format_sweep_table(rows);
  return 0;
}

int cmd_ablation(const Common& common, const std::string& weights_root, const std::string& out_dir) {
  const clim::RunConfig rc = resolve_config(common);
  const std::vector<clim::SequenceData<Scalar>> seqs = make_benchmark(rc);
  std::vector<clim::AblationRow> rows;
  for (const std::string& variant : clim::ablation_variant_names()) {
    clim::RunConfig vc = rc;
    vc.variant = variant;
    const std::string weights = weights_root.empty() ? "" : (fs::path(weights_root) / variant).string();
    clim::TrackModel<Scalar> model = build_model(vc, weights);
    const clim::OpeOutcome<Scalar> ope = clim::run_ope<Scalar>(seqs, clim::model_tracker_factory(model), common.jobs);
    rows.push_back({variant, ope.report.precision, ope.report.success.auc, 0, 0});
  }
  rows = clim::ablation_deltas(std::move(rows));
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "ablation.csv", clim::format_ablation_csv(rows));
  std::cout << clim::format_ablation_table(rows);
  return 0;
}

// Interpolation warm-up for the tracker's latent branch, driven through the
// model so padding/slicing matches deployment.
std::vector<double> train_latent_branch(clim::TrackModel<Scalar>& model, const clim::RunConfig& rc,
                                        const clim::TrainOptions& opt, clim::Rng& rng) {
  const int frame = (model.config().search_size + 7) / 8 * 8;
  const int n = std::max(opt.batch * 2, 8);
  const std::vector<clim::Triplet<Scalar>> data = clim::make_interp_triplets<Scalar>(n, frame, rng);
  clim::Sgd<Scalar> sgd(static_cast<Scalar>(opt.lr), static_cast<Scalar>(opt.momentum),
                        static_cast<Scalar>(opt.weight_decay));
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(opt.steps));
  for (int step = 0; step < opt.steps; ++step) {
    std::vector<clim::Tensor<Scalar>> preds, gts;
    for (int i = 0; i < opt.batch; ++i) {
      const clim::Triplet<Scalar>& t = data[(static_cast<std::size_t>(step) * opt.batch + i) % data.size()];
      preds.push_back(model.latent_frame(t.a, t.b));
      gts.push_back(t.mid);
    }
    clim::Tensor<Scalar> loss = clim::interframe_loss(preds, gts);
    const double v = static_cast<double>(loss.item());
    if (!std::isfinite(v))
      throw clim::NumericError("latent warm-up diverged at step " + std::to_string(step));
    curve.push_back(v);
    clim::backward(loss);
    sgd.set_lr(static_cast<Scalar>(opt.steps > 1 ? clim::log_decay_lr(opt.lr, opt.lr_end, step, opt.steps) : opt.lr));
    sgd.step_matching(model.params(), clim::step_latent_only);
  }
  (void)rc;
  return curve;
}

int cmd_train_toy(const Common& common, const std::string& phase, int steps_override, const std::string& weights,
                  const std::string& out_dir) {
  clim::RunConfig rc = resolve_config(common);
  if (steps_override >= 0) rc.steps = steps_override;
  clim::TrackModel<Scalar> model = build_model(rc, weights);
  const bool latent = model.config().use_latent;
  if ((phase == "interp" || phase == "joint") && !latent)
    throw clim::ConfigError("train-toy: phase '" + phase + "' needs a variant with the interpolation branch");

  clim::TrainOptions opt;
  opt.steps = rc.steps;
  opt.batch = rc.batch;
  opt.lr = rc.lr;
  opt.lr_end = rc.lr_end;
  opt.momentum = rc.momentum;
  opt.weight_decay = rc.weight_decay;

  clim::Rng data_rng(rc.seed ^ 0x9e3779b9u);
  fs::create_directories(out_dir);

  auto run_phase = [&](const std::string& name, std::vector<double> curve) {
    write_text(fs::path(out_dir) / ("loss_" + name + ".csv"), curve_csv(curve));
    if (!curve.empty())
      std::printf("%-8s %4zu steps  loss %.4f -> %.4f\n", name.c_str(), curve.size(), curve.front(), curve.back());
    else
      std::printf("%-8s skipped (0 steps)\n", name.c_str());
  };

  clim::SceneConfig base;
  base.frame_w = rc.frame_w;
  base.frame_h = rc.frame_h;

  if (latent && (phase == "interp" || phase == "all"))
    run_phase("interp", train_latent_branch(model, rc, opt, data_rng));
  if (phase == "tracker" || phase == "all") {
    const auto samples = clim::make_track_samples<Scalar>(model, base, std::max(opt.batch * 2, 8), data_rng);
    run_phase("tracker", clim::train_tracking(model, clim::step_tracker_only, samples, opt));
  }
  if (phase == "joint" || (phase == "all" && latent)) {
    const auto samples = clim::make_track_samples<Scalar>(model, base, std::max(opt.batch * 2, 8), data_rng);
    run_phase("joint", clim::train_tracking(model, clim::step_all, samples, opt));
  }

  clim::save_weight_dir(fs::path(out_dir) / "weights", model.params(), clim::serialize_run_config(rc));
  std::cout << "weights saved to " << (fs::path(out_dir) / "weights").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-benchmark toolkit for the latent-interpolation tracker"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config_path, "key=value run configuration file");
  app.add_option("--seed", common.seed, "override the configured seed");
  app.add_option("--jobs", common.jobs, "worker threads for sequence evaluation")->check(CLI::PositiveNumber);

  auto* sc_grad = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  std::string op = "all";
  sc_grad->add_option("--op", op, "registered check name, or 'all'");

  auto* sc_synth = app.add_subcommand("synth", "generate a synthetic benchmark set");
  std::string synth_out;
  sc_synth->add_option("--out", synth_out, "output directory")->required();

  auto* sc_track = app.add_subcommand("track", "track one sequence and write the trajectory");
  std::string track_seq, track_weights, track_out;
  sc_track->add_option("--seq", track_seq, "sequence directory")->required();
  sc_track->add_option("--weights", track_weights, "weight directory");
  sc_track->add_option("--out", track_out, "output directory")->required();

  auto* sc_eval = app.add_subcommand("eval", "score a saved trajectory against a sequence annotation");
  std::string eval_seq, eval_results, eval_out;
  sc_eval->add_option("--seq", eval_seq, "sequence directory")->required();
  sc_eval->add_option("--results", eval_results, "trajectory file")->required();
  sc_eval->add_option("--out", eval_out, "optional report directory");

  auto* sc_interp = app.add_subcommand("interp", "interpolate the latent frame between two images");
  std::string in_a, in_b, in_truth, interp_weights, interp_out;
  sc_interp->add_option("--a", in_a, "first frame (ppm)")->required();
  sc_interp->add_option("--b", in_b, "second frame (ppm)")->required();
  sc_interp->add_option("--truth", in_truth, "optional reference middle frame");
  sc_interp->add_option("--weights", interp_weights, "weight directory");
  sc_interp->add_option("--out", interp_out, "output image path")->required();

  auto* sc_sweep = app.add_subcommand("sweep-m", "sweep the crop-history interval on a benchmark set");
  std::string sweep_weights, sweep_out;
  sc_sweep->add_option("--weights", sweep_weights, "weight directory");
  sc_sweep->add_option("--out", sweep_out, "output directory")->required();

  auto* sc_abl = app.add_subcommand("ablation", "evaluate all component variants on one benchmark set");
  std::string abl_weights_root, abl_out;
  sc_abl->add_option("--weights-root", abl_weights_root, "directory with one weight dir per variant");
  sc_abl->add_option("--out", abl_out, "output directory")->required();

  auto* sc_train = app.add_subcommand("train-toy", "short deterministic training phases on generated data");
  std::string phase = "all";
  int steps_override = -1;
  std::string train_weights, train_out;
  sc_train->add_option("--phase", phase, "interp | tracker | joint | all")
      ->check(CLI::IsMember({"interp", "tracker", "joint", "all"}));
  sc_train->add_option("--steps", steps_override, "override configured step count");
  sc_train->add_option("--weights", train_weights, "warm-start weight directory");
  sc_train->add_option("--out", train_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sc_grad->parsed()) return cmd_gradcheck(common, op);
    if (sc_synth->parsed()) return cmd_synth(common, synth_out);
    if (sc_track->parsed()) return cmd_track(common, track_seq, track_weights, track_out);
    if (sc_eval->parsed()) return cmd_eval(eval_seq, eval_results, eval_out);
    if (sc_interp->parsed()) return cmd_interp(common, in_a, in_b, in_truth, interp_weights, interp_out);
    if (sc_sweep->parsed()) return cmd_sweep_m(common, sweep_weights, sweep_out);
    if (sc_abl->parsed()) return cmd_ablation(common, abl_weights_root, abl_out);
    if (sc_train->parsed()) return cmd_train_toy(common, phase, steps_override, train_weights, train_out);
  } catch (const clim::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const clim::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
