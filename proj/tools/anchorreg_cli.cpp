#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anchorreg/clip_io.hpp"
#include "anchorreg/config.hpp"
#include "anchorreg/evaluate.hpp"
#include "anchorreg/pipeline.hpp"
#include "anchorreg/synthetic.hpp"
#include "anchorreg/thread_pool.hpp"
#include "anchorreg/trajectory_io.hpp"

namespace {

using namespace anchorreg;

struct RunFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  int threads = 0;  // 0 = all available cores
  std::string descriptor;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config_file, "pipeline configuration file");
  cmd->add_option("--seed", flags.seed, "override the configured random seed");
  cmd->add_option("--threads", flags.threads, "worker thread count (0 = all cores)");
  cmd->add_option("--descriptor", flags.descriptor, "descriptor provider")
      ->check(CLI::IsMember({"patch", "oracle"}));
}

PipelineConfig resolve_config(const RunFlags& flags) {
  PipelineConfig cfg;
  if (!flags.config_file.empty()) cfg = load_config(flags.config_file);
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.descriptor.empty()) cfg.descriptor = flags.descriptor;
  cfg.validate();
  return cfg;
}

struct LoadedClip {
  std::vector<Frame> frames;
  std::optional<SyntheticScene> scene;
  std::string name;
};

LoadedClip load_registration_input(const std::string& clip_dir, const PipelineConfig& cfg) {
  LoadedClip clip;
  ClipLoadOptions opt;
  opt.frame_count = cfg.frame_count;
  opt.frame_stride = cfg.frame_stride;
  if (cfg.target_size > 0) {
    opt.target_width = cfg.target_size;
    opt.target_height = cfg.target_size;
  }
  clip.frames = load_clip(clip_dir, opt);
  if (cfg.descriptor == "oracle") clip.scene = load_scene(clip_dir);
  clip.name = std::filesystem::path(clip_dir).filename().string();
  if (clip.name.empty()) clip.name = clip_dir;
  return clip;
}

std::vector<double> frame_timestamps(const std::vector<Frame>& frames) {
  std::vector<double> stamps;
  for (const Frame& f : frames) stamps.push_back(static_cast<double>(f.id));
  return stamps;
}

// Ground truth for evaluation, present only when every frame carries a pose.
std::optional<std::vector<Pose>> clip_ground_truth(const std::vector<Frame>& frames) {
  std::vector<Pose> truth;
  for (const Frame& f : frames) {
    if (!f.ground_truth) return std::nullopt;
    truth.push_back(*f.ground_truth);
  }
  return truth;
}

int run_synth(const std::string& out_dir, std::uint64_t seed, const SceneOptions& opt) {
  generate_scene(seed, opt, out_dir);
  std::printf("wrote %d-frame %s clip to %s\n", opt.frame_count, opt.mode.c_str(),
              out_dir.c_str());
  return 0;
}

int run_register(const std::string& clip_dir, const std::string& out_dir,
                 const RunFlags& flags) {
  const PipelineConfig cfg = resolve_config(flags);
  const LoadedClip clip = load_registration_input(clip_dir, cfg);
  ThreadPool pool(flags.threads);
  StageTimers timers;
  const ClipState state =
      register_clip(clip.frames, cfg, &pool, clip.scene ? &*clip.scene : nullptr, &timers);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir);
  const std::vector<double> stamps = frame_timestamps(clip.frames);
  write_trajectory((fs::path(out_dir) / "trajectory.txt").string(), state.poses, &stamps);
  write_matches((fs::path(out_dir) / "matches.json").string(), state.matches);

  if (const auto truth = clip_ground_truth(clip.frames)) {
    EvalReport report =
        evaluate(state.poses, state.matches, *truth, clip.frames.front().intrinsics);
    report.clip = clip.name;
    write_report_csv((fs::path(out_dir) / "report.csv").string(), {report});
    write_report_json((fs::path(out_dir) / "report.json").string(), report);
    std::printf("%s\n%s\n", report_csv_header().c_str(), report_csv_row(report).c_str());
  } else {
    std::fprintf(stderr, "no ground truth in %s; skipping the evaluation report\n",
                 clip_dir.c_str());
  }
  std::printf("registered %zu frames in %.3f s; outputs in %s\n", clip.frames.size(),
              timers.total(), out_dir.c_str());
  return 0;
}

int run_eval(const std::string& est_path, const std::string& gt_path,
             const std::string& dump_path, const std::string& clip_dir,
             const std::string& csv_path, const std::string& json_path,
             const std::string& name) {
  std::vector<Pose> est, truth;
  for (const TrajectoryEntry& e : read_trajectory(est_path)) est.push_back(e.pose);
  for (const TrajectoryEntry& e : read_trajectory(gt_path)) truth.push_back(e.pose);

  std::vector<PairMatches> matches;
  Intrinsics intrinsics;
  if (!dump_path.empty()) {
    if (clip_dir.empty()) {
      throw DegenerateInput("eval: --dump needs --clip to recover depth and intrinsics");
    }
    const std::vector<Frame> frames = load_clip(clip_dir);
    matches = read_matches(dump_path, frames);
    intrinsics = frames.front().intrinsics;
  }

  EvalReport report = evaluate(est, matches, truth, intrinsics);
  report.clip = name;
  std::printf("%s\n%s\n", report_csv_header().c_str(), report_csv_row(report).c_str());
  if (!csv_path.empty()) write_report_csv(csv_path, {report});
  if (!json_path.empty()) write_report_json(json_path, report);
  return 0;
}

int run_bench(std::string clip_dir, const RunFlags& flags) {
  RunFlags effective = flags;
  std::filesystem::path scratch;
  if (clip_dir.empty()) {
    scratch = std::filesystem::temp_directory_path() / "anchorreg_bench_clip";
    SceneOptions opt;
    generate_scene(effective.seed.value_or(7), opt, scratch.string());
    clip_dir = scratch.string();
    if (effective.descriptor.empty()) effective.descriptor = "oracle";
    std::fprintf(stderr, "no clip given; benchmarking a synthetic one at %s\n",
                 clip_dir.c_str());
  }

  const PipelineConfig cfg = resolve_config(effective);
  const LoadedClip clip = load_registration_input(clip_dir, cfg);
  ThreadPool pool(effective.threads);
  StageTimers timers;
  const auto start = std::chrono::steady_clock::now();
  const ClipState state =
      register_clip(clip.frames, cfg, &pool, clip.scene ? &*clip.scene : nullptr, &timers);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();

  std::printf("%-16s %10s\n", "stage", "seconds");
  double accounted = 0.0;
  for (const auto& [name, seconds] : timers.stages) {
    std::printf("%-16s %10.4f\n", name.c_str(), seconds);
    accounted += seconds;
  }
  std::printf("%-16s %10.4f\n", "other", wall - accounted);
  std::printf("%-16s %10.4f\n", "total", wall);
  std::printf("final loss %.6g over %zu pairs\n", state.loss_history.back(),
              state.matches.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchor-point multi-view RGB-D registration"};
  app.require_subcommand(1);

  // synth
  std::string synth_dir;
  std::uint64_t synth_seed = 7;
  SceneOptions scene_opt;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic clip with ground truth");
  synth->add_option("out_dir", synth_dir, "clip directory to create")->required();
  synth->add_option("--seed", synth_seed, "scene seed");
  synth->add_option("--mode", scene_opt.mode, "camera layout")
      ->check(CLI::IsMember({"lattice", "orbit"}));
  synth->add_option("--frames", scene_opt.frame_count, "frame count");
  synth->add_option("--landmarks", scene_opt.landmark_count, "landmark count");
  synth->add_option("--image-size", scene_opt.image_size, "square image size in pixels");
  synth->add_option("--depth-sigma", scene_opt.noise.depth_sigma, "depth noise in metres");
  synth->add_option("--descriptor-sigma", scene_opt.noise.descriptor_sigma,
                    "oracle descriptor noise scale");
  synth->add_option("--outlier-fraction", scene_opt.noise.outlier_fraction,
                    "fraction of corrupted landmark observations");

  // register
  std::string reg_clip, reg_out = ".";
  RunFlags reg_flags;
  CLI::App* reg = app.add_subcommand("register", "register a clip and write results");
  reg->add_option("clip", reg_clip, "clip directory")->required();
  reg->add_option("--out", reg_out, "output directory");
  add_run_flags(reg, reg_flags);

  // eval
  std::string eval_est, eval_gt, eval_dump, eval_clip, eval_csv, eval_json,
      eval_name = "clip";
  CLI::App* eval = app.add_subcommand("eval", "score a trajectory against ground truth");
  eval->add_option("estimate", eval_est, "estimated trajectory")->required();
  eval->add_option("truth", eval_gt, "ground-truth trajectory")->required();
  eval->add_option("--dump", eval_dump, "correspondence dump for inlier metrics");
  eval->add_option("--clip", eval_clip, "clip directory backing the dump");
  eval->add_option("--csv", eval_csv, "write the report row to this CSV file");
  eval->add_option("--json", eval_json, "write the full per-pair report here");
  eval->add_option("--name", eval_name, "clip label in the report");

  // bench
  std::string bench_clip;
  RunFlags bench_flags;
  CLI::App* bench = app.add_subcommand("bench", "time the registration stages");
  bench->add_option("clip", bench_clip, "clip directory (default: synthesize one)");
  add_run_flags(bench, bench_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(synth_dir, synth_seed, scene_opt);
    if (reg->parsed()) return run_register(reg_clip, reg_out, reg_flags);
    if (eval->parsed()) {
      return run_eval(eval_est, eval_gt, eval_dump, eval_clip, eval_csv, eval_json, eval_name);
    }
    if (bench->parsed()) return run_bench(bench_clip, bench_flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "anchorreg: %s\n", e.what());
    return 1;
  }
  return 0;
}
