#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "anchorreg/errors.hpp"
#include "anchorreg/frame.hpp"
#include "anchorreg/trajectory_io.hpp"

namespace anchorreg {

struct ClipLoadOptions {
  int frame_count = 0;   // 0 = every frame the stride selects
  int frame_stride = 1;  // sampling stride over the stored sequence
  int target_width = 0;  // 0 = keep native resolution
  int target_height = 0;
};

namespace detail {

inline std::string frame_file_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", id);
  return buf;
}

// Picks frame positions 0, s, 2s, ... When the sequence is too short for
// the requested stride, the stride shrinks to the largest feasible value;
// when it is shorter than the requested count, every frame is used.
inline std::vector<std::size_t> select_frames(std::size_t available, int count, int stride) {
  if (stride < 1) throw DegenerateInput("load_clip: frame_stride must be at least 1");
  if (count < 0) throw DegenerateInput("load_clip: frame_count must be non-negative");
  std::vector<std::size_t> picks;
  if (available == 0) return picks;
  if (count == 0) {
    for (std::size_t i = 0; i < available; i += static_cast<std::size_t>(stride)) picks.push_back(i);
    return picks;
  }
  const std::size_t want = static_cast<std::size_t>(count);
  if (available <= want) {
    for (std::size_t i = 0; i < available; ++i) picks.push_back(i);
    return picks;
  }
  std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t max_s = (available - 1) / (want - 1 == 0 ? 1 : want - 1);
  s = std::min(s, std::max<std::size_t>(1, max_s));
  for (std::size_t k = 0; k < want; ++k) picks.push_back(k * s);
  return picks;
}

}  // namespace detail

inline void write_intrinsics(const std::string& path, const Intrinsics& k) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %d %d %.9g", k.fx, k.fy, k.cx, k.cy,
                k.width, k.height, k.depth_scale);
  out << buf << "\n";
  if (!out) throw IoError("failed while writing " + path);
}

inline Intrinsics read_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Intrinsics k;
    if (!(ss >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale)) {
      throw IoError("malformed intrinsics line in " + path);
    }
    k.validate();
    return k;
  }
  throw IoError("no intrinsics line in " + path);
}

// Writes color/NNNNNN.png, depth/NNNNNN.png, intrinsics.txt, and (when every
// frame carries one) groundtruth.txt with frame ids as timestamps.
inline void save_clip(const std::string& dir, const std::vector<Frame>& frames) {
  if (frames.empty()) throw DegenerateInput("save_clip: no frames");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "color", ec);
  fs::create_directories(fs::path(dir) / "depth", ec);
  if (ec) throw IoError("cannot create clip directories under " + dir);

  const Intrinsics& k = frames.front().intrinsics;
  bool all_gt = true;
  for (const Frame& f : frames) {
    f.validate();
    if (f.intrinsics.width != k.width || f.intrinsics.height != k.height ||
        f.intrinsics.fx != k.fx || f.intrinsics.fy != k.fy || f.intrinsics.cx != k.cx ||
        f.intrinsics.cy != k.cy || f.intrinsics.depth_scale != k.depth_scale) {
      throw DimensionMismatch("save_clip: frames must share one set of intrinsics");
    }
    all_gt = all_gt && f.ground_truth.has_value();
  }
  write_intrinsics((fs::path(dir) / "intrinsics.txt").string(), k);
  for (const Frame& f : frames) {
    const std::string name = detail::frame_file_name(f.id);
    write_png_rgb8((fs::path(dir) / "color" / name).string(), f.rgb);
    write_png_depth16((fs::path(dir) / "depth" / name).string(), f.depth, k.depth_scale);
  }
  if (all_gt) {
    std::vector<Pose> poses;
    std::vector<double> stamps;
    for (const Frame& f : frames) {
      poses.push_back(*f.ground_truth);
      stamps.push_back(static_cast<double>(f.id));
    }
    write_trajectory((fs::path(dir) / "groundtruth.txt").string(), poses, &stamps);
  }
}

inline std::vector<Frame> load_clip(const std::string& dir, const ClipLoadOptions& opt = {}) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::is_directory(root / "color")) throw IoError("missing color directory in " + dir);
  if (!fs::is_directory(root / "depth")) throw IoError("missing depth directory in " + dir);
  const Intrinsics k = read_intrinsics((root / "intrinsics.txt").string());

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root / "color")) {
    if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("no color frames in " + dir);

  std::vector<TrajectoryEntry> gt;
  if (fs::exists(root / "groundtruth.txt")) {
    gt = read_trajectory((root / "groundtruth.txt").string());
  }

  const std::vector<std::size_t> picks =
      detail::select_frames(names.size(), opt.frame_count, opt.frame_stride);
  std::vector<Frame> frames;
  frames.reserve(picks.size());
  for (const std::size_t idx : picks) {
    const std::string& name = names[idx];
    Frame f;
    f.id = std::atoi(name.c_str());
    f.rgb = read_png_rgb8((root / "color" / name).string());
    const fs::path depth_path = root / "depth" / name;
    if (!fs::exists(depth_path)) throw IoError("missing depth frame " + depth_path.string());
    f.depth = read_png_depth16(depth_path.string(), k.depth_scale);
    f.intrinsics = k;
    for (const TrajectoryEntry& e : gt) {
      if (std::lround(e.timestamp) == f.id) {
        f.ground_truth = e.pose;
        break;
      }
    }
    if (opt.target_width > 0 && opt.target_height > 0) {
      f = resample(f, opt.target_width, opt.target_height);
    }
    f.validate();
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace anchorreg
