#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "anchorreg/errors.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

// Trajectory text format: one pose per line,
//   timestamp tx ty tz qx qy qz qw
// with 9 significant digits. Lines starting with '#' are comments.

inline std::string tum_line(double timestamp, const Pose& pose) {
  const Eigen::Quaterniond q = pose.rotation().quaternion();
  const Eigen::Vector3d& t = pose.translation();
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g",
                timestamp, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
  return std::string(buf);
}

inline void write_trajectory(const std::string& path, const std::vector<Pose>& poses,
                             const std::vector<double>* timestamps = nullptr) {
  if (timestamps && timestamps->size() != poses.size()) {
    throw DimensionMismatch("write_trajectory: timestamp count does not match pose count");
  }
  std::ofstream out(path);
  if (!out) throw IoError("write_trajectory: cannot open " + path);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const double ts = timestamps ? (*timestamps)[i] : static_cast<double>(i);
    out << tum_line(ts, poses[i]) << '\n';
  }
  if (!out) throw IoError("write_trajectory: write failed for " + path);
}

struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose pose;
};

inline std::vector<TrajectoryEntry> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_trajectory: cannot open " + path);
  std::vector<TrajectoryEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw IoError("read_trajectory: malformed line in " + path + ": " + line);
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    entries.push_back({ts, Pose(Rotation::from_quaternion(q), {tx, ty, tz})});
  }
  return entries;
}

}  // namespace anchorreg
