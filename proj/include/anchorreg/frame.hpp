#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Core>

#include "anchorreg/camera.hpp"
#include "anchorreg/errors.hpp"
#include "anchorreg/image.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

// One RGB-D view. ground_truth, when present, is the world-from-camera pose.
struct Frame {
  int id = 0;
  ImageU8 rgb;
  ImageF depth;
  Intrinsics intrinsics;
  std::optional<Pose> ground_truth;

  void validate() const {
    intrinsics.validate();
    if (rgb.width != intrinsics.width || rgb.height != intrinsics.height) {
      throw DimensionMismatch("frame: color image size does not match intrinsics");
    }
    if (depth.width != intrinsics.width || depth.height != intrinsics.height) {
      throw DimensionMismatch("frame: depth image size does not match intrinsics");
    }
  }

  // Nearest-pixel depth in metres; 0 for invalid or out-of-bounds lookups.
  double depth_at(const Eigen::Vector2d& px) const {
    const int x = static_cast<int>(std::lround(px.x()));
    const int y = static_cast<int>(std::lround(px.y()));
    if (x < 0 || x >= depth.width || y < 0 || y >= depth.height) return 0.0;
    return depth.at(x, y);
  }

  bool depth_valid(const Eigen::Vector2d& px) const { return depth_at(px) > 0.0; }
};

// Lifts a pixel into camera coordinates using the frame's own depth map.
inline Eigen::Vector3d backproject(const Frame& frame, const Eigen::Vector2d& px) {
  const double d = frame.depth_at(px);
  if (!(d > 0.0)) throw InvalidDepth("backproject: no valid depth at the requested pixel");
  return frame.intrinsics.backproject(px, d);
}

// Resamples color, depth, and intrinsics together.
inline Frame resample(const Frame& frame, int target_width, int target_height) {
  Frame out;
  out.id = frame.id;
  out.rgb = resize_bilinear(frame.rgb, target_width, target_height);
  out.depth = resize_nearest(frame.depth, target_width, target_height);
  out.intrinsics = frame.intrinsics.scaled(target_width, target_height);
  out.ground_truth = frame.ground_truth;
  return out;
}

}  // namespace anchorreg
