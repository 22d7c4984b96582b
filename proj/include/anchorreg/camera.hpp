#pragma once

#include <Eigen/Core>

#include "anchorreg/errors.hpp"

namespace anchorreg {

// Pinhole camera with zero skew and no distortion. depth_scale converts
// stored 16-bit depth values to metres (value / depth_scale).
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double depth_scale = 1000.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw DegenerateInput("intrinsics: focal lengths must be positive");
    if (width < 1 || height < 1) throw DegenerateInput("intrinsics: image size must be positive");
    if (!(cx > 0.0) || cx >= width || !(cy > 0.0) || cy >= height) {
      throw DegenerateInput("intrinsics: principal point must lie inside the image");
    }
    if (!(depth_scale > 0.0)) throw DegenerateInput("intrinsics: depth_scale must be positive");
  }

  Eigen::Vector2d project(const Eigen::Vector3d& p) const {
    if (!(p.z() > 0.0)) throw DegenerateGeometry("project: point is not in front of the camera");
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }

  Eigen::Vector3d backproject(const Eigen::Vector2d& px, double depth) const {
    return {(px.x() - cx) / fx * depth, (px.y() - cy) / fy * depth, depth};
  }

  // Unit-depth ray through the pixel, in camera coordinates.
  Eigen::Vector3d ray(const Eigen::Vector2d& px) const { return backproject(px, 1.0); }

  bool contains(const Eigen::Vector2d& px, double margin = 0.0) const {
    return px.x() >= margin && px.x() <= width - 1 - margin && px.y() >= margin &&
           px.y() <= height - 1 - margin;
  }

  // Intrinsics after center-aligned resampling to a new resolution.
  Intrinsics scaled(int new_width, int new_height) const {
    if (new_width < 1 || new_height < 1) throw DegenerateInput("intrinsics: scaled size must be positive");
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    Intrinsics out = *this;
    out.fx = fx * sx;
    out.fy = fy * sy;
    out.cx = (cx + 0.5) * sx - 0.5;
    out.cy = (cy + 0.5) * sy - 0.5;
    out.width = new_width;
    out.height = new_height;
    return out;
  }
};

}  // namespace anchorreg
