#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/camera.hpp"
#include "anchorreg/errors.hpp"
#include "anchorreg/match_sync.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

struct RefineOptions {
  int max_steps = 10;
  double step_tol = 1e-8;
  int max_halvings = 8;
  double damping = 1e-12;
  double reproj_reject = 4.0;  // pixels, mean over frames
  int min_anchors = 8;
};

namespace detail {

// Total squared reprojection error of a world point against one anchor's
// observations; nullopt when the point leaves any camera's forward half-space.
inline std::optional<double> reprojection_cost(const Eigen::Vector3d& world,
                                               const std::vector<Pose>& poses,
                                               const Intrinsics& intr,
                                               const std::vector<Eigen::Vector2d>& observed) {
  double cost = 0.0;
  for (std::size_t f = 0; f < poses.size(); ++f) {
    const Eigen::Vector3d cam = poses[f].inverse() * world;
    if (cam.z() <= 1e-6) return std::nullopt;
    cost += (intr.project(cam) - observed[f]).squaredNorm();
  }
  return cost;
}

}  // namespace detail

// Per-anchor Gauss-Newton on the world-space point minimizing the summed
// reprojection error over all frames, with backtracking so the error never
// increases. Anchors whose final mean pixel error exceeds reproj_reject are
// dropped; the survivors get re-projected 2D locations and 3D points.
inline AnchorSet refine_anchors(const AnchorSet& anchors, const std::vector<Pose>& poses,
                                const Intrinsics& intr, const RefineOptions& opt = {}) {
  if (anchors.count() > 0 &&
      static_cast<int>(poses.size()) != anchors.frame_count()) {
    throw DimensionMismatch("refine_anchors: pose count does not match the anchors");
  }
  const int frame_count = static_cast<int>(poses.size());

  AnchorSet out;
  for (int a = 0; a < anchors.count(); ++a) {
    const std::vector<Eigen::Vector2d>& observed = anchors.px[static_cast<std::size_t>(a)];

    Eigen::Vector3d world = Eigen::Vector3d::Zero();
    for (int f = 0; f < frame_count; ++f) {
      world += poses[static_cast<std::size_t>(f)] *
               anchors.points[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
    }
    world /= static_cast<double>(frame_count);

    std::optional<double> cost = detail::reprojection_cost(world, poses, intr, observed);
    if (!cost) continue;

    for (int step = 0; step < opt.max_steps; ++step) {
      Eigen::Matrix3d hessian = opt.damping * Eigen::Matrix3d::Identity();
      Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
      for (int f = 0; f < frame_count; ++f) {
        const Pose inv = poses[static_cast<std::size_t>(f)].inverse();
        const Eigen::Vector3d cam = inv * world;
        const Eigen::Vector2d residual =
            intr.project(cam) - observed[static_cast<std::size_t>(f)];
        Eigen::Matrix<double, 2, 3> dpx;
        dpx << intr.fx / cam.z(), 0.0, -intr.fx * cam.x() / (cam.z() * cam.z()), 0.0,
            intr.fy / cam.z(), -intr.fy * cam.y() / (cam.z() * cam.z());
        const Eigen::Matrix<double, 2, 3> jac = dpx * inv.rotation().matrix();
        hessian += jac.transpose() * jac;
        gradient += jac.transpose() * residual;
      }
      Eigen::Vector3d delta = hessian.ldlt().solve(-gradient);

      bool accepted = false;
      for (int halving = 0; halving <= opt.max_halvings; ++halving) {
        const Eigen::Vector3d candidate = world + delta;
        const std::optional<double> next =
            detail::reprojection_cost(candidate, poses, intr, observed);
        if (next && *next <= *cost) {
          world = candidate;
          cost = next;
          accepted = true;
          break;
        }
        delta *= 0.5;
      }
      if (!accepted || delta.norm() < opt.step_tol) break;
    }

    const double mean_px_error = [&] {
      double sum = 0.0;
      for (int f = 0; f < frame_count; ++f) {
        const Eigen::Vector3d cam = poses[static_cast<std::size_t>(f)].inverse() * world;
        sum += (intr.project(cam) - observed[static_cast<std::size_t>(f)]).norm();
      }
      return sum / static_cast<double>(frame_count);
    }();
    if (mean_px_error > opt.reproj_reject) continue;

    std::vector<Eigen::Vector2d> px(static_cast<std::size_t>(frame_count));
    std::vector<Eigen::Vector3d> points(static_cast<std::size_t>(frame_count));
    for (int f = 0; f < frame_count; ++f) {
      points[static_cast<std::size_t>(f)] = poses[static_cast<std::size_t>(f)].inverse() * world;
      px[static_cast<std::size_t>(f)] = intr.project(points[static_cast<std::size_t>(f)]);
    }
    out.universe_ids.push_back(anchors.universe_ids[static_cast<std::size_t>(a)]);
    out.cells.push_back(anchors.cells[static_cast<std::size_t>(a)]);
    out.px.push_back(std::move(px));
    out.points.push_back(std::move(points));
  }

  if (out.count() < opt.min_anchors) {
    throw InsufficientAnchors("refine_anchors: fewer than min_anchors anchors survive refinement");
  }
  return out;
}

}  // namespace anchorreg
