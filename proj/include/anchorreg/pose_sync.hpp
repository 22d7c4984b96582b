#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/errors.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

// One relative-pose measurement: pose maps dst-frame coordinates into the
// src frame, so consistency with world-from-frame poses W reads
// pose = W_src^-1 * W_dst. Zero-weight measurements are ignored.
struct RelativePose {
  int src = -1;
  int dst = -1;
  Pose pose;
  double weight = 1.0;
};

namespace detail {

inline void validate_relative_poses(int frame_count, const std::vector<RelativePose>& edges) {
  if (frame_count < 1) throw DegenerateInput("synchronize_poses: frame count must be positive");
  for (const RelativePose& e : edges) {
    if (e.src < 0 || e.src >= frame_count || e.dst < 0 || e.dst >= frame_count) {
      throw DegenerateInput("synchronize_poses: frame index out of range");
    }
    if (e.src == e.dst) throw DegenerateInput("synchronize_poses: self pair");
    if (!std::isfinite(e.weight) || e.weight < 0.0) {
      throw DegenerateInput("synchronize_poses: weights must be finite and nonnegative");
    }
  }
}

// Maximum-weight spanning tree from frame 0 (Prim), composing measurements
// into initial world-from-frame poses. Throws when positive-weight edges do
// not connect every frame.
inline std::vector<Pose> spanning_tree_init(int frame_count,
                                            const std::vector<RelativePose>& edges) {
  std::vector<Pose> poses(static_cast<std::size_t>(frame_count));
  std::vector<bool> known(static_cast<std::size_t>(frame_count), false);
  known[0] = true;
  for (int added = 1; added < frame_count; ++added) {
    int best_edge = -1;
    int best_frame = -1;
    double best_weight = 0.0;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const RelativePose& e = edges[k];
      if (e.weight <= 0.0) continue;
      int fresh = -1;
      if (known[static_cast<std::size_t>(e.src)] && !known[static_cast<std::size_t>(e.dst)]) {
        fresh = e.dst;
      } else if (known[static_cast<std::size_t>(e.dst)] && !known[static_cast<std::size_t>(e.src)]) {
        fresh = e.src;
      } else {
        continue;
      }
      if (e.weight > best_weight) {
        best_weight = e.weight;
        best_edge = static_cast<int>(k);
        best_frame = fresh;
      }
    }
    if (best_edge < 0) {
      throw DisconnectedGraph("synchronize_poses: positive-weight pairs do not connect all frames");
    }
    const RelativePose& e = edges[static_cast<std::size_t>(best_edge)];
    if (best_frame == e.dst) {
      poses[static_cast<std::size_t>(e.dst)] = poses[static_cast<std::size_t>(e.src)] * e.pose;
    } else {
      poses[static_cast<std::size_t>(e.src)] =
          poses[static_cast<std::size_t>(e.dst)] * e.pose.inverse();
    }
    known[static_cast<std::size_t>(best_frame)] = true;
  }
  return poses;
}

}  // namespace detail

// One weighted synchronization sweep over all relative measurements, applied
// to spanning-tree initial estimates: every frame's rotation is re-estimated
// from its neighbors and re-projected to SO(3), then translations are
// re-averaged, then the gauge is fixed to frame 0 = identity. Consistent
// measurements are an exact fixed point.
inline std::vector<Pose> synchronize_poses(int frame_count,
                                           const std::vector<RelativePose>& edges) {
  detail::validate_relative_poses(frame_count, edges);
  const std::vector<Pose> init = detail::spanning_tree_init(frame_count, edges);
  if (frame_count == 1) return init;

  std::vector<Rotation> rotations(static_cast<std::size_t>(frame_count));
  {
    std::vector<Eigen::Matrix3d> acc(static_cast<std::size_t>(frame_count),
                                     Eigen::Matrix3d::Zero());
    for (const RelativePose& e : edges) {
      if (e.weight <= 0.0) continue;
      const Eigen::Matrix3d& r_src = init[static_cast<std::size_t>(e.src)].rotation().matrix();
      const Eigen::Matrix3d& r_dst = init[static_cast<std::size_t>(e.dst)].rotation().matrix();
      const Eigen::Matrix3d& r_rel = e.pose.rotation().matrix();
      acc[static_cast<std::size_t>(e.src)] += e.weight * r_dst * r_rel.transpose();
      acc[static_cast<std::size_t>(e.dst)] += e.weight * r_src * r_rel;
    }
    for (int f = 0; f < frame_count; ++f) {
      rotations[static_cast<std::size_t>(f)] = Rotation::project(acc[static_cast<std::size_t>(f)]);
    }
  }

  std::vector<Eigen::Vector3d> translations(static_cast<std::size_t>(frame_count));
  {
    std::vector<Eigen::Vector3d> acc(static_cast<std::size_t>(frame_count),
                                     Eigen::Vector3d::Zero());
    std::vector<double> total(static_cast<std::size_t>(frame_count), 0.0);
    for (const RelativePose& e : edges) {
      if (e.weight <= 0.0) continue;
      const Eigen::Vector3d& t_src = init[static_cast<std::size_t>(e.src)].translation();
      const Eigen::Vector3d& t_dst = init[static_cast<std::size_t>(e.dst)].translation();
      // pose = W_src^-1 W_dst gives t_dst = R_src t_rel + t_src.
      acc[static_cast<std::size_t>(e.src)] +=
          e.weight * (t_dst - rotations[static_cast<std::size_t>(e.src)] * e.pose.translation());
      acc[static_cast<std::size_t>(e.dst)] +=
          e.weight * (rotations[static_cast<std::size_t>(e.src)] * e.pose.translation() + t_src);
      total[static_cast<std::size_t>(e.src)] += e.weight;
      total[static_cast<std::size_t>(e.dst)] += e.weight;
    }
    for (int f = 0; f < frame_count; ++f) {
      translations[static_cast<std::size_t>(f)] = acc[static_cast<std::size_t>(f)] / total[static_cast<std::size_t>(f)];
    }
  }

  std::vector<Pose> out;
  out.reserve(static_cast<std::size_t>(frame_count));
  const Pose anchor = Pose(rotations[0], translations[0]).inverse();
  for (int f = 0; f < frame_count; ++f) {
    out.push_back(anchor * Pose(rotations[static_cast<std::size_t>(f)],
                                translations[static_cast<std::size_t>(f)]));
  }
  return out;
}

}  // namespace anchorreg
