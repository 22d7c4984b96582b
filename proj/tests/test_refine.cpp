#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/anchor_refine.hpp"
#include "anchorreg/rng.hpp"

using namespace anchorreg;

namespace {

Intrinsics test_intrinsics() {
  Intrinsics k;
  k.fx = 90.0;
  k.fy = 90.0;
  k.cx = 47.5;
  k.cy = 47.5;
  k.width = 96;
  k.height = 96;
  return k;
}

struct Setup {
  std::vector<Pose> poses;
  std::vector<Eigen::Vector3d> world_points;
  AnchorSet anchors;
};

// Cameras on a small arc looking at a cloud of points around (0, 0, 2).
Setup exact_setup(Rng& rng, int frames, int count) {
  const Intrinsics k = test_intrinsics();
  Setup s;
  for (int f = 0; f < frames; ++f) {
    const double angle = 0.08 * (static_cast<double>(f) - 0.5 * (frames - 1));
    const Rotation r = Rotation::about_axis(Eigen::Vector3d(0.0, 1.0, 0.0), angle);
    s.poses.emplace_back(r, Eigen::Vector3d(0.4 * angle, 0.02 * f, 0.05 * angle));
  }
  for (int i = 0; i < count; ++i) {
    Eigen::Vector3d world;
    bool visible = true;
    do {
      world = Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                              rng.uniform(1.6, 2.4));
      visible = true;
      for (const Pose& pose : s.poses) {
        const Eigen::Vector3d cam = pose.inverse() * world;
        if (cam.z() < 0.5 || !k.contains(k.project(cam), 2.0)) {
          visible = false;
          break;
        }
      }
    } while (!visible);
    s.world_points.push_back(world);

    std::vector<int> cells(static_cast<std::size_t>(frames), 0);
    std::vector<Eigen::Vector2d> px;
    std::vector<Eigen::Vector3d> points;
    for (const Pose& pose : s.poses) {
      const Eigen::Vector3d cam = pose.inverse() * world;
      points.push_back(cam);
      px.push_back(k.project(cam));
    }
    s.anchors.universe_ids.push_back(i);
    s.anchors.cells.push_back(cells);
    s.anchors.px.push_back(px);
    s.anchors.points.push_back(points);
  }
  return s;
}

}  // namespace

TEST_CASE("noise-free anchors are a refinement fixed point", "[refine]") {
  Rng rng(111);
  const Setup s = exact_setup(rng, 5, 12);
  const AnchorSet refined = refine_anchors(s.anchors, s.poses, test_intrinsics());
  REQUIRE(refined.count() == 12);
  for (int a = 0; a < refined.count(); ++a) {
    for (int f = 0; f < 5; ++f) {
      REQUIRE((refined.px[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)] -
               s.anchors.px[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)])
                  .norm() < 1e-9);
    }
  }
}

TEST_CASE("a perturbed 3D estimate converges back to ground truth", "[refine]") {
  Rng rng(112);
  Setup s = exact_setup(rng, 5, 10);

  for (int a = 0; a < s.anchors.count(); ++a) {
    const Eigen::Vector3d offset = 0.02 * rng.unit3();
    for (int f = 0; f < 5; ++f) {
      // Shift the stored 3D estimate; the pixel observations stay exact.
      s.anchors.points[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)] =
          s.poses[static_cast<std::size_t>(f)].inverse() *
          (s.world_points[static_cast<std::size_t>(a)] + offset);
    }
  }

  const AnchorSet refined = refine_anchors(s.anchors, s.poses, test_intrinsics());
  REQUIRE(refined.count() == 10);
  for (int a = 0; a < refined.count(); ++a) {
    const Eigen::Vector3d world =
        s.poses[0] * refined.points[static_cast<std::size_t>(a)][0];
    REQUIRE((world - s.world_points[static_cast<std::size_t>(a)]).norm() < 1e-6);
  }
}

TEST_CASE("refinement never increases the reprojection error", "[refine]") {
  Rng rng(113);
  Setup s = exact_setup(rng, 4, 10);
  const Intrinsics k = test_intrinsics();

  // Perturb both the 3D estimates and the observations.
  for (int a = 0; a < s.anchors.count(); ++a) {
    const Eigen::Vector3d offset = 0.05 * rng.unit3();
    for (int f = 0; f < 4; ++f) {
      s.anchors.points[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)] =
          s.poses[static_cast<std::size_t>(f)].inverse() *
          (s.world_points[static_cast<std::size_t>(a)] + offset);
      s.anchors.px[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)] +=
          Eigen::Vector2d(rng.gaussian(), rng.gaussian());
    }
  }

  RefineOptions opt;
  opt.reproj_reject = 100.0;
  const AnchorSet refined = refine_anchors(s.anchors, s.poses, k, opt);
  REQUIRE(refined.count() == s.anchors.count());

  for (int a = 0; a < refined.count(); ++a) {
    Eigen::Vector3d init_world = Eigen::Vector3d::Zero();
    for (int f = 0; f < 4; ++f) {
      init_world += s.poses[static_cast<std::size_t>(f)] *
                    s.anchors.points[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
    }
    init_world /= 4.0;
    const Eigen::Vector3d final_world =
        s.poses[0] * refined.points[static_cast<std::size_t>(a)][0];

    double init_cost = 0.0;
    double final_cost = 0.0;
    for (int f = 0; f < 4; ++f) {
      const Pose inv = s.poses[static_cast<std::size_t>(f)].inverse();
      const Eigen::Vector2d obs =
          s.anchors.px[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
      init_cost += (k.project(inv * init_world) - obs).squaredNorm();
      final_cost += (k.project(inv * final_world) - obs).squaredNorm();
    }
    REQUIRE(final_cost <= init_cost + 1e-12);
  }
}

TEST_CASE("inconsistent observations are rejected", "[refine]") {
  Rng rng(114);
  Setup s = exact_setup(rng, 5, 12);

  // Scatter one anchor's observations so no 3D point can explain them.
  for (int f = 0; f < 5; ++f) {
    s.anchors.px[3][static_cast<std::size_t>(f)] +=
        Eigen::Vector2d(30.0 * (f % 2 == 0 ? 1.0 : -1.0), -25.0 * (f % 3 == 0 ? 1.0 : -1.0));
  }

  const AnchorSet refined = refine_anchors(s.anchors, s.poses, test_intrinsics());
  REQUIRE(refined.count() == 11);
  for (int a = 0; a < refined.count(); ++a) {
    REQUIRE(refined.universe_ids[static_cast<std::size_t>(a)] != 3);
  }
}

TEST_CASE("refinement enforces the anchor minimum", "[refine]") {
  Rng rng(115);
  const Setup s = exact_setup(rng, 4, 6);
  RefineOptions opt;
  opt.min_anchors = 7;
  REQUIRE_THROWS_AS(refine_anchors(s.anchors, s.poses, test_intrinsics(), opt),
                    InsufficientAnchors);
}
