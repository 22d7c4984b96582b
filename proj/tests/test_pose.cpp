#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/gru.hpp"
#include "anchorreg/kabsch.hpp"
#include "anchorreg/pose_sync.hpp"
#include "anchorreg/rng.hpp"
#include "anchorreg/se3.hpp"

using namespace anchorreg;

namespace {

Pose random_pose(Rng& rng, double max_trans = 1.0) {
  return Pose(Rotation::project(rng.rotation()), max_trans * rng.gaussian3());
}

WeightedCorrespondences3D exact_correspondences(Rng& rng, const Pose& pose, int n,
                                                double noise_sigma = 0.0) {
  WeightedCorrespondences3D corr;
  for (int i = 0; i < n; ++i) {
    WeightedCorrespondence3D c;
    c.source = rng.gaussian3();
    c.target = pose * c.source + noise_sigma * rng.gaussian3();
    corr.push_back(c);
  }
  return corr;
}

std::vector<RelativePose> all_pairs(const std::vector<Pose>& poses) {
  std::vector<RelativePose> edges;
  const int n = static_cast<int>(poses.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      RelativePose e;
      e.src = i;
      e.dst = j;
      e.pose = poses[static_cast<std::size_t>(i)].inverse() * poses[static_cast<std::size_t>(j)];
      edges.push_back(e);
    }
  }
  return edges;
}

}  // namespace

TEST_CASE("rigid alignment recovers exact transforms", "[pose]") {
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose truth = random_pose(rng);
    WeightedCorrespondences3D corr = exact_correspondences(rng, truth, 10);
    for (WeightedCorrespondence3D& c : corr) c.weight = rng.uniform(0.1, 2.0);
    const Pose est = weighted_kabsch(corr);
    REQUIRE(angular_error_deg(est.rotation(), truth.rotation()) < 1e-9);
    REQUIRE((est.translation() - truth.translation()).norm() < 1e-9);
  }
}

TEST_CASE("zero-weight outliers do not move the alignment", "[pose]") {
  Rng rng(52);
  const Pose truth = random_pose(rng);
  WeightedCorrespondences3D corr = exact_correspondences(rng, truth, 8);
  const Pose clean = weighted_kabsch(corr);

  WeightedCorrespondence3D outlier;
  outlier.source = Eigen::Vector3d(100.0, -50.0, 30.0);
  outlier.target = Eigen::Vector3d(-400.0, 9.0, 1.0);
  outlier.weight = 0.0;
  corr.push_back(outlier);
  const Pose with_outlier = weighted_kabsch(corr);

  REQUIRE(angular_error_deg(clean.rotation(), with_outlier.rotation()) < 1e-12);
  REQUIRE((clean.translation() - with_outlier.translation()).norm() < 1e-12);
}

TEST_CASE("alignment stays accurate under millimetre noise", "[pose]") {
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose truth = random_pose(rng);
    const WeightedCorrespondences3D corr = exact_correspondences(rng, truth, 10, 1e-3);
    const Pose est = weighted_kabsch(corr);
    REQUIRE(angular_error_deg(est.rotation(), truth.rotation()) < 0.2);
    REQUIRE((est.translation() - truth.translation()).norm() < 5e-3);
  }
}

TEST_CASE("planar correspondences are not degenerate", "[pose]") {
  Rng rng(54);
  const Pose truth = random_pose(rng);
  WeightedCorrespondences3D corr;
  for (int i = 0; i < 12; ++i) {
    WeightedCorrespondence3D c;
    c.source = Eigen::Vector3d(rng.gaussian(), rng.gaussian(), 2.0);
    c.target = truth * c.source;
    corr.push_back(c);
  }
  const Pose est = weighted_kabsch(corr);
  REQUIRE(angular_error_deg(est.rotation(), truth.rotation()) < 1e-9);
  REQUIRE((est.translation() - truth.translation()).norm() < 1e-9);
}

TEST_CASE("alignment rejects degenerate problems", "[pose]") {
  Rng rng(55);
  const Pose truth = random_pose(rng);

  WeightedCorrespondences3D line;
  for (int i = 0; i < 10; ++i) {
    WeightedCorrespondence3D c;
    c.source = static_cast<double>(i) * Eigen::Vector3d(1.0, 2.0, -1.0);
    c.target = truth * c.source;
    line.push_back(c);
  }
  REQUIRE_THROWS_AS(weighted_kabsch(line), DegenerateConfiguration);

  WeightedCorrespondences3D two = exact_correspondences(rng, truth, 2);
  REQUIRE_THROWS_AS(weighted_kabsch(two), DegenerateConfiguration);

  WeightedCorrespondences3D zeroed = exact_correspondences(rng, truth, 5);
  for (WeightedCorrespondence3D& c : zeroed) c.weight = 0.0;
  REQUIRE_THROWS_AS(weighted_kabsch(zeroed), AllZeroWeights);

  WeightedCorrespondences3D negative = exact_correspondences(rng, truth, 5);
  negative[2].weight = -0.5;
  REQUIRE_THROWS_AS(weighted_kabsch(negative), DegenerateInput);
}

TEST_CASE("alignment is equivariant under rotation of both point sets", "[pose]") {
  Rng rng(56);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose truth = random_pose(rng);
    WeightedCorrespondences3D corr = exact_correspondences(rng, truth, 9, 1e-2);
    for (WeightedCorrespondence3D& c : corr) c.weight = rng.uniform(0.5, 1.5);
    const Pose est = weighted_kabsch(corr);

    const Pose q(Rotation::project(rng.rotation()), Eigen::Vector3d::Zero());
    WeightedCorrespondences3D rotated = corr;
    for (WeightedCorrespondence3D& c : rotated) {
      c.source = q * c.source;
      c.target = q * c.target;
    }
    const Pose conjugated = q * est * q.inverse();
    const Pose est_rotated = weighted_kabsch(rotated);
    REQUIRE(angular_error_deg(est_rotated.rotation(), conjugated.rotation()) < 1e-9);
    REQUIRE((est_rotated.translation() - conjugated.translation()).norm() < 1e-9);
  }
}

TEST_CASE("alignment beats random perturbations of itself", "[pose]") {
  Rng rng(57);
  const Pose truth = random_pose(rng);
  const WeightedCorrespondences3D corr = exact_correspondences(rng, truth, 12, 5e-2);
  const Pose est = weighted_kabsch(corr);
  const double best = alignment_objective(corr, est);
  for (int i = 0; i < 1000; ++i) {
    PoseDelta6D delta;
    delta.rot6d << 1.0 + 0.1 * rng.gaussian(), 0.1 * rng.gaussian(), 0.1 * rng.gaussian(),
        0.1 * rng.gaussian(), 1.0 + 0.1 * rng.gaussian(), 0.1 * rng.gaussian();
    delta.trans = 0.05 * rng.gaussian3();
    REQUIRE(alignment_objective(corr, retract(est, delta)) >= best - 1e-12);
  }
}

TEST_CASE("gru carries the hidden state through a saturated update gate", "[pose]") {
  GruState state = GruState::seeded(16, 12, 71);
  state.b_z = Eigen::VectorXd::Constant(16, 50.0);
  Rng rng(72);
  state.hidden = rng.gaussian_vector(16);
  const Eigen::VectorXd before = state.hidden;
  gru_step(state, rng.gaussian_vector(12));
  REQUIRE((state.hidden - before).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("gru with zero weights matches the hand-evaluated cell", "[pose]") {
  GruState state = GruState::zeros(2, 3);
  state.hidden << 0.8, -0.4;
  const PoseDelta6D delta = gru_step(state, Eigen::Vector3d(1.0, 2.0, 3.0));

  // All gate pre-activations are zero: z = r = 1/2, candidate = tanh(0) = 0,
  // so the new hidden is half the old one.
  REQUIRE(state.hidden[0] == Catch::Approx(0.4).margin(1e-15));
  REQUIRE(state.hidden[1] == Catch::Approx(-0.2).margin(1e-15));

  // The zero output head emits the identity delta.
  REQUIRE(decode_6d(delta.rot6d).matrix().isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  REQUIRE(delta.trans.norm() == 0.0);
}

TEST_CASE("fresh gru cells are no-op updaters regardless of seed", "[pose]") {
  Rng rng(73);
  for (std::uint64_t seed : {1ULL, 99ULL, 123456ULL}) {
    GruState state = GruState::seeded(8, 12, seed);
    Pose pose = random_pose(rng);
    for (int step = 0; step < 5; ++step) {
      const PoseDelta6D delta = gru_step(state, rng.gaussian_vector(12));
      const Pose updated = retract(pose, delta);
      REQUIRE(angular_error_deg(updated.rotation(), pose.rotation()) < 1e-12);
      REQUIRE((updated.translation() - pose.translation()).norm() < 1e-12);
      pose = updated;
    }
  }
}

TEST_CASE("gru hidden state stays bounded", "[pose]") {
  GruState state = GruState::seeded(16, 12, 74);
  Rng rng(75);
  for (int step = 0; step < 100; ++step) {
    gru_step(state, rng.gaussian_vector(12, 3.0));
    REQUIRE(state.hidden.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("gru validates dimensions", "[pose]") {
  GruState state = GruState::seeded(4, 6, 76);
  REQUIRE_THROWS_AS(gru_step(state, Eigen::VectorXd::Zero(5)), DimensionMismatch);
  state.w_r = Eigen::MatrixXd::Zero(4, 11);
  REQUIRE_THROWS_AS(gru_step(state, Eigen::VectorXd::Zero(6)), DimensionMismatch);
  REQUIRE_THROWS_AS(GruState::zeros(0, 3), DegenerateInput);
}

TEST_CASE("pose synchronization is exact for consistent measurements", "[pose]") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Pose> truth = {Pose::identity()};
    for (int f = 1; f < 6; ++f) truth.push_back(random_pose(rng));
    const std::vector<Pose> est = synchronize_poses(6, all_pairs(truth));
    for (int f = 0; f < 6; ++f) {
      REQUIRE(angular_error_deg(est[static_cast<std::size_t>(f)].rotation(),
                                truth[static_cast<std::size_t>(f)].rotation()) < 1e-8);
      REQUIRE((est[static_cast<std::size_t>(f)].translation() -
               truth[static_cast<std::size_t>(f)].translation())
                  .norm() < 1e-8);
    }
  }
}

TEST_CASE("zero-weight pairs cannot disturb the synchronization", "[pose]") {
  Rng rng(78);
  std::vector<Pose> truth = {Pose::identity()};
  for (int f = 1; f < 6; ++f) truth.push_back(random_pose(rng));
  std::vector<RelativePose> edges = all_pairs(truth);

  const double five_deg = 5.0 * std::numbers::pi / 180.0;
  edges[3].pose = Pose(Rotation::project(rng.rotation_with_angle(five_deg)),
                       Eigen::Vector3d(0.3, -0.1, 0.2)) *
                  edges[3].pose;
  edges[3].weight = 0.0;

  const std::vector<Pose> est = synchronize_poses(6, edges);
  for (int f = 0; f < 6; ++f) {
    REQUIRE(angular_error_deg(est[static_cast<std::size_t>(f)].rotation(),
                              truth[static_cast<std::size_t>(f)].rotation()) < 1e-8);
    REQUIRE((est[static_cast<std::size_t>(f)].translation() -
             truth[static_cast<std::size_t>(f)].translation())
                .norm() < 1e-8);
  }
}

TEST_CASE("synchronization averages down pairwise rotation noise", "[pose]") {
  Rng rng(79);
  const double two_deg = 2.0 * std::numbers::pi / 180.0;
  int improved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Pose> truth = {Pose::identity()};
    for (int f = 1; f < 6; ++f) truth.push_back(random_pose(rng));
    std::vector<RelativePose> edges = all_pairs(truth);

    double input_error = 0.0;
    for (RelativePose& e : edges) {
      const Pose noise(Rotation::project(rng.rotation_with_angle(two_deg)),
                       0.01 * rng.gaussian3());
      const Pose clean = e.pose;
      e.pose = noise * e.pose;
      input_error += angular_error_deg(e.pose.rotation(), clean.rotation());
    }
    input_error /= static_cast<double>(edges.size());

    const std::vector<Pose> est = synchronize_poses(6, edges);
    double output_error = 0.0;
    for (int f = 1; f < 6; ++f) {
      output_error += angular_error_deg(est[static_cast<std::size_t>(f)].rotation(),
                                        truth[static_cast<std::size_t>(f)].rotation());
    }
    output_error /= 5.0;
    if (output_error < input_error) ++improved;
  }
  REQUIRE(improved >= 95);
}

TEST_CASE("synchronization rejects disconnected graphs", "[pose]") {
  Rng rng(80);
  std::vector<RelativePose> edges;
  RelativePose a;
  a.src = 0;
  a.dst = 1;
  a.pose = random_pose(rng);
  RelativePose b;
  b.src = 2;
  b.dst = 3;
  b.pose = random_pose(rng);
  edges = {a, b};
  REQUIRE_THROWS_AS(synchronize_poses(4, edges), DisconnectedGraph);

  RelativePose bridge;
  bridge.src = 1;
  bridge.dst = 2;
  bridge.pose = random_pose(rng);
  bridge.weight = 0.0;
  edges.push_back(bridge);
  REQUIRE_THROWS_AS(synchronize_poses(4, edges), DisconnectedGraph);

  bridge.weight = 1.0;
  edges.back() = bridge;
  REQUIRE(synchronize_poses(4, edges).size() == 4);
}

TEST_CASE("synchronization validates its inputs", "[pose]") {
  Rng rng(81);
  RelativePose e;
  e.src = 0;
  e.dst = 1;
  e.pose = random_pose(rng);

  RelativePose self = e;
  self.dst = 0;
  REQUIRE_THROWS_AS(synchronize_poses(2, {self}), DegenerateInput);

  RelativePose range = e;
  range.dst = 7;
  REQUIRE_THROWS_AS(synchronize_poses(2, {range}), DegenerateInput);

  RelativePose negative = e;
  negative.weight = -1.0;
  REQUIRE_THROWS_AS(synchronize_poses(2, {negative}), DegenerateInput);

  REQUIRE_THROWS_AS(synchronize_poses(0, {}), DegenerateInput);
}
