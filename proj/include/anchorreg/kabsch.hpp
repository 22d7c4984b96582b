#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/errors.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

// One 3D correspondence: the returned alignment maps source toward target.
struct WeightedCorrespondence3D {
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  Eigen::Vector3d source = Eigen::Vector3d::Zero();
  double weight = 1.0;
};

using WeightedCorrespondences3D = std::vector<WeightedCorrespondence3D>;

// Weighted objective the alignment minimizes; exposed for optimality checks.
inline double alignment_objective(const WeightedCorrespondences3D& corr, const Pose& pose) {
  double sum = 0.0;
  for (const WeightedCorrespondence3D& c : corr) {
    sum += c.weight * (c.target - pose * c.source).squaredNorm();
  }
  return sum;
}

// Closed-form weighted rigid alignment: remove weighted centroids, SVD of the
// weighted cross-covariance, determinant correction against reflections.
inline Pose weighted_kabsch(const WeightedCorrespondences3D& corr) {
  if (corr.size() < 3) {
    throw DegenerateConfiguration("weighted_kabsch: need at least 3 correspondences");
  }
  double total = 0.0;
  for (const WeightedCorrespondence3D& c : corr) {
    if (!std::isfinite(c.weight) || c.weight < 0.0) {
      throw DegenerateInput("weighted_kabsch: weights must be finite and nonnegative");
    }
    if (!c.target.allFinite() || !c.source.allFinite()) {
      throw DegenerateInput("weighted_kabsch: points must be finite");
    }
    total += c.weight;
  }
  if (total <= 0.0) throw AllZeroWeights("weighted_kabsch: all weights are zero");

  Eigen::Vector3d centroid_t = Eigen::Vector3d::Zero();
  Eigen::Vector3d centroid_s = Eigen::Vector3d::Zero();
  for (const WeightedCorrespondence3D& c : corr) {
    centroid_t += c.weight * c.target;
    centroid_s += c.weight * c.source;
  }
  centroid_t /= total;
  centroid_s /= total;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (const WeightedCorrespondence3D& c : corr) {
    h += c.weight * (c.source - centroid_s) * (c.target - centroid_t).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sigma = svd.singularValues();
  if (sigma[1] <= 1e-12 * std::max(1.0, sigma[0])) {
    throw DegenerateConfiguration("weighted_kabsch: correspondences span fewer than 2 dimensions");
  }
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  const Rotation r = Rotation::project(v * d.asDiagonal() * u.transpose());
  return Pose(r, centroid_t - r * centroid_s);
}

}  // namespace anchorreg
