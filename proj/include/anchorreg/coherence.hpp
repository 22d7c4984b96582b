#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/camera.hpp"
#include "anchorreg/errors.hpp"
#include "anchorreg/rng.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

struct CoherenceConfig {
  double sigma_d = 0.6;   // meters, distance-embedding sensitivity
  double sigma_rs = 0.3;  // meters, coherence bandwidth
  int window = 5;         // odd, matching-window side in pixels

  void validate() const {
    if (!(sigma_d > 0.0) || !(sigma_rs > 0.0)) {
      throw DegenerateInput("CoherenceConfig: sigmas must be positive");
    }
    if (window < 1 || window % 2 == 0) {
      throw DegenerateInput("CoherenceConfig: window must be odd and positive");
    }
  }
};

struct AttentionWeights {
  Eigen::MatrixXd w_q, w_k, w_v, w_r;

  int dim() const { return static_cast<int>(w_q.rows()); }

  static AttentionWeights seeded(int dim, std::uint64_t seed) {
    if (dim < 1) throw DegenerateInput("AttentionWeights: dimension must be positive");
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    AttentionWeights w;
    w.w_q = scale * rng.gaussian_matrix(dim, dim);
    w.w_k = scale * rng.gaussian_matrix(dim, dim);
    w.w_v = scale * rng.gaussian_matrix(dim, dim);
    w.w_r = scale * rng.gaussian_matrix(dim, dim);
    return w;
  }

  void validate() const {
    const Eigen::Index d = w_q.rows();
    for (const Eigen::MatrixXd* w : {&w_q, &w_k, &w_v, &w_r}) {
      if (w->rows() != d || w->cols() != d) {
        throw DimensionMismatch("AttentionWeights: matrices must all be d x d");
      }
      if (!w->allFinite()) throw NumericalError("AttentionWeights: weights must be finite");
    }
    if (d < 1) throw DimensionMismatch("AttentionWeights: empty weights");
  }
};

namespace detail {

inline Eigen::VectorXd anchor_distances(const Eigen::Vector3d& point,
                                        const std::vector<Eigen::Vector3d>& anchors) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(anchors.size()));
  for (std::size_t k = 0; k < anchors.size(); ++k) d[static_cast<Eigen::Index>(k)] = (point - anchors[k]).norm();
  return d;
}

inline Eigen::VectorXd rho_embedding(double rho, int dim, const CoherenceConfig& cfg) {
  cfg.validate();
  if (dim < 2 || dim % 2 != 0) {
    throw DegenerateInput("distance_embedding: dimension must be even and at least 2");
  }
  const double u = rho / cfg.sigma_d;
  Eigen::VectorXd out(dim);
  for (int k = 0; k < dim / 2; ++k) {
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[2 * k] = std::sin(u * omega);
    out[2 * k + 1] = std::cos(u * omega);
  }
  return out;
}

// Coherence weight from precomputed anchor-distance profiles; lets window
// batches share each cell's profile instead of recomputing it per pair.
inline double profile_coherence(const Eigen::VectorXd& dist_r, const Eigen::VectorXd& dist_s,
                                const CoherenceConfig& cfg) {
  const double d_rs = (dist_r - dist_s).cwiseAbs().sum();
  return std::exp(-d_rs * d_rs / (cfg.sigma_rs * cfg.sigma_rs));
}

}  // namespace detail

// Sinusoidal encoding of a point's mean distance to the frame's anchors,
// rescaled by sigma_d: interleaved (sin, cos) pairs over the standard
// geometric frequency progression.
inline Eigen::VectorXd distance_embedding(const Eigen::Vector3d& point,
                                          const std::vector<Eigen::Vector3d>& anchors, int dim,
                                          const CoherenceConfig& cfg = {}) {
  cfg.validate();
  if (anchors.empty()) throw EmptyAnchors("distance_embedding: no anchors in frame");
  return detail::rho_embedding(detail::anchor_distances(point, anchors).mean(), dim, cfg);
}

// Row-stochastic attention matrix: scores from embedding-augmented queries and
// keys, scaled by 1/sqrt(d), normalized by a row-wise softmax.
inline Eigen::MatrixXd attention_matrix(const Eigen::MatrixXd& features,
                                        const Eigen::MatrixXd& embeddings,
                                        const AttentionWeights& weights) {
  weights.validate();
  const Eigen::Index d = weights.w_q.rows();
  if (features.cols() != d || embeddings.rows() != features.rows() || embeddings.cols() != d) {
    throw DimensionMismatch("attention_matrix: feature and embedding shapes must be N x d");
  }
  if (features.rows() < 1) throw DimensionMismatch("attention_matrix: no rows");

  const Eigen::MatrixXd q = features * weights.w_q + embeddings * weights.w_r;
  const Eigen::MatrixXd k = features * weights.w_k + embeddings * weights.w_r;
  Eigen::MatrixXd scores = q * k.transpose() / std::sqrt(static_cast<double>(d));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double peak = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - peak).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  return scores;
}

// Attention output: each row is the attention-weighted mix of value-projected
// feature rows.
inline Eigen::MatrixXd anchor_attention(const Eigen::MatrixXd& features,
                                        const Eigen::MatrixXd& embeddings,
                                        const AttentionWeights& weights) {
  return attention_matrix(features, embeddings, weights) * (features * weights.w_v);
}

// Spatial coherence weight in (0, 1]: compares the candidate pair's distance
// profiles against the paired anchors and maps the accumulated discrepancy
// through a Gaussian. Identical profiles give exactly 1.
inline double spatial_coherence(const Eigen::Vector3d& x_r, const Eigen::Vector3d& x_s,
                                const std::vector<Eigen::Vector3d>& anchors_r,
                                const std::vector<Eigen::Vector3d>& anchors_s,
                                const CoherenceConfig& cfg = {}) {
  cfg.validate();
  if (anchors_r.empty()) throw EmptyAnchors("spatial_coherence: no anchor pairs");
  if (anchors_r.size() != anchors_s.size()) {
    throw DimensionMismatch("spatial_coherence: anchor lists must pair up");
  }
  return detail::profile_coherence(detail::anchor_distances(x_r, anchors_r),
                                   detail::anchor_distances(x_s, anchors_s), cfg);
}

// Raw Sampson distance of a pixel pair under the essential matrix of pose_rs
// (which maps s-frame coordinates into the r frame). Normalization against a
// window batch is a separate step; see normalize_costs.
inline double sampson_cost(const Eigen::Vector2d& px_r, const Eigen::Vector2d& px_s,
                           const Pose& pose_rs, const Intrinsics& intr_r,
                           const Intrinsics& intr_s) {
  const Eigen::Vector3d& t = pose_rs.translation();
  if (t.norm() < 1e-9) {
    throw DegenerateGeometry("sampson_cost: translation too small for an essential matrix");
  }
  Eigen::Matrix3d tx;
  tx << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  const Eigen::Matrix3d e = tx * pose_rs.rotation().matrix();

  const Eigen::Vector3d y_r = intr_r.ray(px_r);
  const Eigen::Vector3d y_s = intr_s.ray(px_s);
  const double num = y_r.dot(e * y_s);
  const Eigen::Vector3d e_ys = e * y_s;
  const Eigen::Vector3d et_yr = e.transpose() * y_r;
  const double denom =
      e_ys[0] * e_ys[0] + e_ys[1] * e_ys[1] + et_yr[0] * et_yr[0] + et_yr[1] * et_yr[1];
  if (denom <= 1e-300) return 0.0;  // both pixels at the epipole
  return num * num / denom;
}

// Geometric cost with the pure-rotation fallback: when the essential matrix is
// undefined the cost degrades to the 3D transfer error of the back-projected
// points under pose_rs.
inline double geometric_cost(const Eigen::Vector3d& x_r, const Eigen::Vector3d& x_s,
                             const Eigen::Vector2d& px_r, const Eigen::Vector2d& px_s,
                             const Pose& pose_rs, const Intrinsics& intr_r,
                             const Intrinsics& intr_s) {
  if (pose_rs.translation().norm() < 1e-9) return (x_r - pose_rs * x_s).norm();
  return sampson_cost(px_r, px_s, pose_rs, intr_r, intr_s);
}

// Batch normalization of nonnegative costs by the batch maximum (guarded so an
// all-zero batch stays zero).
inline Eigen::MatrixXd normalize_costs(const Eigen::MatrixXd& costs) {
  if (costs.size() == 0) return costs;
  if (!costs.allFinite() || costs.minCoeff() < 0.0) {
    throw DegenerateInput("normalize_costs: costs must be finite and nonnegative");
  }
  return costs / (costs.maxCoeff() + 1e-12);
}

// Fine-level matching affinity: descriptor similarity plus the coherence
// weight minus the normalized geometric cost.
inline double fine_affinity(double similarity, double eta, double gamma) {
  return similarity + eta - gamma;
}

}  // namespace anchorreg
