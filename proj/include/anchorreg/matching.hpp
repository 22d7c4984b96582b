#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "anchorreg/errors.hpp"

namespace anchorreg {

using ScoreMatrix = Eigen::MatrixXd;

// Descriptor affinities: rows of a against rows of b, higher = better match.
inline ScoreMatrix score_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatch("score_matrix: descriptor dimensions differ");
  }
  return a * b.transpose();
}

// Soft assignment between m source and n target keypoints, augmented with a
// slack row/column (last index) that absorbs unmatched mass. For a converged
// transport every non-slack row and column sums to 1, the slack row to n and
// the slack column to m.
struct SoftMatch {
  int src_frame = -1;
  int dst_frame = -1;
  Eigen::MatrixXd values;

  int rows() const { return static_cast<int>(values.rows()) - 1; }
  int cols() const { return static_cast<int>(values.cols()) - 1; }
  Eigen::MatrixXd inner() const { return values.topLeftCorner(rows(), cols()); }
};

namespace detail {

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

// Entropic optimal transport in the log domain. The slack logit is
// slack_score relative to the mean score, so adding a constant to every score
// leaves the transport unchanged. Each iteration normalizes columns then
// rows; the final row update makes non-slack row sums exact while column sums
// converge geometrically with the iteration count.
inline SoftMatch sinkhorn(const ScoreMatrix& scores, double epsilon = 0.1, int iters = 30,
                          double slack_score = 0.0) {
  const int m = static_cast<int>(scores.rows());
  const int n = static_cast<int>(scores.cols());
  if (m < 1 || n < 1) throw DimensionMismatch("sinkhorn: empty score matrix");
  if (epsilon <= 0.0) throw DegenerateInput("sinkhorn: epsilon must be positive");
  if (iters < 1) throw DegenerateInput("sinkhorn: iteration count must be positive");
  if (!scores.allFinite()) throw NumericalError("sinkhorn: scores must be finite");

  const double slack_logit = (scores.mean() + slack_score) / epsilon;
  Eigen::MatrixXd k(m + 1, n + 1);
  k.topLeftCorner(m, n) = scores / epsilon;
  k.row(m).setConstant(slack_logit);
  k.col(n).setConstant(slack_logit);

  Eigen::VectorXd la = Eigen::VectorXd::Zero(m + 1);
  la[m] = std::log(static_cast<double>(n));
  Eigen::VectorXd lb = Eigen::VectorXd::Zero(n + 1);
  lb[n] = std::log(static_cast<double>(m));

  Eigen::VectorXd f = Eigen::VectorXd::Zero(m + 1);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd tmp_col(m + 1), tmp_row(n + 1);
  for (int it = 0; it < iters; ++it) {
    for (int s = 0; s <= n; ++s) {
      tmp_col = k.col(s) + f;
      g[s] = lb[s] - detail::log_sum_exp(tmp_col);
    }
    for (int r = 0; r <= m; ++r) {
      tmp_row = k.row(r).transpose() + g;
      f[r] = la[r] - detail::log_sum_exp(tmp_row);
    }
  }

  SoftMatch out;
  out.values = ((k.colwise() + f).rowwise() + g.transpose()).array().exp().matrix();
  if (!out.values.allFinite()) throw NumericalError("sinkhorn: transport over/underflow");
  return out;
}

struct Correspondence {
  int src = -1;
  int dst = -1;
  double confidence = 0.0;
};

// Mutual-argmax extraction at a confidence threshold. The slack row/column
// participates in the argmax, so a keypoint whose mass went to slack matches
// nothing. Ties resolve to the lowest index.
inline std::vector<Correspondence> extract_matches(const SoftMatch& match,
                                                   double threshold = 0.5) {
  const int m = match.rows();
  const int n = match.cols();
  std::vector<Correspondence> out;
  for (int r = 0; r < m; ++r) {
    Eigen::Index best_col;
    const double v = match.values.row(r).maxCoeff(&best_col);
    if (static_cast<int>(best_col) >= n || v < threshold) continue;
    Eigen::Index best_row;
    match.values.col(best_col).maxCoeff(&best_row);
    if (static_cast<int>(best_row) != r) continue;
    out.push_back({r, static_cast<int>(best_col), v});
  }
  return out;
}

struct CycleLosses {
  double orthogonality = 0.0;
  double bijectivity = 0.0;
};

// Cycle-consistency penalties on a pair of square matchings (slack removed):
// orthogonality of the forward matching, and bijectivity of the two
// compositions against the identity, both in the Frobenius norm.
inline CycleLosses cycle_losses(const Eigen::MatrixXd& s_ij, const Eigen::MatrixXd& s_ji) {
  if (s_ij.rows() != s_ij.cols() || s_ji.rows() != s_ji.cols()) {
    throw DimensionMismatch("cycle_losses: matchings must be square (slack removed)");
  }
  if (s_ij.rows() != s_ji.rows()) {
    throw DimensionMismatch("cycle_losses: forward and backward matching sizes differ");
  }
  const Eigen::Index n = s_ij.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  CycleLosses out;
  out.orthogonality =
      (s_ij * s_ij.transpose() - eye).norm() + (s_ij.transpose() * s_ij - eye).norm();
  out.bijectivity = (s_ij * s_ji - eye).norm() + (s_ji * s_ij - eye).norm();
  return out;
}

}  // namespace anchorreg
