#pragma once

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/errors.hpp"
#include "anchorreg/features.hpp"
#include "anchorreg/frame.hpp"
#include "anchorreg/matching.hpp"
#include "anchorreg/rng.hpp"

namespace anchorreg {

struct MatchSyncOptions {
  int universe_size = 0;        // 0 = largest per-frame keypoint count
  int rank_cap = 128;           // factorization rank ceiling
  double accept_threshold = 0.25;
  bool force_iterative = false;  // skip the dense eigensolver (testing hook)
  int max_eig_iters = 500;
  double eig_tol = 1e-6;
  int dense_solver_limit = 4096;  // largest stacked size for the dense path
};

// Cycle-consistent matchings: every keypoint maps to a universe element (or
// none), so pairwise matches compose exactly through the shared universe.
struct SyncedMatches {
  int reference_frame = 0;
  int universe_size = 0;
  std::vector<std::vector<int>> assignment;  // [frame][keypoint] -> universe id or -1
  std::vector<int> common;                   // universe ids assigned in every frame, sorted

  int frame_count() const { return static_cast<int>(assignment.size()); }

  bool is_common(int universe_id) const {
    return std::binary_search(common.begin(), common.end(), universe_id);
  }

  // 0/1 match matrix between two frames, restricted to the common universe
  // (that restriction is what makes M_ik = M_ij * M_jk hold exactly).
  Eigen::MatrixXd pair_matrix(int i, int j) const {
    const auto& a = assignment.at(static_cast<std::size_t>(i));
    const auto& b = assignment.at(static_cast<std::size_t>(j));
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.size()),
                                              static_cast<Eigen::Index>(b.size()));
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (a[r] < 0 || !is_common(a[r])) continue;
      for (std::size_t s = 0; s < b.size(); ++s) {
        if (b[s] == a[r]) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = 1.0;
      }
    }
    return m;
  }
};

namespace detail {

// Leading eigenpairs by subspace (orthogonal) iteration with a fixed-seed
// start; the dense path below is preferred whenever the problem fits.
inline void leading_eigs(const Eigen::MatrixXd& w, int rank, const MatchSyncOptions& opt,
                         Eigen::MatrixXd& vectors, Eigen::VectorXd& values) {
  const Eigen::Index n = w.rows();
  if (!opt.force_iterative && n <= opt.dense_solver_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
    if (es.info() != Eigen::Success) {
      throw ConvergenceFailure("synchronize_matches: dense eigensolver failed");
    }
    vectors.resize(n, rank);
    values.resize(rank);
    for (int k = 0; k < rank; ++k) {
      vectors.col(k) = es.eigenvectors().col(n - 1 - k);
      values[k] = es.eigenvalues()[n - 1 - k];
    }
    return;
  }

  Rng rng(0x5e1f);
  Eigen::MatrixXd q = rng.gaussian_matrix(static_cast<int>(n), rank);
  {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(n, rank);
  }
  for (int iter = 0; iter < opt.max_eig_iters; ++iter) {
    const Eigen::MatrixXd wq = w * q;
    const Eigen::MatrixXd small = q.transpose() * wq;
    const double resid = (wq - q * small).norm();
    if (resid <= opt.eig_tol * std::max(1.0, wq.norm())) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
      vectors.resize(n, rank);
      values.resize(rank);
      for (int k = 0; k < rank; ++k) {
        vectors.col(k) = q * es.eigenvectors().col(rank - 1 - k);
        values[k] = es.eigenvalues()[rank - 1 - k];
      }
      return;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(wq);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(n, rank);
  }
  throw ConvergenceFailure("synchronize_matches: eigen-iteration residual above tolerance");
}

// Greedy partial-permutation rounding: accept entries by descending value
// until rows or universe columns are exhausted or values fall below the
// threshold. Ties break on (row, column) for determinism.
inline std::vector<int> round_assignment(const Eigen::MatrixXd& b, double threshold) {
  struct Entry {
    double value;
    int row;
    int col;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(b.size()));
  for (int r = 0; r < b.rows(); ++r) {
    for (int c = 0; c < b.cols(); ++c) {
      if (b(r, c) >= threshold) entries.push_back({b(r, c), r, c});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
    return std::tie(y.value, x.row, x.col) < std::tie(x.value, y.row, y.col);
  });
  std::vector<int> assignment(static_cast<std::size_t>(b.rows()), -1);
  std::vector<bool> used(static_cast<std::size_t>(b.cols()), false);
  for (const Entry& e : entries) {
    if (assignment[static_cast<std::size_t>(e.row)] >= 0 || used[static_cast<std::size_t>(e.col)]) {
      continue;
    }
    assignment[static_cast<std::size_t>(e.row)] = e.col;
    used[static_cast<std::size_t>(e.col)] = true;
  }
  return assignment;
}

}  // namespace detail

// Spectral permutation synchronization over all pairwise soft matches: stack
// the symmetrized match matrices into one block matrix, factor it through its
// leading eigenvectors, and round each frame's factor product against the
// reference frame into a partial permutation.
inline SyncedMatches synchronize_matches(const std::vector<SoftMatch>& pairwise,
                                         const MatchSyncOptions& opt = {}) {
  if (pairwise.empty()) throw DimensionMismatch("synchronize_matches: no pairwise matches");

  int frame_count = 0;
  for (const SoftMatch& m : pairwise) {
    if (m.src_frame < 0 || m.dst_frame < 0 || m.src_frame == m.dst_frame) {
      throw DegenerateInput("synchronize_matches: bad frame pair");
    }
    frame_count = std::max(frame_count, std::max(m.src_frame, m.dst_frame) + 1);
  }
  if (frame_count < 2) throw DegenerateInput("synchronize_matches: need at least two frames");

  std::vector<int> counts(static_cast<std::size_t>(frame_count), -1);
  std::vector<const SoftMatch*> lookup(static_cast<std::size_t>(frame_count) *
                                           static_cast<std::size_t>(frame_count),
                                       nullptr);
  auto slot = [frame_count](int i, int j) {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(frame_count) +
           static_cast<std::size_t>(j);
  };
  for (const SoftMatch& m : pairwise) {
    const int rows = m.rows();  // slack row/column already excluded
    const int cols = m.cols();
    if (rows < 1 || cols < 1) throw DimensionMismatch("synchronize_matches: empty match matrix");
    for (const auto& [frame, count] : {std::pair{m.src_frame, rows}, std::pair{m.dst_frame, cols}}) {
      if (counts[static_cast<std::size_t>(frame)] < 0) {
        counts[static_cast<std::size_t>(frame)] = count;
      } else if (counts[static_cast<std::size_t>(frame)] != count) {
        throw DimensionMismatch("synchronize_matches: inconsistent keypoint counts for a frame");
      }
    }
    if (lookup[slot(m.src_frame, m.dst_frame)]) {
      throw DimensionMismatch("synchronize_matches: duplicate frame pair");
    }
    lookup[slot(m.src_frame, m.dst_frame)] = &m;
  }
  for (int i = 0; i < frame_count; ++i) {
    if (counts[static_cast<std::size_t>(i)] < 0) {
      throw DimensionMismatch("synchronize_matches: a frame has no matches");
    }
    for (int j = 0; j < frame_count; ++j) {
      if (i != j && !lookup[slot(i, j)]) {
        throw DimensionMismatch("synchronize_matches: missing an ordered frame pair");
      }
    }
  }

  const int max_count = *std::max_element(counts.begin(), counts.end());
  int universe = opt.universe_size > 0 ? opt.universe_size : max_count;
  if (universe < max_count) {
    throw DegenerateInput("synchronize_matches: universe_size below the largest keypoint count");
  }

  std::vector<int> offsets(static_cast<std::size_t>(frame_count) + 1, 0);
  for (int f = 0; f < frame_count; ++f) {
    offsets[static_cast<std::size_t>(f) + 1] =
        offsets[static_cast<std::size_t>(f)] + counts[static_cast<std::size_t>(f)];
  }
  const int total = offsets.back();

  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(total, total);
  for (int i = 0; i < frame_count; ++i) {
    for (int j = i + 1; j < frame_count; ++j) {
      const Eigen::MatrixXd fwd = lookup[slot(i, j)]->inner();
      const Eigen::MatrixXd rev = lookup[slot(j, i)]->inner();
      const Eigen::MatrixXd block = 0.5 * (fwd + rev.transpose());
      w.block(offsets[static_cast<std::size_t>(i)], offsets[static_cast<std::size_t>(j)],
              block.rows(), block.cols()) = block;
      w.block(offsets[static_cast<std::size_t>(j)], offsets[static_cast<std::size_t>(i)],
              block.cols(), block.rows()) = block.transpose();
    }
  }

  const int rank = std::min({universe, opt.rank_cap, total});
  Eigen::MatrixXd u;
  Eigen::VectorXd lambda;
  detail::leading_eigs(w, rank, opt, u, lambda);
  Eigen::MatrixXd y = u;
  for (int k = 0; k < rank; ++k) y.col(k) *= std::sqrt(std::max(0.0, lambda[k]));

  // Reference frame: most keypoints, ties to the smallest index. Universe
  // elements are identified with the reference frame's keypoints.
  int reference = 0;
  for (int f = 1; f < frame_count; ++f) {
    if (counts[static_cast<std::size_t>(f)] > counts[static_cast<std::size_t>(reference)]) {
      reference = f;
    }
  }
  const Eigen::MatrixXd y_ref = y.middleRows(offsets[static_cast<std::size_t>(reference)],
                                             counts[static_cast<std::size_t>(reference)]);

  SyncedMatches out;
  out.reference_frame = reference;
  out.universe_size = universe;
  out.assignment.resize(static_cast<std::size_t>(frame_count));
  for (int f = 0; f < frame_count; ++f) {
    const Eigen::MatrixXd b = y.middleRows(offsets[static_cast<std::size_t>(f)],
                                           counts[static_cast<std::size_t>(f)]) *
                              y_ref.transpose();
    out.assignment[static_cast<std::size_t>(f)] = detail::round_assignment(b, opt.accept_threshold);
  }

  std::vector<int> hits(static_cast<std::size_t>(counts[static_cast<std::size_t>(reference)]), 0);
  for (const auto& frame_assignment : out.assignment) {
    for (const int id : frame_assignment) {
      if (id >= 0) ++hits[static_cast<std::size_t>(id)];
    }
  }
  for (std::size_t id = 0; id < hits.size(); ++id) {
    if (hits[id] == frame_count) out.common.push_back(static_cast<int>(id));
  }
  return out;
}

// Anchor points: cycle-consistent matches visible in every frame, with their
// per-frame pixel locations and back-projected camera-space 3D points.
struct AnchorSet {
  std::vector<int> universe_ids;                     // one per anchor
  std::vector<std::vector<int>> cells;               // [anchor][frame] grid cell
  std::vector<std::vector<Eigen::Vector2d>> px;      // [anchor][frame]
  std::vector<std::vector<Eigen::Vector3d>> points;  // [anchor][frame], camera coords

  int count() const { return static_cast<int>(universe_ids.size()); }
  int frame_count() const { return universe_ids.empty() ? 0 : static_cast<int>(px.front().size()); }
};

inline AnchorSet extract_anchors(const SyncedMatches& sync, const std::vector<Frame>& frames,
                                 const FeatureGrid& grid, int min_anchors = 8) {
  if (static_cast<int>(frames.size()) != sync.frame_count()) {
    throw DimensionMismatch("extract_anchors: frame count does not match the synchronization");
  }
  const int frame_count = sync.frame_count();

  // universe id -> keypoint per frame
  std::vector<std::vector<int>> where(static_cast<std::size_t>(frame_count));
  for (int f = 0; f < frame_count; ++f) {
    where[static_cast<std::size_t>(f)].assign(static_cast<std::size_t>(sync.universe_size), -1);
    const auto& a = sync.assignment[static_cast<std::size_t>(f)];
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (a[r] >= 0) where[static_cast<std::size_t>(f)][static_cast<std::size_t>(a[r])] =
          static_cast<int>(r);
    }
  }

  AnchorSet anchors;
  for (const int id : sync.common) {
    std::vector<int> cells(static_cast<std::size_t>(frame_count));
    std::vector<Eigen::Vector2d> px(static_cast<std::size_t>(frame_count));
    std::vector<Eigen::Vector3d> points(static_cast<std::size_t>(frame_count));
    bool ok = true;
    for (int f = 0; f < frame_count && ok; ++f) {
      const int cell = where[static_cast<std::size_t>(f)][static_cast<std::size_t>(id)];
      cells[static_cast<std::size_t>(f)] = cell;
      px[static_cast<std::size_t>(f)] = grid.cell_center(cell);
      const Frame& frame = frames[static_cast<std::size_t>(f)];
      const double depth = frame.depth_at(px[static_cast<std::size_t>(f)]);
      if (!(depth > 0.0)) {
        ok = false;  // missing depth in any frame drops the anchor
        break;
      }
      points[static_cast<std::size_t>(f)] =
          frame.intrinsics.backproject(px[static_cast<std::size_t>(f)], depth);
    }
    if (!ok) continue;
    anchors.universe_ids.push_back(id);
    anchors.cells.push_back(std::move(cells));
    anchors.px.push_back(std::move(px));
    anchors.points.push_back(std::move(points));
  }
  if (anchors.count() < min_anchors) {
    throw InsufficientAnchors("extract_anchors: fewer than min_anchors cycle-consistent anchors");
  }
  return anchors;
}

}  // namespace anchorreg
