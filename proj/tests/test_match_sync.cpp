#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "anchorreg/match_sync.hpp"
#include "anchorreg/rng.hpp"
#include "anchorreg/synthetic.hpp"

using namespace anchorreg;

namespace {

SoftMatch soft_from_inner(int src, int dst, const Eigen::MatrixXd& p) {
  SoftMatch m;
  m.src_frame = src;
  m.dst_frame = dst;
  m.values = Eigen::MatrixXd::Zero(p.rows() + 1, p.cols() + 1);
  m.values.topLeftCorner(p.rows(), p.cols()) = p;
  return m;
}

// Frame-to-universe selections: row r of the result marks the universe
// element observed by keypoint r.
Eigen::MatrixXd selection(const std::vector<int>& observed, int universe) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(observed.size()), universe);
  for (std::size_t r = 0; r < observed.size(); ++r) {
    x(static_cast<Eigen::Index>(r), observed[r]) = 1.0;
  }
  return x;
}

std::vector<int> random_subset(Rng& rng, int universe, int count) {
  std::vector<int> ids(static_cast<std::size_t>(universe));
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  ids.resize(static_cast<std::size_t>(count));
  return ids;
}

std::vector<SoftMatch> consistent_pairs(const std::vector<Eigen::MatrixXd>& x) {
  std::vector<SoftMatch> pairs;
  const int f = static_cast<int>(x.size());
  for (int i = 0; i < f; ++i) {
    for (int j = 0; j < f; ++j) {
      if (i == j) continue;
      pairs.push_back(soft_from_inner(i, j, x[static_cast<std::size_t>(i)] *
                                                x[static_cast<std::size_t>(j)].transpose()));
    }
  }
  return pairs;
}

bool boolean_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if ((a(r, c) > 0.5) != (b(r, c) > 0.5)) return false;
    }
  }
  return true;
}

void require_cycle_consistent(const SyncedMatches& sync) {
  const int f = sync.frame_count();
  for (int i = 0; i < f; ++i) {
    for (int j = 0; j < f; ++j) {
      for (int k = 0; k < f; ++k) {
        if (i == j || j == k || i == k) continue;
        const Eigen::MatrixXd direct = sync.pair_matrix(i, k);
        const Eigen::MatrixXd composed = sync.pair_matrix(i, j) * sync.pair_matrix(j, k);
        REQUIRE(boolean_equal(direct, composed));
      }
    }
  }
}

}  // namespace

TEST_CASE("consistent permutations pass through synchronization unchanged", "[match_sync]") {
  Rng rng(41);
  std::vector<Eigen::MatrixXd> x;
  for (int f = 0; f < 4; ++f) x.push_back(selection(random_subset(rng, 16, 16), 16));
  const std::vector<SoftMatch> pairs = consistent_pairs(x);

  const SyncedMatches sync = synchronize_matches(pairs);
  REQUIRE(sync.common.size() == 16);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i == j) continue;
      const Eigen::MatrixXd expected =
          x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)].transpose();
      REQUIRE(boolean_equal(sync.pair_matrix(i, j), expected));
    }
  }
  require_cycle_consistent(sync);
}

TEST_CASE("one planted inconsistency only disturbs the affected elements", "[match_sync]") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::MatrixXd> x;
    for (int f = 0; f < 3; ++f) x.push_back(selection(random_subset(rng, 4, 4), 4));
    std::vector<SoftMatch> pairs = consistent_pairs(x);

    // Corrupt M_02 (and its reverse) with one transposition of two rows.
    const int a = rng.uniform_int(0, 3);
    int b = rng.uniform_int(0, 3);
    while (b == a) b = rng.uniform_int(0, 3);
    for (SoftMatch& m : pairs) {
      if (m.src_frame == 0 && m.dst_frame == 2) {
        m.values.row(a).swap(m.values.row(b));
      } else if (m.src_frame == 2 && m.dst_frame == 0) {
        m.values.col(a).swap(m.values.col(b));
      }
    }

    const SyncedMatches sync = synchronize_matches(pairs);
    require_cycle_consistent(sync);

    // Frame-0 rows a and b are the corrupted elements; everything outside
    // their orbit must come through exactly as planted.
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i == j) continue;
        const Eigen::MatrixXd clean =
            x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)].transpose();
        const Eigen::MatrixXd got = sync.pair_matrix(i, j);
        for (int r = 0; r < 4; ++r) {
          const bool r_orbit = x[static_cast<std::size_t>(i)].row(r) == x[0].row(a) ||
                               x[static_cast<std::size_t>(i)].row(r) == x[0].row(b);
          for (int s = 0; s < 4; ++s) {
            const bool s_orbit = x[static_cast<std::size_t>(j)].row(s) == x[0].row(a) ||
                                 x[static_cast<std::size_t>(j)].row(s) == x[0].row(b);
            if (r_orbit && s_orbit) continue;
            REQUIRE((got(r, s) > 0.5) == (clean(r, s) > 0.5));
          }
        }
      }
    }
  }
}

TEST_CASE("random corrupted instances come out exactly cycle consistent", "[match_sync]") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::MatrixXd> x;
    for (int f = 0; f < 4; ++f) x.push_back(selection(random_subset(rng, 16, 12), 16));
    std::vector<SoftMatch> pairs = consistent_pairs(x);

    for (int c = 0; c < 2; ++c) {
      SoftMatch& victim = pairs[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))];
      const int rows = victim.rows();
      const int a = rng.uniform_int(0, rows - 1);
      int b = rng.uniform_int(0, rows - 1);
      while (b == a) b = rng.uniform_int(0, rows - 1);
      victim.values.row(a).swap(victim.values.row(b));
    }

    require_cycle_consistent(synchronize_matches(pairs));
  }
}

TEST_CASE("a single pair rounds to a partial permutation", "[match_sync]") {
  Rng rng(44);
  const std::vector<int> perm = random_subset(rng, 6, 6);
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(6, 6, 0.05);
  for (int r = 0; r < 6; ++r) p(r, perm[static_cast<std::size_t>(r)]) = 0.9;

  std::vector<SoftMatch> pairs;
  pairs.push_back(soft_from_inner(0, 1, p));
  pairs.push_back(soft_from_inner(1, 0, p.transpose()));
  const SyncedMatches sync = synchronize_matches(pairs);

  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(6, 6);
  for (int r = 0; r < 6; ++r) expected(r, perm[static_cast<std::size_t>(r)]) = 1.0;
  REQUIRE(boolean_equal(sync.pair_matrix(0, 1), expected));
}

TEST_CASE("partial visibility keeps exactly the shared universe elements", "[match_sync]") {
  const std::vector<std::vector<int>> observed = {
      {0, 1, 2, 3, 4}, {1, 2, 3, 4, 5}, {0, 1, 2, 3, 5}};
  std::vector<Eigen::MatrixXd> x;
  for (const auto& obs : observed) x.push_back(selection(obs, 6));
  const SyncedMatches sync = synchronize_matches(consistent_pairs(x), [] {
    MatchSyncOptions opt;
    opt.universe_size = 6;
    return opt;
  }());

  // Planted elements 1, 2, 3 are the only ones seen by every frame.
  REQUIRE(sync.common.size() == 3);
  require_cycle_consistent(sync);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(5, 5);
      for (int r = 0; r < 5; ++r) {
        for (int s = 0; s < 5; ++s) {
          const int u = observed[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
          if (u >= 1 && u <= 3 && observed[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] == u) {
            expected(r, s) = 1.0;
          }
        }
      }
      REQUIRE(boolean_equal(sync.pair_matrix(i, j), expected));
    }
  }
}

TEST_CASE("oracle clip synchronization recovers planted anchors", "[match_sync]") {
  SceneOptions opt;
  opt.mode = "lattice";
  opt.frame_count = 4;
  opt.landmark_count = 24;
  opt.image_size = 64;
  const SyntheticScene scene = build_scene(45, opt);
  const std::vector<Frame> frames = render_scene(scene);

  std::vector<FeatureGrid> grids;
  for (int f = 0; f < scene.frame_count(); ++f) grids.push_back(oracle_grid(scene, f, 4, 32));

  std::vector<SoftMatch> pairs;
  for (int i = 0; i < scene.frame_count(); ++i) {
    for (int j = 0; j < scene.frame_count(); ++j) {
      if (i == j) continue;
      SoftMatch m = sinkhorn(score_matrix(grids[static_cast<std::size_t>(i)].feats,
                                          grids[static_cast<std::size_t>(j)].feats));
      m.src_frame = i;
      m.dst_frame = j;
      pairs.push_back(std::move(m));
    }
  }

  const SyncedMatches sync = synchronize_matches(pairs);
  require_cycle_consistent(sync);
  const AnchorSet anchors = extract_anchors(sync, frames, grids[0]);
  REQUIRE(anchors.count() >= static_cast<int>(0.95 * opt.landmark_count));
  REQUIRE(anchors.frame_count() == scene.frame_count());

  // Every anchor's per-frame back-projections must agree in world space.
  for (int a = 0; a < anchors.count(); ++a) {
    const Eigen::Vector3d world =
        scene.poses[0] * anchors.points[static_cast<std::size_t>(a)][0];
    for (int f = 1; f < scene.frame_count(); ++f) {
      const Eigen::Vector3d w =
          scene.poses[static_cast<std::size_t>(f)] *
          anchors.points[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
      REQUIRE((w - world).norm() < 1e-6);
    }
  }

  // Anchors with any missing depth are dropped.
  std::vector<Frame> broken = frames;
  const Eigen::Vector2d victim = anchors.px[0][2];
  broken[2].depth.at(static_cast<int>(std::lround(victim.x())),
                     static_cast<int>(std::lround(victim.y()))) = 0.0f;
  const AnchorSet fewer = extract_anchors(sync, broken, grids[0]);
  REQUIRE(fewer.count() == anchors.count() - 1);

  REQUIRE_THROWS_AS(extract_anchors(sync, frames, grids[0], 1000), InsufficientAnchors);
}

TEST_CASE("eigen iteration reports non-convergence", "[match_sync]") {
  Rng rng(46);
  std::vector<Eigen::MatrixXd> x;
  for (int f = 0; f < 3; ++f) x.push_back(selection(random_subset(rng, 8, 6), 8));
  MatchSyncOptions opt;
  opt.universe_size = 8;
  opt.force_iterative = true;
  opt.max_eig_iters = 1;
  opt.eig_tol = 1e-14;
  REQUIRE_THROWS_AS(synchronize_matches(consistent_pairs(x), opt), ConvergenceFailure);

  opt.max_eig_iters = 500;
  opt.eig_tol = 1e-9;
  const SyncedMatches sync = synchronize_matches(consistent_pairs(x), opt);
  require_cycle_consistent(sync);
}

TEST_CASE("synchronization validates its inputs", "[match_sync]") {
  Rng rng(47);
  std::vector<Eigen::MatrixXd> x;
  for (int f = 0; f < 3; ++f) x.push_back(selection(random_subset(rng, 6, 6), 6));
  const std::vector<SoftMatch> pairs = consistent_pairs(x);

  std::vector<SoftMatch> missing(pairs.begin(), pairs.end() - 1);
  REQUIRE_THROWS_AS(synchronize_matches(missing), DimensionMismatch);

  std::vector<SoftMatch> duplicated = pairs;
  duplicated.push_back(pairs.front());
  REQUIRE_THROWS_AS(synchronize_matches(duplicated), DimensionMismatch);

  MatchSyncOptions small_universe;
  small_universe.universe_size = 3;
  REQUIRE_THROWS_AS(synchronize_matches(pairs, small_universe), DegenerateInput);

  std::vector<SoftMatch> inconsistent = pairs;
  inconsistent.front().values = Eigen::MatrixXd::Zero(4, 7);
  REQUIRE_THROWS_AS(synchronize_matches(inconsistent), DimensionMismatch);

  REQUIRE_THROWS_AS(synchronize_matches({}), DimensionMismatch);
}
