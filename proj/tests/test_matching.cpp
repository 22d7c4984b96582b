#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "anchorreg/errors.hpp"
#include "anchorreg/matching.hpp"
#include "anchorreg/rng.hpp"

#include "test_util.hpp"

using namespace anchorreg;
using testutil::max_abs_diff;

namespace {

// Reference Sinkhorn in the ordinary domain, same update order as the
// library (columns then rows), used to pin the log-domain implementation.
Eigen::MatrixXd naive_sinkhorn(const Eigen::MatrixXd& scores, double eps, int iters,
                               double slack_score) {
  const int m = static_cast<int>(scores.rows());
  const int n = static_cast<int>(scores.cols());
  const double slack = scores.mean() + slack_score;
  Eigen::MatrixXd k(m + 1, n + 1);
  for (int r = 0; r <= m; ++r) {
    for (int s = 0; s <= n; ++s) {
      const double v = (r < m && s < n) ? scores(r, s) : slack;
      k(r, s) = std::exp(v / eps);
    }
  }
  Eigen::VectorXd a = Eigen::VectorXd::Ones(m + 1);
  a[m] = n;
  Eigen::VectorXd b = Eigen::VectorXd::Ones(n + 1);
  b[n] = m;
  Eigen::VectorXd u = Eigen::VectorXd::Ones(m + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n + 1);
  for (int it = 0; it < iters; ++it) {
    v = b.array() / (k.transpose() * u).array();
    u = a.array() / (k * v).array();
  }
  return u.asDiagonal() * k * v.asDiagonal();
}

double worst_marginal_error(const SoftMatch& sm) {
  const int m = sm.rows();
  const int n = sm.cols();
  double worst = 0.0;
  for (int r = 0; r < m; ++r) {
    worst = std::max(worst, std::abs(sm.values.row(r).sum() - 1.0));
  }
  for (int s = 0; s < n; ++s) {
    worst = std::max(worst, std::abs(sm.values.col(s).sum() - 1.0));
  }
  return worst;
}

}  // namespace

TEST_CASE("score_matrix of identical orthonormal descriptors is the identity", "[matching]") {
  Rng rng(21);
  const Eigen::MatrixXd g = rng.gaussian_matrix(5, 5);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  const ScoreMatrix s = score_matrix(q, q);
  REQUIRE(max_abs_diff(s, Eigen::MatrixXd::Identity(5, 5)) < 1e-12);
}

TEST_CASE("score_matrix argmax follows a row permutation", "[matching]") {
  Rng rng(22);
  const int n = 6;
  Eigen::MatrixXd a(n, 8);
  for (int i = 0; i < n; ++i) a.row(i) = rng.unit_vector(8).transpose();
  std::vector<int> perm = {3, 0, 4, 1, 5, 2};
  Eigen::MatrixXd b(n, 8);
  for (int i = 0; i < n; ++i) b.row(i) = a.row(perm[static_cast<std::size_t>(i)]);
  const ScoreMatrix s = score_matrix(a, b);
  for (int i = 0; i < n; ++i) {
    Eigen::Index best;
    s.row(perm[static_cast<std::size_t>(i)]).maxCoeff(&best);
    REQUIRE(static_cast<int>(best) == i);
    REQUIRE(s(perm[static_cast<std::size_t>(i)], i) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("score_matrix of zero descriptors is the zero matrix", "[matching]") {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 7);
  const Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 7);
  REQUIRE(score_matrix(a, b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("score_matrix rejects mismatched descriptor dimensions", "[matching]") {
  REQUIRE_THROWS_AS(score_matrix(Eigen::MatrixXd::Zero(4, 7), Eigen::MatrixXd::Zero(4, 6)),
                    DimensionMismatch);
}

TEST_CASE("sinkhorn forces a single dominant match", "[matching]") {
  // A strongly negative slack makes the limit transport a degenerate vertex,
  // which Sinkhorn approaches harmonically (error ~ 1/iters), hence the high
  // iteration count for a tiny problem.
  Eigen::MatrixXd scores(1, 1);
  scores(0, 0) = 5.0;
  const SoftMatch sm = sinkhorn(scores, 0.1, 2000, -50.0);
  REQUIRE(sm.values(0, 0) > 0.999);
  REQUIRE(sm.values.rows() == 2);
  REQUIRE(sm.values.cols() == 2);
}

TEST_CASE("sinkhorn on uniform scores with negligible slack is uniform", "[matching]") {
  const int n = 5;
  const Eigen::MatrixXd scores = Eigen::MatrixXd::Constant(n, n, 0.7);
  const SoftMatch sm = sinkhorn(scores, 0.1, 500, -100.0);
  for (int r = 0; r < n; ++r) {
    for (int s = 0; s < n; ++s) {
      // Exact symmetry among entries; the common value approaches 1/n
      // harmonically from below as slack mass dries up.
      REQUIRE(sm.values(r, s) == Catch::Approx(sm.values(0, 0)).margin(1e-12));
      REQUIRE(sm.values(r, s) == Catch::Approx(1.0 / n).margin(1e-3));
    }
  }
}

TEST_CASE("sinkhorn matches a reference implementation", "[matching]") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = rng.uniform_int(1, 8);
    const int n = rng.uniform_int(1, 8);
    Eigen::MatrixXd scores(m, n);
    for (int r = 0; r < m; ++r) {
      for (int s = 0; s < n; ++s) scores(r, s) = rng.uniform(-1.0, 2.0);
    }
    const double eps = rng.uniform(0.2, 1.0);
    const SoftMatch sm = sinkhorn(scores, eps, 40, 0.0);
    const Eigen::MatrixXd ref = naive_sinkhorn(scores, eps, 40, 0.0);
    REQUIRE(max_abs_diff(sm.values, ref) < 1e-11);
  }
}

TEST_CASE("sinkhorn recovers a planted permutation with high confidence", "[matching]") {
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(3, 3);
  const int perm[3] = {2, 0, 1};
  for (int r = 0; r < 3; ++r) scores(r, perm[r]) = 10.0;
  const SoftMatch sm = sinkhorn(scores, 1.0, 60, 0.0);
  for (int r = 0; r < 3; ++r) {
    REQUIRE(sm.values(r, perm[r]) > 0.9);
  }
  const auto matches = extract_matches(sm, 0.5);
  REQUIRE(matches.size() == 3);
  for (const auto& c : matches) {
    REQUIRE(c.dst == perm[c.src]);
  }
}

TEST_CASE("sinkhorn marginals converge to the slack-augmented targets", "[matching]") {
  Rng rng(24);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = rng.uniform_int(2, 40);
    const int n = rng.uniform_int(2, 40);
    Eigen::MatrixXd scores(m, n);
    for (int r = 0; r < m; ++r) {
      for (int s = 0; s < n; ++s) scores(r, s) = rng.uniform(0.0, 1.0);
    }
    const SoftMatch sm = sinkhorn(scores, 0.1, 200, 0.0);
    REQUIRE(worst_marginal_error(sm) < 1e-6);
    REQUIRE(sm.values.row(sm.rows()).sum() == Catch::Approx(static_cast<double>(n)).margin(1e-5));
    REQUIRE(sm.values.col(sm.cols()).sum() == Catch::Approx(static_cast<double>(m)).margin(1e-5));
  }
}

TEST_CASE("sinkhorn is invariant to a constant score shift", "[matching]") {
  Rng rng(25);
  Eigen::MatrixXd scores(12, 9);
  for (int r = 0; r < 12; ++r) {
    for (int s = 0; s < 9; ++s) scores(r, s) = rng.uniform(-2.0, 2.0);
  }
  const SoftMatch base = sinkhorn(scores, 0.1, 60, 0.0);
  for (double shift : {17.3, -400.0, 1e6}) {
    const SoftMatch shifted = sinkhorn(scores.array() + shift, 0.1, 60, 0.0);
    REQUIRE(max_abs_diff(base.values, shifted.values) < 1e-8);
  }
}

TEST_CASE("sinkhorn rejects invalid input", "[matching]") {
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(2, 2);
  REQUIRE_THROWS_AS(sinkhorn(scores, 0.0, 10, 0.0), DegenerateInput);
  REQUIRE_THROWS_AS(sinkhorn(scores, 0.1, 0, 0.0), DegenerateInput);
  REQUIRE_THROWS_AS(sinkhorn(Eigen::MatrixXd(0, 3), 0.1, 10, 0.0), DimensionMismatch);
  scores(1, 1) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(sinkhorn(scores, 0.1, 10, 0.0), NumericalError);
}

TEST_CASE("extract_matches applies mutual argmax with slack and threshold", "[matching]") {
  SoftMatch sm;
  sm.values.resize(4, 4);
  // Rows: keypoints 0..2 plus slack; columns likewise.
  sm.values << 0.90, 0.04, 0.03, 0.03,   // row 0: clean match to column 0
               0.05, 0.15, 0.10, 0.70,   // row 1: mass went to slack
               0.02, 0.45, 0.33, 0.20,   // row 2: best column below threshold
               0.03, 0.36, 0.54, 0.07;   // slack row
  const auto matches = extract_matches(sm, 0.5);
  REQUIRE(matches.size() == 1);
  REQUIRE(matches[0].src == 0);
  REQUIRE(matches[0].dst == 0);
  REQUIRE(matches[0].confidence == Catch::Approx(0.90));

  // Mutual requirement: row 0 prefers column 1, but column 1 prefers row 1.
  SoftMatch mut;
  mut.values.resize(3, 3);
  mut.values << 0.60, 0.30, 0.10,
                0.70, 0.20, 0.10,
                0.10, 0.10, 0.10;
  const auto m2 = extract_matches(mut, 0.5);
  REQUIRE(m2.size() == 1);
  REQUIRE(m2[0].src == 1);
  REQUIRE(m2[0].dst == 0);
}

TEST_CASE("cycle_losses vanish exactly for a permutation pair", "[matching]") {
  const int n = 5;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  const int perm[5] = {2, 4, 0, 1, 3};
  for (int r = 0; r < n; ++r) p(r, perm[r]) = 1.0;
  const CycleLosses cl = cycle_losses(p, p.transpose());
  REQUIRE(cl.orthogonality == 0.0);
  REQUIRE(cl.bijectivity == 0.0);
}

TEST_CASE("cycle_losses of a half permutation equal 3", "[matching]") {
  const int n = 4;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  const int perm[4] = {1, 3, 0, 2};
  for (int r = 0; r < n; ++r) p(r, perm[r]) = 0.5;
  const CycleLosses cl = cycle_losses(p, p.transpose());
  REQUIRE(cl.orthogonality == Catch::Approx(3.0).margin(1e-12));
  REQUIRE(cl.bijectivity == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("cycle_losses match a brute-force evaluation", "[matching]") {
  Rng rng(26);
  const int n = 6;
  Eigen::MatrixXd s_ij(n, n), s_ji(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      s_ij(r, c) = rng.uniform();
      s_ji(r, c) = rng.uniform();
    }
  }
  const CycleLosses cl = cycle_losses(s_ij, s_ji);

  auto frob_minus_identity = [n](const Eigen::MatrixXd& m) {
    double acc = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double d = m(r, c) - (r == c ? 1.0 : 0.0);
        acc += d * d;
      }
    }
    return std::sqrt(acc);
  };
  const double orth =
      frob_minus_identity(s_ij * s_ij.transpose()) + frob_minus_identity(s_ij.transpose() * s_ij);
  const double bij = frob_minus_identity(s_ij * s_ji) + frob_minus_identity(s_ji * s_ij);
  REQUIRE(cl.orthogonality == Catch::Approx(orth).margin(1e-12));
  REQUIRE(cl.bijectivity == Catch::Approx(bij).margin(1e-12));
}

TEST_CASE("cycle_losses validate their inputs", "[matching]") {
  REQUIRE_THROWS_AS(cycle_losses(Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(4, 4)),
                    DimensionMismatch);
  REQUIRE_THROWS_AS(cycle_losses(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(4, 4)),
                    DimensionMismatch);
}
