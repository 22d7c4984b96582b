#include <atomic>
#include <cstdint>
#include <numeric>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "anchorreg/rng.hpp"
#include "anchorreg/thread_pool.hpp"

using namespace anchorreg;

TEST_CASE("rng reproduces the same stream for the same seed", "[infra]") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  Rng c(42), d(43);
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) {
    if (c.next_u64() != d.next_u64()) all_equal = false;
  }
  REQUIRE_FALSE(all_equal);
}

TEST_CASE("rng uniform stays in range and gaussians are finite", "[infra]") {
  Rng rng(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  REQUIRE(sum / 20000.0 == Catch::Approx(0.5).margin(0.02));
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(std::isfinite(rng.gaussian()));
  }
  for (int i = 0; i < 100; ++i) {
    const int v = rng.uniform_int(3, 9);
    REQUIRE(v >= 3);
    REQUIRE(v <= 9);
  }
}

TEST_CASE("rng rotations are orthonormal", "[infra]") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Matrix3d r = rng.rotation();
    REQUIRE((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(r.determinant() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("hash_seed separates nearby counters", "[infra]") {
  REQUIRE(hash_seed(1, 2, 3) != hash_seed(1, 3, 2));
  REQUIRE(hash_seed(1, 0, 0) != hash_seed(2, 0, 0));
  REQUIRE(hash_seed(5, 7, 9) == hash_seed(5, 7, 9));
}

TEST_CASE("parallel_for covers every index exactly once", "[infra]") {
  ThreadPool pool(4);
  REQUIRE(pool.size() == 4);
  const int n = 10000;
  std::vector<int> hits(n, 0);
  pool.parallel_for(0, n, [&](std::int64_t i) { hits[static_cast<std::size_t>(i)]++; });
  REQUIRE(std::accumulate(hits.begin(), hits.end(), 0) == n);
  REQUIRE(*std::min_element(hits.begin(), hits.end()) == 1);
  REQUIRE(*std::max_element(hits.begin(), hits.end()) == 1);
}

TEST_CASE("parallel_for deposit-by-index reduction matches serial", "[infra]") {
  ThreadPool pool(3);
  const int n = 5000;
  std::vector<double> out(n);
  pool.parallel_for(0, n, [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] = std::sin(static_cast<double>(i)) * 0.25;
  });
  double parallel_sum = 0.0;
  for (double v : out) parallel_sum += v;
  double serial_sum = 0.0;
  for (int i = 0; i < n; ++i) serial_sum += std::sin(static_cast<double>(i)) * 0.25;
  REQUIRE(parallel_sum == serial_sum);
}

TEST_CASE("parallel_for propagates exceptions", "[infra]") {
  ThreadPool pool(2);
  REQUIRE_THROWS_AS(
      pool.parallel_for(0, 100,
                        [&](std::int64_t i) {
                          if (i == 37) throw std::runtime_error("boom");
                        }),
      std::runtime_error);
  std::atomic<int> count{0};
  pool.parallel_for(0, 10, [&](std::int64_t) { count++; });
  REQUIRE(count.load() == 10);
}

TEST_CASE("parallel_for single thread runs inline", "[infra]") {
  ThreadPool pool(1);
  int calls = 0;
  pool.parallel_for(0, 5, [&](std::int64_t) { calls++; });
  REQUIRE(calls == 5);
  pool.parallel_for(5, 5, [&](std::int64_t) { calls++; });
  REQUIRE(calls == 5);
}
