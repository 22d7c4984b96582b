#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace anchorreg {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Mixes counters into a seed so per-item streams (frame, cell, pair, ...) are
// independent of evaluation order and thread count.
inline std::uint64_t hash_seed(std::uint64_t seed, std::uint64_t a = 0,
                               std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = seed;
  std::uint64_t h = splitmix64(s);
  s = h ^ (a * 0xd6e8feb86659fd93ULL);
  h = splitmix64(s);
  s = h ^ (b * 0xa0761d6478bd642fULL);
  h = splitmix64(s);
  s = h ^ (c * 0xe7037ed1a0b428dbULL);
  return splitmix64(s);
}

// Deterministic generator. mt19937_64 has a standard-specified bit sequence;
// the float/gaussian mappings below are hand-rolled because the std
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] via rejection sampling.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
  }

  double gaussian() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Eigen::Vector3d gaussian3() {
    const double a = gaussian(), b = gaussian(), c = gaussian();
    return {a, b, c};
  }

  Eigen::VectorXd gaussian_vector(int n, double sigma = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = sigma * gaussian();
    return v;
  }

  Eigen::MatrixXd gaussian_matrix(int rows, int cols, double sigma = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = sigma * gaussian();
    return m;
  }

  Eigen::Vector3d unit3() {
    Eigen::Vector3d v;
    do {
      v = gaussian3();
    } while (v.norm() < 1e-12);
    return v.normalized();
  }

  Eigen::VectorXd unit_vector(int n) {
    Eigen::VectorXd v(n);
    double norm;
    do {
      for (int i = 0; i < n; ++i) v[i] = gaussian();
      norm = v.norm();
    } while (norm < 1e-12);
    return v / norm;
  }

  // Haar-uniform rotation via a normalized gaussian quaternion.
  Eigen::Matrix3d rotation() {
    Eigen::Quaterniond q;
    double norm;
    do {
      q = Eigen::Quaterniond(gaussian(), gaussian(), gaussian(), gaussian());
      norm = q.norm();
    } while (norm < 1e-12);
    q.coeffs() /= norm;
    return q.toRotationMatrix();
  }

  // Rotation by a fixed angle about a uniformly random axis.
  Eigen::Matrix3d rotation_with_angle(double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, unit3()).toRotationMatrix();
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace anchorreg
