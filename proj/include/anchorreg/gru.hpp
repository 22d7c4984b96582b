#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "anchorreg/errors.hpp"
#include "anchorreg/rng.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

// Recurrent pose-update cell: a standard GRU over a per-pair summary vector,
// followed by a linear head emitting a 6D-rotation + translation delta. The
// head is zero with an identity-encoding bias by default, so a fresh cell
// always produces no-op updates.
struct GruState {
  Eigen::VectorXd hidden;
  Eigen::MatrixXd w_z, w_r, w_h;  // each hidden x (hidden + input)
  Eigen::VectorXd b_z, b_r, b_h;
  Eigen::MatrixXd w_out;  // 9 x hidden
  Eigen::VectorXd b_out;  // 9, encodes the identity delta

  int hidden_dim() const { return static_cast<int>(hidden.size()); }
  int input_dim() const { return static_cast<int>(w_z.cols() - w_z.rows()); }

  static Eigen::VectorXd identity_output_bias() {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(9);
    b[0] = 1.0;
    b[4] = 1.0;
    return b;
  }

  static GruState zeros(int hidden_dim, int input_dim) {
    if (hidden_dim < 1 || input_dim < 1) {
      throw DegenerateInput("GruState: dimensions must be positive");
    }
    GruState s;
    s.hidden = Eigen::VectorXd::Zero(hidden_dim);
    s.w_z = Eigen::MatrixXd::Zero(hidden_dim, hidden_dim + input_dim);
    s.w_r = s.w_z;
    s.w_h = s.w_z;
    s.b_z = Eigen::VectorXd::Zero(hidden_dim);
    s.b_r = s.b_z;
    s.b_h = s.b_z;
    s.w_out = Eigen::MatrixXd::Zero(9, hidden_dim);
    s.b_out = identity_output_bias();
    return s;
  }

  // Random gate weights at Xavier scale; the output head stays zero so the
  // cell starts as a no-op regardless of the seed.
  static GruState seeded(int hidden_dim, int input_dim, std::uint64_t seed) {
    GruState s = zeros(hidden_dim, input_dim);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim + input_dim));
    s.w_z = scale * rng.gaussian_matrix(hidden_dim, hidden_dim + input_dim);
    s.w_r = scale * rng.gaussian_matrix(hidden_dim, hidden_dim + input_dim);
    s.w_h = scale * rng.gaussian_matrix(hidden_dim, hidden_dim + input_dim);
    return s;
  }

  void validate() const {
    const Eigen::Index h = hidden.size();
    const Eigen::Index cols = w_z.cols();
    if (h < 1 || cols <= h) throw DimensionMismatch("GruState: bad gate dimensions");
    for (const Eigen::MatrixXd* w : {&w_z, &w_r, &w_h}) {
      if (w->rows() != h || w->cols() != cols) {
        throw DimensionMismatch("GruState: gate weight shapes disagree");
      }
    }
    for (const Eigen::VectorXd* b : {&b_z, &b_r, &b_h}) {
      if (b->size() != h) throw DimensionMismatch("GruState: gate bias shapes disagree");
    }
    if (w_out.rows() != 9 || w_out.cols() != h || b_out.size() != 9) {
      throw DimensionMismatch("GruState: output head shapes disagree");
    }
  }
};

namespace detail {

inline Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace detail

// One GRU update: advances the hidden state in place and returns the decoded
// pose delta from the output head.
inline PoseDelta6D gru_step(GruState& state, const Eigen::VectorXd& input) {
  state.validate();
  if (input.size() != state.input_dim()) {
    throw DimensionMismatch("gru_step: input dimension does not match the cell");
  }
  if (!input.allFinite()) throw NumericalError("gru_step: input must be finite");

  const Eigen::Index h = state.hidden.size();
  Eigen::VectorXd joint(h + input.size());
  joint << state.hidden, input;
  const Eigen::VectorXd z = detail::sigmoid(state.w_z * joint + state.b_z);
  const Eigen::VectorXd r = detail::sigmoid(state.w_r * joint + state.b_r);
  Eigen::VectorXd gated(h + input.size());
  gated << r.cwiseProduct(state.hidden), input;
  const Eigen::VectorXd candidate = (state.w_h * gated + state.b_h).array().tanh();
  state.hidden = z.cwiseProduct(state.hidden) + (Eigen::VectorXd::Ones(h) - z).cwiseProduct(candidate);

  const Eigen::VectorXd out = state.w_out * state.hidden + state.b_out;
  PoseDelta6D delta;
  delta.rot6d = out.head<6>();
  delta.trans = out.tail<3>();
  return delta;
}

}  // namespace anchorreg
