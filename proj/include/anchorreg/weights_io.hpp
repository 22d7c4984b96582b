#pragma once

#include <fstream>
#include <map>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "anchorreg/coherence.hpp"
#include "anchorreg/errors.hpp"
#include "anchorreg/gru.hpp"

namespace anchorreg {

inline constexpr const char* kTensorFileVersion = "anchorreg-tensors-v1";

// Named dense tensors; vectors are stored as n x 1 matrices.
using TensorMap = std::map<std::string, Eigen::MatrixXd>;

inline void save_tensors(const std::string& path, const TensorMap& tensors) {
  nlohmann::json root;
  root["version"] = kTensorFileVersion;
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [name, m] : tensors) {
    nlohmann::json entry;
    entry["rows"] = m.rows();
    entry["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    entry["data"] = std::move(data);
    entries[name] = std::move(entry);
  }
  root["tensors"] = std::move(entries);

  std::ofstream out(path);
  if (!out) throw IoError("save_tensors: cannot open " + path);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("save_tensors: write failed for " + path);
}

inline TensorMap load_tensors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_tensors: cannot open " + path);
  nlohmann::json root;
  try {
    in >> root;
    if (root.at("version").get<std::string>() != kTensorFileVersion) {
      throw IoError("load_tensors: unsupported version in " + path);
    }
    TensorMap tensors;
    for (const auto& [name, entry] : root.at("tensors").items()) {
      const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
      const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
      const auto& data = entry.at("data");
      if (rows < 0 || cols < 0 ||
          static_cast<std::size_t>(rows * cols) != data.size()) {
        throw IoError("load_tensors: shape does not match data for tensor " + name);
      }
      Eigen::MatrixXd m(rows, cols);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
      }
      tensors[name] = std::move(m);
    }
    return tensors;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_tensors: malformed tensor file " + path + ": " + e.what());
  }
}

namespace detail {

inline const Eigen::MatrixXd& named_tensor(const TensorMap& tensors, const std::string& name) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("tensor file is missing array '" + name + "'");
  return it->second;
}

inline Eigen::VectorXd named_vector(const TensorMap& tensors, const std::string& name) {
  const Eigen::MatrixXd& m = named_tensor(tensors, name);
  if (m.cols() != 1) throw IoError("tensor '" + name + "' must be a column vector");
  return m.col(0);
}

}  // namespace detail

inline TensorMap attention_to_tensors(const AttentionWeights& w) {
  return {{"W_Q", w.w_q}, {"W_K", w.w_k}, {"W_V", w.w_v}, {"W_R", w.w_r}};
}

inline AttentionWeights attention_from_tensors(const TensorMap& tensors) {
  AttentionWeights w;
  w.w_q = detail::named_tensor(tensors, "W_Q");
  w.w_k = detail::named_tensor(tensors, "W_K");
  w.w_v = detail::named_tensor(tensors, "W_V");
  w.w_r = detail::named_tensor(tensors, "W_R");
  try {
    w.validate();
  } catch (const Error& e) {
    throw IoError(std::string("attention tensors are inconsistent: ") + e.what());
  }
  return w;
}

// The GRU template stores weights only; the hidden state always starts at
// zero when instantiated.
inline TensorMap gru_to_tensors(const GruState& s) {
  return {{"gru_W_z", s.w_z}, {"gru_W_r", s.w_r},     {"gru_W_h", s.w_h},
          {"gru_b_z", s.b_z}, {"gru_b_r", s.b_r},     {"gru_b_h", s.b_h},
          {"gru_W_out", s.w_out}, {"gru_b_out", s.b_out}};
}

inline GruState gru_from_tensors(const TensorMap& tensors) {
  GruState s;
  s.w_z = detail::named_tensor(tensors, "gru_W_z");
  s.w_r = detail::named_tensor(tensors, "gru_W_r");
  s.w_h = detail::named_tensor(tensors, "gru_W_h");
  s.b_z = detail::named_vector(tensors, "gru_b_z");
  s.b_r = detail::named_vector(tensors, "gru_b_r");
  s.b_h = detail::named_vector(tensors, "gru_b_h");
  s.w_out = detail::named_tensor(tensors, "gru_W_out");
  s.b_out = detail::named_vector(tensors, "gru_b_out");
  s.hidden = Eigen::VectorXd::Zero(s.w_z.rows());
  try {
    s.validate();
  } catch (const Error& e) {
    throw IoError(std::string("gru tensors are inconsistent: ") + e.what());
  }
  return s;
}

}  // namespace anchorreg
