#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "anchorreg/errors.hpp"

namespace anchorreg {

// Pipeline settings, loadable from a key=value text file ('#' starts a
// comment). Every key below is accepted verbatim; anything else is an error.
struct PipelineConfig {
  int inner_iters = 20;
  int outer_iters = 3;
  double epsilon = 0.1;
  int sinkhorn_iters = 30;
  double slack_score = 0.0;
  double sigma_d = 0.6;
  double sigma_rs = 0.3;
  int window = 5;
  int min_anchors = 8;
  double reproj_reject = 4.0;
  int gru_hidden = 32;
  std::uint64_t seed = 7;
  int frame_count = 6;
  int frame_stride = 20;
  int target_size = 0;  // 0 keeps the native resolution
  int oracle_dim = 32;
  std::string descriptor = "patch";
  std::string weights_file;
  bool use_spatial_coherence = true;  // ablation switch for the matching affinity
  bool use_geometric_cost = true;     // ablation switch for the epipolar penalty

  void validate() const {
    if (inner_iters < 1 || outer_iters < 1) {
      throw DegenerateInput("PipelineConfig: iteration counts must be positive");
    }
    if (!(epsilon > 0.0) || sinkhorn_iters < 1) {
      throw DegenerateInput("PipelineConfig: bad transport settings");
    }
    if (!(sigma_d > 0.0) || !(sigma_rs > 0.0)) {
      throw DegenerateInput("PipelineConfig: sigmas must be positive");
    }
    if (window < 1 || window % 2 == 0) {
      throw DegenerateInput("PipelineConfig: window must be odd and positive");
    }
    if (min_anchors < 3) throw DegenerateInput("PipelineConfig: min_anchors must be at least 3");
    if (!(reproj_reject > 0.0)) throw DegenerateInput("PipelineConfig: reproj_reject must be positive");
    if (gru_hidden < 1) throw DegenerateInput("PipelineConfig: gru_hidden must be positive");
    if (frame_count < 0 || frame_stride < 1) {
      throw DegenerateInput("PipelineConfig: bad frame sampling");
    }
    if (target_size < 0) throw DegenerateInput("PipelineConfig: target_size must be nonnegative");
    if (oracle_dim < 2) throw DegenerateInput("PipelineConfig: oracle_dim must be at least 2");
    if (descriptor != "patch" && descriptor != "oracle") {
      throw DegenerateInput("PipelineConfig: descriptor must be 'patch' or 'oracle'");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out;
  in >> out;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw DegenerateInput("config: bad value for key '" + key + "': " + value);
  }
  return out;
}

}  // namespace detail

// Applies one key=value assignment; unknown keys are an error so typos cannot
// silently fall back to defaults.
inline void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                               const std::string& value) {
  if (key == "inner_iters") cfg.inner_iters = detail::parse_number<int>(key, value);
  else if (key == "outer_iters") cfg.outer_iters = detail::parse_number<int>(key, value);
  else if (key == "epsilon") cfg.epsilon = detail::parse_number<double>(key, value);
  else if (key == "sinkhorn_iters") cfg.sinkhorn_iters = detail::parse_number<int>(key, value);
  else if (key == "slack_score") cfg.slack_score = detail::parse_number<double>(key, value);
  else if (key == "sigma_d") cfg.sigma_d = detail::parse_number<double>(key, value);
  else if (key == "sigma_rs") cfg.sigma_rs = detail::parse_number<double>(key, value);
  else if (key == "window") cfg.window = detail::parse_number<int>(key, value);
  else if (key == "min_anchors") cfg.min_anchors = detail::parse_number<int>(key, value);
  else if (key == "reproj_reject") cfg.reproj_reject = detail::parse_number<double>(key, value);
  else if (key == "gru_hidden") cfg.gru_hidden = detail::parse_number<int>(key, value);
  else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(key, value);
  else if (key == "frame_count") cfg.frame_count = detail::parse_number<int>(key, value);
  else if (key == "frame_stride") cfg.frame_stride = detail::parse_number<int>(key, value);
  else if (key == "target_size") cfg.target_size = detail::parse_number<int>(key, value);
  else if (key == "oracle_dim") cfg.oracle_dim = detail::parse_number<int>(key, value);
  else if (key == "descriptor") cfg.descriptor = value;
  else if (key == "weights_file") cfg.weights_file = value;
  else if (key == "use_spatial_coherence") cfg.use_spatial_coherence = detail::parse_number<int>(key, value) != 0;
  else if (key == "use_geometric_cost") cfg.use_geometric_cost = detail::parse_number<int>(key, value) != 0;
  else throw DegenerateInput("config: unknown key '" + key + "'");
}

inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DegenerateInput("config: line " + std::to_string(line_no) + " is not key=value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      throw DegenerateInput("config: empty key on line " + std::to_string(line_no));
    }
    apply_config_entry(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

}  // namespace anchorreg
