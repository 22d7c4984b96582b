#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchorreg/errors.hpp"
#include "anchorreg/frame.hpp"
#include "anchorreg/pipeline.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

// Per-pair evaluation detail. Inlier counts are over the selected matches of
// that pair; pairs are unordered (src < dst).
struct PairEval {
  int src_frame = 0;
  int dst_frame = 0;
  double rot_err_deg = 0.0;
  double tr_err_cm = 0.0;
  int selected = 0;
  int in3d_1 = 0, in3d_5 = 0, in3d_10 = 0;
  int in2d_1 = 0, in2d_2 = 0, in2d_5 = 0;
};

// Clip-level registration quality. Pose metrics are over all unordered frame
// pairs; correspondence metrics are over the selected matches of every pair.
// Accuracies and inlier rates are percentages; rotation errors are degrees,
// translation errors centimetres.
struct EvalReport {
  std::string clip = "clip";
  double rot_acc5 = 0.0, rot_acc10 = 0.0;
  double rot_mean = 0.0, rot_med = 0.0;
  double tr_acc5 = 0.0, tr_acc10 = 0.0;
  double tr_mean = 0.0, tr_med = 0.0;
  double in3d_1 = 0.0, in3d_5 = 0.0, in3d_10 = 0.0;
  double in2d_1 = 0.0, in2d_2 = 0.0, in2d_5 = 0.0;
  std::vector<PairEval> pairs;
};

struct EvalOptions {
  int max_matches_per_pair = 500;  // top-confidence cap, index breaks ties
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double percent(long long hits, long long total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

// Indices of the up-to-cap highest-confidence matches, ties broken by the
// original index so the selection is deterministic.
inline std::vector<std::size_t> select_top(const std::vector<FineMatch>& matches, int cap) {
  std::vector<std::size_t> order(matches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (matches[a].confidence != matches[b].confidence) {
      return matches[a].confidence > matches[b].confidence;
    }
    return a < b;
  });
  if (cap >= 0 && order.size() > static_cast<std::size_t>(cap)) {
    order.resize(static_cast<std::size_t>(cap));
  }
  return order;
}

}  // namespace detail

// Scores estimated absolute poses and correspondences against ground truth.
// Pose errors are relative (per unordered frame pair), so the gauge of either
// trajectory cancels. Matches without depth on both sides count against the
// inlier rates but can never be inliers.
inline EvalReport evaluate(const std::vector<Pose>& estimates,
                           const std::vector<PairMatches>& matches,
                           const std::vector<Pose>& truth, const Intrinsics& intrinsics,
                           const EvalOptions& opt = {}) {
  if (truth.empty()) throw MissingGroundTruth("evaluate: no ground-truth poses");
  if (truth.size() != estimates.size()) {
    throw MissingGroundTruth("evaluate: ground-truth pose count does not match estimates");
  }
  const int n = static_cast<int>(estimates.size());
  if (n < 2) throw DegenerateInput("evaluate: need at least two frames");

  EvalReport report;
  std::vector<double> rot_errors, tr_errors;
  std::map<FramePair, PairEval> pair_detail;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Pose est_rel = estimates[static_cast<std::size_t>(i)].inverse() *
                           estimates[static_cast<std::size_t>(j)];
      const Pose gt_rel =
          truth[static_cast<std::size_t>(i)].inverse() * truth[static_cast<std::size_t>(j)];
      PairEval pe;
      pe.src_frame = i;
      pe.dst_frame = j;
      pe.rot_err_deg = angular_error_deg(est_rel.rotation(), gt_rel.rotation());
      pe.tr_err_cm = (est_rel.translation() - gt_rel.translation()).norm() * 100.0;
      rot_errors.push_back(pe.rot_err_deg);
      tr_errors.push_back(pe.tr_err_cm);
      pair_detail.emplace(FramePair{i, j}, pe);
    }
  }

  long long selected = 0;
  long long hits3d[3] = {0, 0, 0};
  long long hits2d[3] = {0, 0, 0};
  for (const PairMatches& pm : matches) {
    if (pm.src_frame < 0 || pm.src_frame >= n || pm.dst_frame < 0 || pm.dst_frame >= n) {
      throw DimensionMismatch("evaluate: match pair references a frame outside the clip");
    }
    if (pm.src_frame >= pm.dst_frame) continue;  // unordered pairs, one direction
    PairEval& pe = pair_detail.at({pm.src_frame, pm.dst_frame});
    const Pose gt_rel = truth[static_cast<std::size_t>(pm.src_frame)].inverse() *
                        truth[static_cast<std::size_t>(pm.dst_frame)];
    for (const std::size_t k : detail::select_top(pm.matches, opt.max_matches_per_pair)) {
      const FineMatch& m = pm.matches[k];
      ++pe.selected;
      ++selected;
      if (!m.has_points) continue;
      const Eigen::Vector3d mapped = gt_rel * m.dst_point;
      const double err3 = (m.src_point - mapped).norm();
      if (err3 <= 0.01) {
        ++pe.in3d_1;
        ++hits3d[0];
      }
      if (err3 <= 0.05) {
        ++pe.in3d_5;
        ++hits3d[1];
      }
      if (err3 <= 0.10) {
        ++pe.in3d_10;
        ++hits3d[2];
      }
      if (mapped.z() > 0.0) {
        const double err2 = (intrinsics.project(mapped) - m.src_px).norm();
        if (err2 <= 1.0) {
          ++pe.in2d_1;
          ++hits2d[0];
        }
        if (err2 <= 2.0) {
          ++pe.in2d_2;
          ++hits2d[1];
        }
        if (err2 <= 5.0) {
          ++pe.in2d_5;
          ++hits2d[2];
        }
      }
    }
  }

  const long long pair_count = static_cast<long long>(rot_errors.size());
  long long rot5 = 0, rot10 = 0, tr5 = 0, tr10 = 0;
  for (const double e : rot_errors) {
    if (e <= 5.0) ++rot5;
    if (e <= 10.0) ++rot10;
  }
  for (const double e : tr_errors) {
    if (e <= 5.0) ++tr5;
    if (e <= 10.0) ++tr10;
  }
  report.rot_acc5 = detail::percent(rot5, pair_count);
  report.rot_acc10 = detail::percent(rot10, pair_count);
  report.rot_mean = detail::mean_of(rot_errors);
  report.rot_med = detail::median_of(rot_errors);
  report.tr_acc5 = detail::percent(tr5, pair_count);
  report.tr_acc10 = detail::percent(tr10, pair_count);
  report.tr_mean = detail::mean_of(tr_errors);
  report.tr_med = detail::median_of(tr_errors);
  report.in3d_1 = detail::percent(hits3d[0], selected);
  report.in3d_5 = detail::percent(hits3d[1], selected);
  report.in3d_10 = detail::percent(hits3d[2], selected);
  report.in2d_1 = detail::percent(hits2d[0], selected);
  report.in2d_2 = detail::percent(hits2d[1], selected);
  report.in2d_5 = detail::percent(hits2d[2], selected);
  for (const auto& [pair, pe] : pair_detail) report.pairs.push_back(pe);
  return report;
}

// One CSV row per clip; the header names match the report fields in order.
inline std::string report_csv_header() {
  return "clip,rot_acc5,rot_acc10,rot_mean,rot_med,tr_acc5,tr_acc10,tr_mean,tr_med,"
         "in3d_1,in3d_5,in3d_10,in2d_1,in2d_2,in2d_5";
}

inline std::string report_csv_row(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                r.clip.c_str(), r.rot_acc5, r.rot_acc10, r.rot_mean, r.rot_med, r.tr_acc5,
                r.tr_acc10, r.tr_mean, r.tr_med, r.in3d_1, r.in3d_5, r.in3d_10, r.in2d_1,
                r.in2d_2, r.in2d_5);
  return std::string(buf);
}

inline void write_report_csv(const std::string& path, const std::vector<EvalReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("write_report_csv: cannot open " + path);
  out << report_csv_header() << '\n';
  for (const EvalReport& r : reports) out << report_csv_row(r) << '\n';
  if (!out) throw IoError("write_report_csv: write failed for " + path);
}

inline void write_report_json(const std::string& path, const EvalReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const PairEval& pe : r.pairs) {
    pairs.push_back({{"src_frame", pe.src_frame},
                     {"dst_frame", pe.dst_frame},
                     {"rot_err_deg", pe.rot_err_deg},
                     {"tr_err_cm", pe.tr_err_cm},
                     {"selected", pe.selected},
                     {"in3d", {pe.in3d_1, pe.in3d_5, pe.in3d_10}},
                     {"in2d", {pe.in2d_1, pe.in2d_2, pe.in2d_5}}});
  }
  const nlohmann::json doc = {{"clip", r.clip},
                              {"rot_acc5", r.rot_acc5},
                              {"rot_acc10", r.rot_acc10},
                              {"rot_mean", r.rot_mean},
                              {"rot_med", r.rot_med},
                              {"tr_acc5", r.tr_acc5},
                              {"tr_acc10", r.tr_acc10},
                              {"tr_mean", r.tr_mean},
                              {"tr_med", r.tr_med},
                              {"in3d_1", r.in3d_1},
                              {"in3d_5", r.in3d_5},
                              {"in3d_10", r.in3d_10},
                              {"in2d_1", r.in2d_1},
                              {"in2d_2", r.in2d_2},
                              {"in2d_5", r.in2d_5},
                              {"pairs", pairs}};
  std::ofstream out(path);
  if (!out) throw IoError("write_report_json: cannot open " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write_report_json: write failed for " + path);
}

inline constexpr const char* kMatchFileVersion = "anchorreg-matches-v1";

// Correspondence dump: per ordered pair the cell matches as [src, dst,
// confidence] triples with the matched pixel locations alongside. 3D points
// are not stored; they re-derive from the clip's depth maps on load.
inline void write_matches(const std::string& path, const std::vector<PairMatches>& matches) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const PairMatches& pm : matches) {
    nlohmann::json cells = nlohmann::json::array();
    nlohmann::json px = nlohmann::json::array();
    for (const FineMatch& m : pm.matches) {
      cells.push_back({m.src_cell, m.dst_cell, m.confidence});
      px.push_back({m.src_px.x(), m.src_px.y(), m.dst_px.x(), m.dst_px.y()});
    }
    pairs.push_back({{"src_frame", pm.src_frame},
                     {"dst_frame", pm.dst_frame},
                     {"matches", cells},
                     {"px", px}});
  }
  const nlohmann::json doc = {{"version", kMatchFileVersion}, {"pairs", pairs}};
  std::ofstream out(path);
  if (!out) throw IoError("write_matches: cannot open " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write_matches: write failed for " + path);
}

// Reloads a correspondence dump against the clip it was produced from. Depth
// validity and 3D points are recomputed from the frames, which reproduces the
// in-memory matches exactly (pixel coordinates round-trip bit-exact).
inline std::vector<PairMatches> read_matches(const std::string& path,
                                             const std::vector<Frame>& frames) {
  std::ifstream in(path);
  if (!in) throw IoError("read_matches: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
    if (doc.at("version").get<std::string>() != kMatchFileVersion) {
      throw IoError("read_matches: unsupported file version in " + path);
    }
    std::vector<PairMatches> out;
    for (const nlohmann::json& jp : doc.at("pairs")) {
      PairMatches pm;
      pm.src_frame = jp.at("src_frame").get<int>();
      pm.dst_frame = jp.at("dst_frame").get<int>();
      const int n = static_cast<int>(frames.size());
      if (pm.src_frame < 0 || pm.src_frame >= n || pm.dst_frame < 0 || pm.dst_frame >= n) {
        throw IoError("read_matches: pair references a frame outside the clip");
      }
      const nlohmann::json& cells = jp.at("matches");
      const nlohmann::json& px = jp.at("px");
      if (cells.size() != px.size()) {
        throw IoError("read_matches: matches/px length mismatch in " + path);
      }
      const Frame& src = frames[static_cast<std::size_t>(pm.src_frame)];
      const Frame& dst = frames[static_cast<std::size_t>(pm.dst_frame)];
      for (std::size_t k = 0; k < cells.size(); ++k) {
        FineMatch m;
        m.src_cell = cells[k].at(0).get<int>();
        m.dst_cell = cells[k].at(1).get<int>();
        m.confidence = cells[k].at(2).get<double>();
        m.src_px = {px[k].at(0).get<double>(), px[k].at(1).get<double>()};
        m.dst_px = {px[k].at(2).get<double>(), px[k].at(3).get<double>()};
        m.has_points = src.depth_valid(m.src_px) && dst.depth_valid(m.dst_px);
        if (m.has_points) {
          m.src_point = backproject(src, m.src_px);
          m.dst_point = backproject(dst, m.dst_px);
        }
        pm.matches.push_back(m);
      }
      out.push_back(std::move(pm));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("read_matches: " + path + ": " + e.what());
  }
}

}  // namespace anchorreg
