#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "anchorreg/anchor_refine.hpp"
#include "anchorreg/coherence.hpp"
#include "anchorreg/config.hpp"
#include "anchorreg/errors.hpp"
#include "anchorreg/features.hpp"
#include "anchorreg/frame.hpp"
#include "anchorreg/gru.hpp"
#include "anchorreg/kabsch.hpp"
#include "anchorreg/match_sync.hpp"
#include "anchorreg/matching.hpp"
#include "anchorreg/pose_sync.hpp"
#include "anchorreg/se3.hpp"
#include "anchorreg/synthetic.hpp"
#include "anchorreg/thread_pool.hpp"
#include "anchorreg/weights_io.hpp"

namespace anchorreg {

using FramePair = std::pair<int, int>;

constexpr int kGruInputDim = 12;  // 6D rot + 3 trans + residual, inlier, confidence summaries

// Wall-clock accumulator for the bench subcommand. add() runs only on the
// coordinating thread; parallel sections are timed as a whole.
struct StageTimers {
  std::vector<std::pair<std::string, double>> stages;  // insertion order preserved

  void add(const std::string& name, double seconds) {
    for (auto& entry : stages) {
      if (entry.first == name) {
        entry.second += seconds;
        return;
      }
    }
    stages.emplace_back(name, seconds);
  }

  double total() const {
    double sum = 0.0;
    for (const auto& entry : stages) sum += entry.second;
    return sum;
  }
};

namespace detail {

class StageClock {
 public:
  StageClock(StageTimers* timers, const char* name) : timers_(timers), name_(name) {
    if (timers_) start_ = std::chrono::steady_clock::now();
  }
  ~StageClock() {
    if (!timers_) return;
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    timers_->add(name_, std::chrono::duration<double>(elapsed).count());
  }
  StageClock(const StageClock&) = delete;
  StageClock& operator=(const StageClock&) = delete;

 private:
  StageTimers* timers_;
  const char* name_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// One fine-grid correspondence between an ordered frame pair. Pixel locations
// are absolute; the 3D points are camera-space back-projections and are only
// present when both pixels carry valid depth.
struct FineMatch {
  int src_cell = -1;
  int dst_cell = -1;
  Eigen::Vector2d src_px = Eigen::Vector2d::Zero();
  Eigen::Vector2d dst_px = Eigen::Vector2d::Zero();
  bool has_points = false;
  Eigen::Vector3d src_point = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst_point = Eigen::Vector3d::Zero();
  double confidence = 0.0;
  double affinity = 0.0;  // score that backs the alignment weight
};

struct PairMatches {
  int src_frame = -1;
  int dst_frame = -1;
  std::vector<FineMatch> matches;
};

struct ClipState {
  std::vector<Pose> poses;               // world-from-frame
  std::map<FramePair, Pose> pairwise;    // (src, dst) -> maps dst camera coords into src
  std::map<FramePair, double> weights;   // synchronization confidence per ordered pair
  AnchorSet anchors;
  std::vector<PairMatches> matches;      // ordered by (src, dst)
  std::vector<double> loss_history;      // one entry per completed outer iteration
  int inner_iter = 0;
  int outer_iter = 0;
};

struct PipelineContext {
  PipelineConfig config;
  std::vector<DescriptorSet> descriptors;  // per frame
  AttentionWeights attention;
  std::map<FramePair, GruState> gru;       // per ordered pair, weights shared
  ThreadPool* pool = nullptr;              // optional; serial when absent
  StageTimers* timers = nullptr;           // optional

  CoherenceConfig coherence() const {
    CoherenceConfig cfg;
    cfg.sigma_d = config.sigma_d;
    cfg.sigma_rs = config.sigma_rs;
    cfg.window = config.window;
    return cfg;
  }
};

namespace detail {

inline std::vector<FramePair> ordered_pairs(int frame_count) {
  std::vector<FramePair> pairs;
  pairs.reserve(static_cast<std::size_t>(frame_count) * (frame_count - 1));
  for (int i = 0; i < frame_count; ++i) {
    for (int j = 0; j < frame_count; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

inline void run_indexed(ThreadPool* pool, std::int64_t count,
                        const std::function<void(std::int64_t)>& fn) {
  if (pool) {
    pool->parallel_for(0, count, fn);
  } else {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
  }
}

inline bool same_intrinsics(const Intrinsics& a, const Intrinsics& b) {
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width &&
         a.height == b.height;
}

}  // namespace detail

inline PipelineContext make_context(const std::vector<Frame>& frames, const PipelineConfig& config,
                                    ThreadPool* pool = nullptr,
                                    const SyntheticScene* scene = nullptr,
                                    StageTimers* timers = nullptr) {
  config.validate();
  const int frame_count = static_cast<int>(frames.size());
  if (frame_count < 2) throw DegenerateInput("make_context: need at least two frames");
  for (const Frame& f : frames) f.validate();
  for (const Frame& f : frames) {
    if (!detail::same_intrinsics(f.intrinsics, frames.front().intrinsics)) {
      throw DimensionMismatch("make_context: frames must share intrinsics");
    }
  }
  if (config.descriptor == "oracle") {
    if (!scene) throw DegenerateInput("make_context: oracle descriptor needs a scene");
    if (scene->frame_count() != frame_count) {
      throw DimensionMismatch("make_context: scene frame count does not match the clip");
    }
  }

  PipelineContext ctx;
  ctx.config = config;
  ctx.pool = pool;
  ctx.timers = timers;

  {
    detail::StageClock clock(timers, "descriptors");
    ctx.descriptors.resize(static_cast<std::size_t>(frame_count));
    OracleOptions oracle_opt;
    oracle_opt.dim = config.oracle_dim;
    detail::run_indexed(pool, frame_count, [&](std::int64_t i) {
      const auto f = static_cast<std::size_t>(i);
      if (config.descriptor == "oracle") {
        ctx.descriptors[f] = oracle_descriptor(*scene, static_cast<int>(i), oracle_opt);
      } else {
        ctx.descriptors[f] = patch_descriptor(frames[f]);
      }
    });
  }

  const int fine_dim = ctx.descriptors.front().fine.dim();
  if (config.weights_file.empty()) {
    ctx.attention = AttentionWeights::seeded(fine_dim, config.seed);
  } else {
    const TensorMap tensors = load_tensors(config.weights_file);
    ctx.attention = attention_from_tensors(tensors);
    if (ctx.attention.w_q.rows() != fine_dim) {
      throw DimensionMismatch("make_context: attention weights do not match the descriptor dim");
    }
  }

  GruState gru_template;
  if (config.weights_file.empty()) {
    gru_template = GruState::seeded(config.gru_hidden, kGruInputDim, config.seed + 1);
  } else {
    gru_template = gru_from_tensors(load_tensors(config.weights_file));
    if (gru_template.w_z.cols() != gru_template.hidden.size() + kGruInputDim) {
      throw DimensionMismatch("make_context: GRU weights do not match the input layout");
    }
  }
  for (const FramePair& pair : detail::ordered_pairs(frame_count)) ctx.gru[pair] = gru_template;
  return ctx;
}

inline ClipState initial_state(int frame_count) {
  if (frame_count < 2) throw DegenerateInput("initial_state: need at least two frames");
  ClipState state;
  state.poses.assign(static_cast<std::size_t>(frame_count), Pose());
  for (const FramePair& pair : detail::ordered_pairs(frame_count)) {
    state.pairwise[pair] = Pose();
    state.weights[pair] = 0.0;
  }
  return state;
}

// Weighted residual of the estimated correspondences under the estimated
// alignment, summed over ordered pairs. Matches without depth do not
// contribute.
inline double registration_loss(const std::vector<PairMatches>& matches,
                                const std::vector<Pose>& poses) {
  const int frame_count = static_cast<int>(poses.size());
  double loss = 0.0;
  for (const PairMatches& pm : matches) {
    if (pm.src_frame < 0 || pm.src_frame >= frame_count || pm.dst_frame < 0 ||
        pm.dst_frame >= frame_count) {
      throw DimensionMismatch("registration_loss: match frame id out of range");
    }
    const Pose rel = poses[static_cast<std::size_t>(pm.src_frame)].inverse() *
                     poses[static_cast<std::size_t>(pm.dst_frame)];
    for (const FineMatch& m : pm.matches) {
      if (!m.has_points) continue;
      loss += m.confidence * (m.src_point - rel * m.dst_point).squaredNorm();
    }
  }
  return loss;
}

namespace detail {

struct WindowCells {
  WindowFeatures win;
  std::vector<bool> valid;              // depth valid per slot
  std::vector<Eigen::Vector3d> point;   // camera coords, zero when invalid
  std::vector<Eigen::VectorXd> profile; // anchor-distance profile, valid slots only
  Eigen::MatrixXd mixed;                // attention output per slot
};

inline WindowCells window_cells(const Frame& frame, const FeatureGrid& fine,
                                const Eigen::Vector2d& center,
                                const std::vector<Eigen::Vector3d>& anchor_points,
                                const AttentionWeights& attention, const CoherenceConfig& cfg) {
  WindowCells out;
  out.win = crop_window(fine, center, cfg.window);
  const int n = out.win.size();
  const int dim = fine.dim();
  out.valid.assign(static_cast<std::size_t>(n), false);
  out.point.assign(static_cast<std::size_t>(n), Eigen::Vector3d::Zero());
  out.profile.resize(static_cast<std::size_t>(n));

  Eigen::MatrixXd embeddings = Eigen::MatrixXd::Zero(n, dim);
  for (int k = 0; k < n; ++k) {
    const auto slot = static_cast<std::size_t>(k);
    const Eigen::Vector2d& px = out.win.px[slot];
    if (!frame.depth_valid(px)) continue;  // matchable in 2D, excluded from 3D costs
    out.valid[slot] = true;
    out.point[slot] = backproject(frame, px);
    out.profile[slot] = anchor_distances(out.point[slot], anchor_points);
    embeddings.row(k) = rho_embedding(out.profile[slot].mean(), dim, cfg);
  }
  out.mixed = anchor_attention(out.win.feats, embeddings, attention);
  return out;
}

struct PairOutcome {
  PairMatches matches;
  Pose pose;
  double weight = 0.0;
};

// Fine matching, alignment, and the recurrent pose update for one ordered
// pair. Failures (too few 3D matches, degenerate alignment) zero the pair's
// synchronization weight and keep its previous pose.
inline PairOutcome update_pair(const std::vector<Frame>& frames, PipelineContext& ctx,
                               const ClipState& state, const FramePair& pair,
                               const std::vector<std::vector<Eigen::Vector3d>>& anchor_points) {
  const auto [i, j] = pair;
  const Frame& frame_i = frames[static_cast<std::size_t>(i)];
  const Frame& frame_j = frames[static_cast<std::size_t>(j)];
  const FeatureGrid& fine_i = ctx.descriptors[static_cast<std::size_t>(i)].fine;
  const FeatureGrid& fine_j = ctx.descriptors[static_cast<std::size_t>(j)].fine;
  const CoherenceConfig ccfg = ctx.coherence();
  const Pose prev = state.pairwise.at(pair);

  std::vector<FineMatch> candidates;
  for (int a = 0; a < state.anchors.count(); ++a) {
    const auto ai = static_cast<std::size_t>(a);
    const WindowCells src = window_cells(
        frame_i, fine_i, state.anchors.px[ai][static_cast<std::size_t>(i)],
        anchor_points[static_cast<std::size_t>(i)], ctx.attention, ccfg);
    const WindowCells dst = window_cells(
        frame_j, fine_j, state.anchors.px[ai][static_cast<std::size_t>(j)],
        anchor_points[static_cast<std::size_t>(j)], ctx.attention, ccfg);
    const int nr = src.win.size();
    const int ns = dst.win.size();

    const bool pure_rotation = prev.translation().norm() < 1e-9;
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(nr, ns);
    if (ctx.config.use_geometric_cost) {
      for (int r = 0; r < nr; ++r) {
        for (int s = 0; s < ns; ++s) {
          const auto rr = static_cast<std::size_t>(r);
          const auto ss = static_cast<std::size_t>(s);
          if (src.valid[rr] && dst.valid[ss]) {
            gamma(r, s) = geometric_cost(src.point[rr], dst.point[ss], src.win.px[rr],
                                         dst.win.px[ss], prev, frame_i.intrinsics,
                                         frame_j.intrinsics);
          } else if (!pure_rotation) {
            gamma(r, s) = sampson_cost(src.win.px[rr], dst.win.px[ss], prev, frame_i.intrinsics,
                                       frame_j.intrinsics);
          }
        }
      }
      gamma = normalize_costs(gamma);
    }

    Eigen::MatrixXd affinity = src.mixed * dst.mixed.transpose();
    for (int r = 0; r < nr; ++r) {
      for (int s = 0; s < ns; ++s) {
        double eta = 0.0;
        if (ctx.config.use_spatial_coherence && src.valid[static_cast<std::size_t>(r)] &&
            dst.valid[static_cast<std::size_t>(s)]) {
          eta = profile_coherence(src.profile[static_cast<std::size_t>(r)],
                                  dst.profile[static_cast<std::size_t>(s)], ccfg);
        }
        affinity(r, s) = fine_affinity(affinity(r, s), eta, gamma(r, s));
      }
    }

    const SoftMatch soft = sinkhorn(affinity, ctx.config.epsilon, ctx.config.sinkhorn_iters,
                                    ctx.config.slack_score);
    for (const Correspondence& c : extract_matches(soft)) {
      FineMatch m;
      m.src_cell = src.win.cell_indices[static_cast<std::size_t>(c.src)];
      m.dst_cell = dst.win.cell_indices[static_cast<std::size_t>(c.dst)];
      m.src_px = src.win.px[static_cast<std::size_t>(c.src)];
      m.dst_px = dst.win.px[static_cast<std::size_t>(c.dst)];
      m.has_points =
          src.valid[static_cast<std::size_t>(c.src)] && dst.valid[static_cast<std::size_t>(c.dst)];
      if (m.has_points) {
        m.src_point = src.point[static_cast<std::size_t>(c.src)];
        m.dst_point = dst.point[static_cast<std::size_t>(c.dst)];
      }
      m.confidence = c.confidence;
      m.affinity = affinity(c.src, c.dst);
      candidates.push_back(m);
    }
  }

  // Overlapping windows can nominate the same cell twice; keep the most
  // confident nomination per cell on either side.
  std::sort(candidates.begin(), candidates.end(), [](const FineMatch& a, const FineMatch& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.src_cell != b.src_cell) return a.src_cell < b.src_cell;
    return a.dst_cell < b.dst_cell;
  });
  PairOutcome out;
  out.matches.src_frame = i;
  out.matches.dst_frame = j;
  out.pose = prev;
  std::vector<char> src_used(static_cast<std::size_t>(fine_i.cells()), 0);
  std::vector<char> dst_used(static_cast<std::size_t>(fine_j.cells()), 0);
  for (const FineMatch& m : candidates) {
    if (src_used[static_cast<std::size_t>(m.src_cell)] ||
        dst_used[static_cast<std::size_t>(m.dst_cell)]) {
      continue;
    }
    src_used[static_cast<std::size_t>(m.src_cell)] = 1;
    dst_used[static_cast<std::size_t>(m.dst_cell)] = 1;
    out.matches.matches.push_back(m);
  }
  std::sort(out.matches.matches.begin(), out.matches.matches.end(),
            [](const FineMatch& a, const FineMatch& b) {
              if (a.src_cell != b.src_cell) return a.src_cell < b.src_cell;
              return a.dst_cell < b.dst_cell;
            });

  const std::vector<FineMatch>& accepted = out.matches.matches;
  std::vector<const FineMatch*> with_points;
  double confidence_sum = 0.0;
  for (const FineMatch& m : accepted) {
    confidence_sum += m.confidence;
    if (m.has_points) with_points.push_back(&m);
  }
  if (with_points.size() < 3) return out;

  double peak = with_points.front()->affinity;
  for (const FineMatch* m : with_points) peak = std::max(peak, m->affinity);
  WeightedCorrespondences3D corr;
  corr.reserve(with_points.size());
  for (const FineMatch* m : with_points) {
    corr.push_back({m->src_point, m->dst_point, std::exp(m->affinity - peak)});
  }

  Pose aligned;
  try {
    aligned = weighted_kabsch(corr);
  } catch (const DegenerateConfiguration&) {
    return out;
  } catch (const AllZeroWeights&) {
    return out;
  }

  double weight_sum = 0.0;
  double residual_sum = 0.0;
  for (std::size_t k = 0; k < corr.size(); ++k) {
    weight_sum += corr[k].weight;
    residual_sum += corr[k].weight * (corr[k].target - aligned * corr[k].source).norm();
  }
  const Pose measured_delta = prev.inverse() * aligned;
  Eigen::VectorXd input(kGruInputDim);
  input.head<6>() = encode_6d(measured_delta.rotation());
  input.segment<3>(6) = measured_delta.translation();
  input[9] = residual_sum / weight_sum;
  input[10] = static_cast<double>(with_points.size()) / static_cast<double>(accepted.size());
  input[11] = confidence_sum / static_cast<double>(accepted.size());

  const PoseDelta6D delta = gru_step(ctx.gru.at(pair), input);
  out.pose = retract(aligned, delta);
  out.weight = confidence_sum / static_cast<double>(accepted.size());
  return out;
}

// Applies per-pair outcomes and runs one synchronization sweep. When every
// edge reaching some frame has been down-weighted to zero the sweep cannot
// run; the previous absolute poses are kept. Either way the pairwise poses
// are rewritten to stay consistent with the absolute ones.
inline void apply_synchronization(PipelineContext& ctx, ClipState& state) {
  StageClock clock(ctx.timers, "pose_sync");
  const int frame_count = static_cast<int>(state.poses.size());
  std::vector<RelativePose> edges;
  edges.reserve(state.pairwise.size());
  for (const auto& [pair, pose] : state.pairwise) {
    edges.push_back({pair.first, pair.second, pose, state.weights.at(pair)});
  }
  try {
    state.poses = synchronize_poses(frame_count, edges);
  } catch (const DisconnectedGraph&) {
  }
  for (auto& [pair, pose] : state.pairwise) {
    pose = state.poses[static_cast<std::size_t>(pair.first)].inverse() *
           state.poses[static_cast<std::size_t>(pair.second)];
  }
}

inline std::vector<std::vector<Eigen::Vector3d>> anchor_points_by_frame(const AnchorSet& anchors) {
  std::vector<std::vector<Eigen::Vector3d>> points(
      static_cast<std::size_t>(anchors.frame_count()));
  for (std::size_t f = 0; f < points.size(); ++f) {
    points[f].reserve(static_cast<std::size_t>(anchors.count()));
    for (int a = 0; a < anchors.count(); ++a) {
      points[f].push_back(anchors.points[static_cast<std::size_t>(a)][f]);
    }
  }
  return points;
}

}  // namespace detail

// One matching-and-pose cycle: windowed fine matching around every anchor,
// weighted alignment plus the recurrent update per ordered pair, then a
// single synchronization sweep. Pair failures zero that pair's weight and
// keep its previous pose; the clip never aborts mid-iteration.
inline void inner_iteration(const std::vector<Frame>& frames, PipelineContext& ctx,
                            ClipState& state) {
  if (state.anchors.count() < 1) throw InsufficientAnchors("inner_iteration: no anchors");
  const auto pairs = detail::ordered_pairs(static_cast<int>(frames.size()));
  const auto anchor_points = detail::anchor_points_by_frame(state.anchors);

  std::vector<detail::PairOutcome> outcomes(pairs.size());
  {
    detail::StageClock clock(ctx.timers, "fine_match");
    detail::run_indexed(ctx.pool, static_cast<std::int64_t>(pairs.size()), [&](std::int64_t k) {
      const auto idx = static_cast<std::size_t>(k);
      outcomes[idx] = detail::update_pair(frames, ctx, state, pairs[idx], anchor_points);
    });
  }

  state.matches.clear();
  state.matches.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    state.matches.push_back(std::move(outcomes[k].matches));
    state.pairwise[pairs[k]] = outcomes[k].pose;
    state.weights[pairs[k]] = outcomes[k].weight;
  }
  detail::apply_synchronization(ctx, state);
  ++state.inner_iter;
}

// One full pass: coarse matching, cycle-consistent anchor extraction, anchor
// alignment for initial poses, the inner loop, and anchor refinement.
inline void outer_iteration(const std::vector<Frame>& frames, PipelineContext& ctx,
                            ClipState& state) {
  const int frame_count = static_cast<int>(frames.size());
  if (frame_count != static_cast<int>(state.poses.size())) {
    throw DimensionMismatch("outer_iteration: state does not match the clip");
  }
  const auto pairs = detail::ordered_pairs(frame_count);

  std::vector<SoftMatch> coarse(pairs.size());
  {
    detail::StageClock clock(ctx.timers, "coarse_match");
    detail::run_indexed(ctx.pool, static_cast<std::int64_t>(pairs.size()), [&](std::int64_t k) {
      const auto idx = static_cast<std::size_t>(k);
      const auto [i, j] = pairs[idx];
      const ScoreMatrix scores =
          score_matrix(ctx.descriptors[static_cast<std::size_t>(i)].fused.feats,
                       ctx.descriptors[static_cast<std::size_t>(j)].fused.feats);
      coarse[idx] = sinkhorn(scores, ctx.config.epsilon, ctx.config.sinkhorn_iters,
                             ctx.config.slack_score);
      coarse[idx].src_frame = i;
      coarse[idx].dst_frame = j;
    });
  }

  SyncedMatches sync;
  {
    detail::StageClock clock(ctx.timers, "match_sync");
    MatchSyncOptions opt;
    opt.universe_size = ctx.descriptors.front().coarse.cells();
    sync = synchronize_matches(coarse, opt);
  }
  {
    detail::StageClock clock(ctx.timers, "anchors");
    state.anchors = extract_anchors(sync, frames, ctx.descriptors.front().coarse,
                                    ctx.config.min_anchors);
  }

  {
    detail::StageClock clock(ctx.timers, "initial_poses");
    for (const FramePair& pair : pairs) {
      const auto [i, j] = pair;
      WeightedCorrespondences3D corr;
      corr.reserve(static_cast<std::size_t>(state.anchors.count()));
      for (int a = 0; a < state.anchors.count(); ++a) {
        const auto ai = static_cast<std::size_t>(a);
        corr.push_back({state.anchors.points[ai][static_cast<std::size_t>(i)],
                        state.anchors.points[ai][static_cast<std::size_t>(j)], 1.0});
      }
      try {
        state.pairwise[pair] = weighted_kabsch(corr);
        state.weights[pair] = 1.0;
      } catch (const DegenerateConfiguration&) {
        state.weights[pair] = 0.0;
      }
    }
  }
  detail::apply_synchronization(ctx, state);

  state.inner_iter = 0;
  for (int t = 0; t < ctx.config.inner_iters; ++t) inner_iteration(frames, ctx, state);

  {
    detail::StageClock clock(ctx.timers, "refine");
    RefineOptions opt;
    opt.reproj_reject = ctx.config.reproj_reject;
    opt.min_anchors = ctx.config.min_anchors;
    state.anchors =
        refine_anchors(state.anchors, state.poses, frames.front().intrinsics, opt);
  }

  state.loss_history.push_back(registration_loss(state.matches, state.poses));
  ++state.outer_iter;
}

// Test-time localization: correlates each match's source feature against a
// window around its matched cell and moves the target pixel to the heat-map
// expectation. 3D points are re-projected from the refined pixel.
inline void refine_subpixel(const std::vector<Frame>& frames, PipelineContext& ctx,
                            ClipState& state) {
  detail::StageClock clock(ctx.timers, "subpixel");
  for (PairMatches& pm : state.matches) {
    const Frame& frame_i = frames[static_cast<std::size_t>(pm.src_frame)];
    const Frame& frame_j = frames[static_cast<std::size_t>(pm.dst_frame)];
    const FeatureGrid& fine_i = ctx.descriptors[static_cast<std::size_t>(pm.src_frame)].fine;
    const FeatureGrid& fine_j = ctx.descriptors[static_cast<std::size_t>(pm.dst_frame)].fine;
    for (FineMatch& m : pm.matches) {
      const WindowFeatures window = crop_window(fine_j, m.dst_px, ctx.config.window);
      const SubpixelMatch sub =
          subpixel_match(fine_i.feats.row(m.src_cell).transpose(), window);
      m.dst_px = sub.px;
      m.has_points = frame_i.depth_valid(m.src_px) && frame_j.depth_valid(m.dst_px);
      if (m.has_points) {
        m.src_point = backproject(frame_i, m.src_px);
        m.dst_point = backproject(frame_j, m.dst_px);
      }
    }
  }
}

inline ClipState register_clip(const std::vector<Frame>& frames, const PipelineConfig& config,
                               ThreadPool* pool = nullptr,
                               const SyntheticScene* scene = nullptr,
                               StageTimers* timers = nullptr) {
  PipelineContext ctx = make_context(frames, config, pool, scene, timers);
  ClipState state = initial_state(static_cast<int>(frames.size()));
  for (int o = 0; o < config.outer_iters; ++o) outer_iteration(frames, ctx, state);
  refine_subpixel(frames, ctx, state);
  return state;
}

}  // namespace anchorreg
