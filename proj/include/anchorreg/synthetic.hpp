#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "anchorreg/camera.hpp"
#include "anchorreg/clip_io.hpp"
#include "anchorreg/errors.hpp"
#include "anchorreg/features.hpp"
#include "anchorreg/frame.hpp"
#include "anchorreg/rng.hpp"
#include "anchorreg/se3.hpp"

namespace anchorreg {

struct SceneNoise {
  double depth_sigma = 0.0;       // metres, i.i.d. Gaussian on rendered depth
  double descriptor_sigma = 0.0;  // oracle descriptor perturbation scale
  double outlier_fraction = 0.0;  // fraction of landmark observations corrupted
};

struct Landmark {
  int id = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

// Planted world: a textured wall plane carrying circular landmark decals,
// observed by a set of cameras with known poses (world-from-camera).
struct SyntheticScene {
  std::string mode = "lattice";
  std::uint64_t seed = 0;
  Intrinsics intrinsics;
  double wall_z = 2.0;
  double decal_radius = 0.0;  // metres on the wall plane
  SceneNoise noise;
  std::vector<Landmark> landmarks;
  std::vector<Pose> poses;

  int frame_count() const { return static_cast<int>(poses.size()); }
};

struct SceneOptions {
  // "lattice": camera motion restricted to whole feature cells (plus
  // quarter-turn roll), so cell centers correspond across frames exactly.
  // "orbit": cameras on an arc, each aimed at the wall center.
  std::string mode = "lattice";
  int frame_count = 6;
  int landmark_count = 24;
  int image_size = 64;
  double focal_px = 80.0;
  double wall_z = 2.0;
  int min_anchors = 8;
  int max_attempts = 200;
  int max_shift_cells = 1;  // lattice translation range in coarse cells
  double orbit_radius = 2.0;
  double orbit_arc_deg = 24.0;
  SceneNoise noise;
};

namespace detail {

struct WallHit {
  Eigen::Vector3d world;
  double depth;
};

// Casts the pixel ray of a posed camera against the wall plane z = wall_z.
inline std::optional<WallHit> wall_hit(const Pose& pose, const Intrinsics& k,
                                       const Eigen::Vector2d& px, double wall_z) {
  const Eigen::Vector3d dir = pose.rotation().matrix() * k.ray(px);
  if (!(dir.z() > 1e-9)) return std::nullopt;
  const double s = (wall_z - pose.translation().z()) / dir.z();
  if (!(s > 1e-6)) return std::nullopt;
  return WallHit{pose.translation() + s * dir, s};
}

// Exact quarter-turn roll about the optical axis; entries are integers so
// corresponding pixels render bit-identically.
inline Rotation quarter_turn(int k) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  const int q = ((k % 4) + 4) % 4;
  const double c = (q == 0) ? 1.0 : (q == 2) ? -1.0 : 0.0;
  const double s = (q == 1) ? 1.0 : (q == 3) ? -1.0 : 0.0;
  m(0, 0) = c;
  m(0, 1) = -s;
  m(1, 0) = s;
  m(1, 1) = c;
  return Rotation::from_matrix(m);
}

inline std::array<std::uint8_t, 3> texel_color(std::uint64_t seed, const Eigen::Vector3d& world,
                                               double texel) {
  // The +0.25 offset keeps lattice-aligned samples a quarter texel away from
  // bin boundaries, so sub-ulp jitter between views cannot flip the bin.
  const auto i = static_cast<std::uint64_t>(static_cast<long long>(std::floor(world.x() / texel + 0.25)));
  const auto j = static_cast<std::uint64_t>(static_cast<long long>(std::floor(world.y() / texel + 0.25)));
  const std::uint64_t h = hash_seed(seed, 0x7e11, i, j);
  return {static_cast<std::uint8_t>(30 + (h & 0xff) % 196),
          static_cast<std::uint8_t>(30 + ((h >> 8) & 0xff) % 196),
          static_cast<std::uint8_t>(30 + ((h >> 16) & 0xff) % 196)};
}

inline std::array<std::uint8_t, 3> decal_color(std::uint64_t seed, int id) {
  const std::uint64_t h = hash_seed(seed, 0xdeca, static_cast<std::uint64_t>(id), 0);
  return {static_cast<std::uint8_t>(128 + (h & 0x7f)),
          static_cast<std::uint8_t>(128 + ((h >> 8) & 0x7f)),
          static_cast<std::uint8_t>(128 + ((h >> 16) & 0x7f))};
}

inline void validate_options(const SceneOptions& opt) {
  if (opt.frame_count < 2) throw DegenerateInput("scene: need at least two frames");
  if (opt.image_size < 16 || opt.image_size % 4 != 0) {
    throw DegenerateInput("scene: image_size must be a multiple of 4 and at least 16");
  }
  if (!(opt.focal_px > 0.0) || !(opt.wall_z > 0.0)) {
    throw DegenerateInput("scene: focal length and wall distance must be positive");
  }
  if (opt.min_anchors < 3) throw DegenerateInput("scene: min_anchors must be at least 3");
  if (opt.landmark_count < 3 * opt.min_anchors) {
    throw DegenerateInput("scene: landmark_count must be at least 3x min_anchors");
  }
  if (opt.noise.depth_sigma < 0.0 || opt.noise.descriptor_sigma < 0.0 ||
      opt.noise.outlier_fraction < 0.0 || opt.noise.outlier_fraction > 1.0) {
    throw DegenerateInput("scene: noise parameters out of range");
  }
}

inline Intrinsics scene_intrinsics(const SceneOptions& opt) {
  Intrinsics k;
  k.fx = opt.focal_px;
  k.fy = opt.focal_px;
  k.cx = (opt.image_size - 1) / 2.0;
  k.cy = (opt.image_size - 1) / 2.0;
  k.width = opt.image_size;
  k.height = opt.image_size;
  k.depth_scale = 1000.0;
  k.validate();
  return k;
}

inline SyntheticScene build_lattice(std::uint64_t seed, const SceneOptions& opt,
                                    const Intrinsics& k) {
  SyntheticScene scene;
  scene.mode = "lattice";
  scene.seed = seed;
  scene.intrinsics = k;
  scene.wall_z = opt.wall_z;
  scene.noise = opt.noise;
  scene.decal_radius = 2.6 * opt.wall_z / opt.focal_px;

  Rng rng(hash_seed(seed, 0x1a77, 0, 0));
  const double cell_world = 4.0 * opt.wall_z / opt.focal_px;

  std::vector<std::pair<int, int>> shifts;
  const int m = opt.max_shift_cells;
  for (int my = -m; my <= m; ++my) {
    for (int mx = -m; mx <= m; ++mx) {
      if (mx != 0 || my != 0) shifts.emplace_back(mx, my);
    }
  }
  if (static_cast<int>(shifts.size()) < opt.frame_count - 1) {
    throw InfeasibleGeometry("lattice scene: not enough distinct camera shifts; raise max_shift_cells");
  }
  for (std::size_t i = shifts.size(); i > 1; --i) {
    std::swap(shifts[i - 1], shifts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }

  scene.poses.emplace_back();
  for (int f = 1; f < opt.frame_count; ++f) {
    const auto [mx, my] = shifts[static_cast<std::size_t>(f - 1)];
    const Eigen::Vector3d t(mx * cell_world, my * cell_world, 0.0);
    scene.poses.emplace_back(quarter_turn(rng.uniform_int(0, 3)), t);
  }

  // Landmarks sit on frame-0 coarse cell centers, two cells apart, well away
  // from borders so decals and match windows survive every camera shift.
  const double margin = 4.0 * m + 9.0;
  std::vector<std::pair<int, int>> cells;
  const int grid = opt.image_size / 4;
  for (int gy = 0; gy < grid; gy += 2) {
    for (int gx = 0; gx < grid; gx += 2) {
      const double cx = gx * 4 + 1.5;
      const double cy = gy * 4 + 1.5;
      if (cx >= margin && cx <= opt.image_size - 1 - margin && cy >= margin &&
          cy <= opt.image_size - 1 - margin) {
        cells.emplace_back(gx, gy);
      }
    }
  }
  if (static_cast<int>(cells.size()) < opt.landmark_count) {
    throw InfeasibleGeometry("lattice scene: image too small for the requested landmark count");
  }
  for (std::size_t i = cells.size(); i > 1; --i) {
    std::swap(cells[i - 1], cells[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  for (int id = 0; id < opt.landmark_count; ++id) {
    const auto [gx, gy] = cells[static_cast<std::size_t>(id)];
    const auto hit = wall_hit(scene.poses[0], k, {gx * 4 + 1.5, gy * 4 + 1.5}, opt.wall_z);
    if (!hit) throw InfeasibleGeometry("lattice scene: reference camera does not face the wall");
    scene.landmarks.push_back({id, hit->world});
  }
  return scene;
}

inline SyntheticScene build_orbit(std::uint64_t seed, const SceneOptions& opt,
                                  const Intrinsics& k) {
  SyntheticScene scene;
  scene.mode = "orbit";
  scene.seed = seed;
  scene.intrinsics = k;
  scene.wall_z = opt.wall_z;
  scene.noise = opt.noise;
  scene.decal_radius = 2.6 * opt.wall_z / opt.focal_px;

  Rng rng(hash_seed(seed, 0x0b17, 0, 0));
  const Eigen::Vector3d target(0.0, 0.0, opt.wall_z);
  const double arc = opt.orbit_arc_deg * std::numbers::pi / 180.0;
  for (int f = 0; f < opt.frame_count; ++f) {
    const double theta = arc * (static_cast<double>(f) / (opt.frame_count - 1) - 0.5);
    Eigen::Vector3d pos = target + opt.orbit_radius * Eigen::Vector3d(std::sin(theta), 0.0, -std::cos(theta));
    pos.y() += 0.05 * opt.orbit_radius * (rng.uniform() - 0.5);
    const Eigen::Vector3d forward = (target - pos).normalized();
    const Eigen::Vector3d right = Eigen::Vector3d(0.0, 1.0, 0.0).cross(forward).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    scene.poses.emplace_back(Rotation::from_matrix(r), pos);
  }

  // Rejection-sample wall points that stay visible, margin-safe, and mutually
  // separated in every frame.
  const double margin = 9.0;
  const double min_sep_px = 6.0;
  int attempts = 0;
  const int budget = opt.max_attempts * opt.landmark_count;
  while (static_cast<int>(scene.landmarks.size()) < opt.landmark_count) {
    if (++attempts > budget) {
      throw InfeasibleGeometry("orbit scene: could not place landmarks within the attempt budget");
    }
    const Eigen::Vector2d px0(rng.uniform(margin, opt.image_size - 1 - margin),
                              rng.uniform(margin, opt.image_size - 1 - margin));
    const auto hit = wall_hit(scene.poses[0], k, px0, opt.wall_z);
    if (!hit) continue;
    bool ok = true;
    std::vector<Eigen::Vector2d> proj(scene.poses.size());
    for (std::size_t f = 0; f < scene.poses.size() && ok; ++f) {
      const Eigen::Vector3d cam = scene.poses[f].inverse() * hit->world;
      if (!(cam.z() > 0.1)) {
        ok = false;
        break;
      }
      proj[f] = k.project(cam);
      ok = k.contains(proj[f], margin);
    }
    if (!ok) continue;
    for (const Landmark& other : scene.landmarks) {
      for (std::size_t f = 0; f < scene.poses.size() && ok; ++f) {
        const Eigen::Vector3d cam = scene.poses[f].inverse() * other.point;
        if ((k.project(cam) - proj[f]).norm() < min_sep_px) ok = false;
      }
      if (!ok) break;
    }
    if (!ok) continue;
    scene.landmarks.push_back({static_cast<int>(scene.landmarks.size()), hit->world});
  }
  return scene;
}

}  // namespace detail

// Checks the observation invariant: positive depth for every landmark in
// every frame, and at least min_anchors landmarks inside each view.
inline void verify_scene_visibility(const SyntheticScene& scene, int min_anchors) {
  for (std::size_t f = 0; f < scene.poses.size(); ++f) {
    int visible = 0;
    for (const Landmark& lm : scene.landmarks) {
      const Eigen::Vector3d cam = scene.poses[f].inverse() * lm.point;
      if (!(cam.z() > 0.0)) {
        throw InfeasibleGeometry("scene: landmark behind a camera");
      }
      if (scene.intrinsics.contains(scene.intrinsics.project(cam))) ++visible;
    }
    if (visible < min_anchors) {
      throw InfeasibleGeometry("scene: a frame observes fewer landmarks than min_anchors");
    }
  }
}

// Renders the wall texture plus landmark decals into RGB-D frames with
// ground-truth poses attached. Depth is the camera-space z of the wall hit,
// optionally perturbed by depth noise.
inline std::vector<Frame> render_scene(const SyntheticScene& scene) {
  const Intrinsics& k = scene.intrinsics;
  const double texel = scene.wall_z / k.fx;
  std::vector<Frame> frames;
  frames.reserve(scene.poses.size());
  for (int f = 0; f < scene.frame_count(); ++f) {
    Frame fr;
    fr.id = f;
    fr.intrinsics = k;
    fr.ground_truth = scene.poses[static_cast<std::size_t>(f)];
    fr.rgb = ImageU8(k.width, k.height, 3);
    fr.depth = ImageF(k.width, k.height);
    Rng depth_rng(hash_seed(scene.seed, 0xde9, static_cast<std::uint64_t>(f), 0));
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const auto hit = detail::wall_hit(fr.ground_truth.value(), k,
                                          {static_cast<double>(x), static_cast<double>(y)},
                                          scene.wall_z);
        if (!hit) throw InfeasibleGeometry("scene: a camera pixel misses the wall");
        double d = hit->depth;
        if (scene.noise.depth_sigma > 0.0) d += scene.noise.depth_sigma * depth_rng.gaussian();
        fr.depth.at(x, y) = static_cast<float>(std::max(0.0, d));

        std::array<std::uint8_t, 3> color{};
        bool on_decal = false;
        for (const Landmark& lm : scene.landmarks) {
          if ((hit->world.head<2>() - lm.point.head<2>()).norm() <= scene.decal_radius) {
            color = detail::decal_color(scene.seed, lm.id);
            on_decal = true;
            break;
          }
        }
        if (!on_decal) color = detail::texel_color(scene.seed, hit->world, texel);
        fr.rgb.at(x, y, 0) = color[0];
        fr.rgb.at(x, y, 1) = color[1];
        fr.rgb.at(x, y, 2) = color[2];
      }
    }
    frames.push_back(std::move(fr));
  }
  return frames;
}

inline SyntheticScene build_scene(std::uint64_t seed, const SceneOptions& opt) {
  detail::validate_options(opt);
  const Intrinsics k = detail::scene_intrinsics(opt);
  SyntheticScene scene;
  if (opt.mode == "lattice") {
    scene = detail::build_lattice(seed, opt, k);
  } else if (opt.mode == "orbit") {
    scene = detail::build_orbit(seed, opt, k);
  } else {
    throw DegenerateInput("scene: unknown mode '" + opt.mode + "'");
  }
  verify_scene_visibility(scene, opt.min_anchors);
  return scene;
}

inline void save_scene_json(const std::string& path, const SyntheticScene& scene) {
  nlohmann::json j;
  j["version"] = "anchorreg-scene-v1";
  j["mode"] = scene.mode;
  j["seed"] = scene.seed;
  j["wall_z"] = scene.wall_z;
  j["decal_radius"] = scene.decal_radius;
  j["noise"] = {{"depth_sigma", scene.noise.depth_sigma},
                {"descriptor_sigma", scene.noise.descriptor_sigma},
                {"outlier_fraction", scene.noise.outlier_fraction}};
  j["landmarks"] = nlohmann::json::array();
  for (const Landmark& lm : scene.landmarks) {
    j["landmarks"].push_back({{"id", lm.id}, {"p", {lm.point.x(), lm.point.y(), lm.point.z()}}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed while writing " + path);
}

// Generates a scene, renders it, and writes a complete clip directory plus
// the scene sidecar (scene.json) used by the oracle descriptor.
inline SyntheticScene generate_scene(std::uint64_t seed, const SceneOptions& opt,
                                     const std::string& clip_dir) {
  const SyntheticScene scene = build_scene(seed, opt);
  const std::vector<Frame> frames = render_scene(scene);
  save_clip(clip_dir, frames);
  save_scene_json((std::filesystem::path(clip_dir) / "scene.json").string(), scene);
  return scene;
}

// Rebuilds the scene description from a clip directory (scene sidecar,
// intrinsics, and ground-truth trajectory).
inline SyntheticScene load_scene(const std::string& clip_dir) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(clip_dir) / "scene.json").string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    throw IoError("malformed JSON in " + path);
  }
  if (j.value("version", "") != std::string("anchorreg-scene-v1")) {
    throw IoError("unsupported scene version in " + path);
  }
  SyntheticScene scene;
  try {
    scene.mode = j.at("mode").get<std::string>();
    scene.seed = j.at("seed").get<std::uint64_t>();
    scene.wall_z = j.at("wall_z").get<double>();
    scene.decal_radius = j.at("decal_radius").get<double>();
    scene.noise.depth_sigma = j.at("noise").at("depth_sigma").get<double>();
    scene.noise.descriptor_sigma = j.at("noise").at("descriptor_sigma").get<double>();
    scene.noise.outlier_fraction = j.at("noise").at("outlier_fraction").get<double>();
    for (const auto& e : j.at("landmarks")) {
      Landmark lm;
      lm.id = e.at("id").get<int>();
      lm.point = Eigen::Vector3d(e.at("p").at(0).get<double>(), e.at("p").at(1).get<double>(),
                                 e.at("p").at(2).get<double>());
      scene.landmarks.push_back(lm);
    }
  } catch (const nlohmann::json::exception&) {
    throw IoError("missing or mistyped fields in " + path);
  }
  scene.intrinsics = read_intrinsics((fs::path(clip_dir) / "intrinsics.txt").string());
  const std::string gt_path = (fs::path(clip_dir) / "groundtruth.txt").string();
  if (!fs::exists(gt_path)) throw IoError("scene clip is missing groundtruth.txt");
  for (const TrajectoryEntry& e : read_trajectory(gt_path)) scene.poses.push_back(e.pose);
  return scene;
}

// --- Oracle descriptors -----------------------------------------------------
//
// Descriptors derived from the planted scene instead of pixels: each cell
// whose center ray lands on a landmark decal receives that landmark's
// codebook vector (optionally noise-perturbed, or replaced outright for
// observations drawn as outliers); background cells receive seeded random
// unit vectors. Exposes planted correspondences to the matching stack while
// staying within the descriptor interface.

struct OracleOptions {
  int dim = 32;
};

inline Eigen::VectorXd landmark_code(std::uint64_t seed, int id, int dim) {
  Rng rng(hash_seed(seed, 0xc0de, static_cast<std::uint64_t>(id), 0));
  return rng.unit_vector(dim);
}

inline FeatureGrid oracle_grid(const SyntheticScene& scene, int frame_id, int stride, int dim) {
  if (frame_id < 0 || frame_id >= scene.frame_count()) {
    throw DimensionMismatch("oracle_grid: frame id out of range");
  }
  if (dim < 2) throw DegenerateInput("oracle_grid: descriptor dim too small");
  const Intrinsics& k = scene.intrinsics;
  const Pose& pose = scene.poses[static_cast<std::size_t>(frame_id)];
  FeatureGrid grid;
  grid.stride = stride;
  grid.cols = k.width / stride;
  grid.rows = k.height / stride;
  grid.feats.resize(grid.cells(), dim);

  const auto fid = static_cast<std::uint64_t>(frame_id);
  for (int gy = 0; gy < grid.rows; ++gy) {
    for (int gx = 0; gx < grid.cols; ++gx) {
      const int idx = grid.cell_index(gx, gy);
      const auto cell = static_cast<std::uint64_t>(idx) * 8 + static_cast<std::uint64_t>(stride);
      const auto hit = detail::wall_hit(pose, k, grid.cell_center(gx, gy), scene.wall_z);
      const Landmark* found = nullptr;
      if (hit) {
        for (const Landmark& lm : scene.landmarks) {
          if ((hit->world.head<2>() - lm.point.head<2>()).norm() <= scene.decal_radius) {
            found = &lm;
            break;
          }
        }
      }
      Eigen::VectorXd v;
      if (found) {
        bool outlier = false;
        if (scene.noise.outlier_fraction > 0.0) {
          Rng flag(hash_seed(scene.seed, 0x0071, fid, static_cast<std::uint64_t>(found->id)));
          outlier = flag.uniform() < scene.noise.outlier_fraction;
        }
        if (outlier) {
          Rng bad(hash_seed(scene.seed, 0xbad0, fid, cell));
          v = bad.unit_vector(dim);
        } else {
          v = landmark_code(scene.seed, found->id, dim);
          if (scene.noise.descriptor_sigma > 0.0) {
            Rng noise(hash_seed(scene.seed, 0xa0a0, fid, cell));
            v += noise.gaussian_vector(dim, scene.noise.descriptor_sigma);
            v.normalize();
          }
        }
      } else {
        Rng bg(hash_seed(scene.seed, 0xbac0, fid, cell));
        v = bg.unit_vector(dim);
      }
      grid.feats.row(idx) = v.transpose();
    }
  }
  return grid;
}

inline DescriptorSet oracle_descriptor(const SyntheticScene& scene, int frame_id,
                                       const OracleOptions& opt = {}) {
  DescriptorSet set;
  set.coarse = oracle_grid(scene, frame_id, 4, opt.dim);
  set.fine = oracle_grid(scene, frame_id, 2, opt.dim);
  set.fused = fuse_grids(set.coarse, set.fine);
  return set;
}

}  // namespace anchorreg
