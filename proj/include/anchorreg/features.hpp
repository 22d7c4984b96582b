#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "anchorreg/errors.hpp"
#include "anchorreg/frame.hpp"

namespace anchorreg {

// Regular grid of per-cell descriptors over an image. Cells are stored
// row-major; cell (gx, gy) covers pixels [gx*stride, (gx+1)*stride) and its
// center sits at gx*stride + (stride-1)/2.
struct FeatureGrid {
  int stride = 0;
  int cols = 0;
  int rows = 0;
  Eigen::MatrixXd feats;  // cells() x dim, one descriptor per row

  int dim() const { return static_cast<int>(feats.cols()); }
  int cells() const { return rows * cols; }
  int cell_index(int gx, int gy) const { return gy * cols + gx; }
  double center_offset() const { return (stride - 1) / 2.0; }

  Eigen::Vector2d cell_center(int gx, int gy) const {
    return {gx * stride + center_offset(), gy * stride + center_offset()};
  }
  Eigen::Vector2d cell_center(int index) const { return cell_center(index % cols, index / cols); }

  // Nearest grid cell to a pixel location, clamped to the grid bounds.
  std::pair<int, int> nearest_cell(const Eigen::Vector2d& px) const {
    const int gx = std::clamp(
        static_cast<int>(std::lround((px.x() - center_offset()) / stride)), 0, cols - 1);
    const int gy = std::clamp(
        static_cast<int>(std::lround((px.y() - center_offset()) / stride)), 0, rows - 1);
    return {gx, gy};
  }

  void validate() const {
    if (stride < 1 || cols < 1 || rows < 1) throw DegenerateInput("feature grid: empty geometry");
    if (feats.rows() != cells()) throw DimensionMismatch("feature grid: row count != cell count");
  }
};

struct DescriptorSet {
  FeatureGrid coarse;  // stride 4
  FeatureGrid fine;    // stride 2
  FeatureGrid fused;   // coarse grid geometry, coarse dim + fine dim channels
};

namespace detail {

constexpr int kDescriptorBlocks = 9;  // 3x3 sub-blocks per patch
constexpr double kNormFloor = 1e-12;

inline double plane_at(const std::vector<double>& plane, int w, int h, int x, int y) {
  x = std::clamp(x, 0, w - 1);
  y = std::clamp(y, 0, h - 1);
  return plane[static_cast<std::size_t>(y) * w + x];
}

// Means of `plane` over the 3x3 sub-blocks (each stride x stride pixels) of
// the patch centered on cell (gx, gy). Border patches sample edge-clamped.
inline std::array<double, kDescriptorBlocks> block_means(const std::vector<double>& plane, int w,
                                                         int h, int gx, int gy, int stride) {
  std::array<double, kDescriptorBlocks> out{};
  for (int by = 0; by < 3; ++by) {
    for (int bx = 0; bx < 3; ++bx) {
      const int ox = (gx + bx - 1) * stride;
      const int oy = (gy + by - 1) * stride;
      double sum = 0.0;
      for (int dy = 0; dy < stride; ++dy) {
        for (int dx = 0; dx < stride; ++dx) {
          sum += plane_at(plane, w, h, ox + dx, oy + dy);
        }
      }
      out[static_cast<std::size_t>(by * 3 + bx)] = sum / (stride * stride);
    }
  }
  return out;
}

inline void standardize(std::array<double, kDescriptorBlocks>& v) {
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= v.size();
  double var = 0.0;
  for (const double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / v.size());
  for (double& x : v) x = (x - mean) / (sd + kNormFloor);
}

inline void rms_normalize(std::array<double, kDescriptorBlocks>& v) {
  double ss = 0.0;
  for (const double x : v) ss += x * x;
  const double rms = std::sqrt(ss / v.size());
  for (double& x : v) x /= (rms + kNormFloor);
}

inline void relative_to_mean(std::array<double, kDescriptorBlocks>& v) {
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= v.size();
  for (double& x : v) x = (x - mean) / (mean + kNormFloor);
}

}  // namespace detail

// Hand-crafted 36-dim cell descriptor: standardized intensity block means,
// RMS-normalized gradient magnitude block means (x and y), and depth block
// means relative to the patch mean; the concatenation is L2-normalized.
inline FeatureGrid patch_grid(const Frame& frame, int stride) {
  if (stride < 1) throw DegenerateInput("patch_grid: stride must be positive");
  const int w = frame.rgb.width;
  const int h = frame.rgb.height;
  FeatureGrid grid;
  grid.stride = stride;
  grid.cols = w / stride;
  grid.rows = h / stride;
  if (grid.cols < 1 || grid.rows < 1) throw DegenerateInput("patch_grid: image smaller than stride");
  grid.feats.resize(grid.cells(), 4 * detail::kDescriptorBlocks);

  std::vector<double> luma(static_cast<std::size_t>(w) * h);
  std::vector<double> depth(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      luma[static_cast<std::size_t>(y) * w + x] = luminance(frame.rgb, x, y);
      depth[static_cast<std::size_t>(y) * w + x] = frame.depth.at(x, y);
    }
  }
  std::vector<double> grad_x(luma.size());
  std::vector<double> grad_y(luma.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = 0.5 * (detail::plane_at(luma, w, h, x + 1, y) -
                               detail::plane_at(luma, w, h, x - 1, y));
      const double dy = 0.5 * (detail::plane_at(luma, w, h, x, y + 1) -
                               detail::plane_at(luma, w, h, x, y - 1));
      grad_x[static_cast<std::size_t>(y) * w + x] = std::abs(dx);
      grad_y[static_cast<std::size_t>(y) * w + x] = std::abs(dy);
    }
  }

  for (int gy = 0; gy < grid.rows; ++gy) {
    for (int gx = 0; gx < grid.cols; ++gx) {
      auto lb = detail::block_means(luma, w, h, gx, gy, stride);
      auto xb = detail::block_means(grad_x, w, h, gx, gy, stride);
      auto yb = detail::block_means(grad_y, w, h, gx, gy, stride);
      auto db = detail::block_means(depth, w, h, gx, gy, stride);
      detail::standardize(lb);
      detail::rms_normalize(xb);
      detail::rms_normalize(yb);
      detail::relative_to_mean(db);

      Eigen::VectorXd d(4 * detail::kDescriptorBlocks);
      for (int k = 0; k < detail::kDescriptorBlocks; ++k) {
        d[k] = lb[static_cast<std::size_t>(k)];
        d[detail::kDescriptorBlocks + k] = xb[static_cast<std::size_t>(k)];
        d[2 * detail::kDescriptorBlocks + k] = yb[static_cast<std::size_t>(k)];
        d[3 * detail::kDescriptorBlocks + k] = db[static_cast<std::size_t>(k)];
      }
      const double n = d.norm();
      if (n > detail::kNormFloor) {
        d /= n;
      } else {
        d.setZero();
        d[0] = 1.0;
      }
      grid.feats.row(grid.cell_index(gx, gy)) = d.transpose();
    }
  }
  return grid;
}

// Average-pools the fine grid down to the coarse geometry and concatenates
// the pooled block onto the coarse descriptors channel-wise. The pooled
// block is the plain mean of the 2x2 fine children (not re-normalized, so
// the pooling identity is preserved exactly).
inline FeatureGrid fuse_grids(const FeatureGrid& coarse, const FeatureGrid& fine) {
  coarse.validate();
  fine.validate();
  if (fine.stride * 2 != coarse.stride) {
    throw DimensionMismatch("fuse_grids: fine stride must be half the coarse stride");
  }
  FeatureGrid fused;
  fused.stride = coarse.stride;
  fused.cols = coarse.cols;
  fused.rows = coarse.rows;
  fused.feats.resize(coarse.cells(), coarse.dim() + fine.dim());
  for (int gy = 0; gy < coarse.rows; ++gy) {
    for (int gx = 0; gx < coarse.cols; ++gx) {
      Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(fine.dim());
      int count = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int fx = 2 * gx + dx;
          const int fy = 2 * gy + dy;
          if (fx < fine.cols && fy < fine.rows) {
            pooled += fine.feats.row(fine.cell_index(fx, fy));
            ++count;
          }
        }
      }
      if (count > 0) pooled /= count;
      const int idx = coarse.cell_index(gx, gy);
      fused.feats.row(idx).head(coarse.dim()) = coarse.feats.row(idx);
      fused.feats.row(idx).tail(fine.dim()) = pooled;
    }
  }
  return fused;
}

inline DescriptorSet patch_descriptor(const Frame& frame) {
  DescriptorSet set;
  set.coarse = patch_grid(frame, 4);
  set.fine = patch_grid(frame, 2);
  set.fused = fuse_grids(set.coarse, set.fine);
  return set;
}

// Local window of grid cells with their absolute pixel centers attached.
struct WindowFeatures {
  std::vector<int> cell_indices;
  std::vector<Eigen::Vector2d> px;
  Eigen::MatrixXd feats;  // slots x dim
  int center_slot = -1;   // slot of the cell nearest the requested center

  int size() const { return static_cast<int>(cell_indices.size()); }
};

// w x w block of cells around the cell nearest center_px; cells falling
// outside the grid are clipped away rather than padded.
inline WindowFeatures crop_window(const FeatureGrid& grid, const Eigen::Vector2d& center_px,
                                  int w) {
  grid.validate();
  if (w < 1 || w % 2 == 0) throw DegenerateInput("crop_window: window size must be odd");
  const auto [cx, cy] = grid.nearest_cell(center_px);
  const int half = w / 2;
  const int x0 = std::max(0, cx - half);
  const int x1 = std::min(grid.cols - 1, cx + half);
  const int y0 = std::max(0, cy - half);
  const int y1 = std::min(grid.rows - 1, cy + half);

  WindowFeatures win;
  const int count = (x1 - x0 + 1) * (y1 - y0 + 1);
  win.cell_indices.reserve(static_cast<std::size_t>(count));
  win.px.reserve(static_cast<std::size_t>(count));
  win.feats.resize(count, grid.dim());
  int slot = 0;
  for (int gy = y0; gy <= y1; ++gy) {
    for (int gx = x0; gx <= x1; ++gx) {
      const int idx = grid.cell_index(gx, gy);
      if (gx == cx && gy == cy) win.center_slot = slot;
      win.cell_indices.push_back(idx);
      win.px.push_back(grid.cell_center(gx, gy));
      win.feats.row(slot) = grid.feats.row(idx);
      ++slot;
    }
  }
  return win;
}

struct SubpixelMatch {
  Eigen::Vector2d px = Eigen::Vector2d::Zero();
  double confidence = 0.0;
};

// Correlates one reference feature against every cell of a window, softmaxes
// the correlations into a heat-map, and returns its expectation; confidence
// is the peak heat-map probability.
inline SubpixelMatch subpixel_match(const Eigen::VectorXd& center_feat,
                                    const WindowFeatures& window) {
  if (window.size() == 0) throw DegenerateInput("subpixel_match: empty window");
  if (window.feats.cols() != center_feat.size()) {
    throw DimensionMismatch("subpixel_match: feature dimensions differ");
  }
  Eigen::VectorXd corr = window.feats * center_feat;
  const double peak = corr.maxCoeff();
  Eigen::VectorXd p = (corr.array() - peak).exp();
  p /= p.sum();

  SubpixelMatch out;
  for (int i = 0; i < window.size(); ++i) {
    out.px += p[i] * window.px[static_cast<std::size_t>(i)];
  }
  out.confidence = p.maxCoeff();
  return out;
}

inline SubpixelMatch subpixel_match(const WindowFeatures& window_r,
                                    const WindowFeatures& window_s) {
  if (window_r.center_slot < 0) throw DegenerateInput("subpixel_match: window has no center slot");
  return subpixel_match(window_r.feats.row(window_r.center_slot).transpose(), window_s);
}

}  // namespace anchorreg
