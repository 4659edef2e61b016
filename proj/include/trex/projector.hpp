#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "trex/types.hpp"

namespace trex {

/// One nonzero of the implicit system matrix: column j with intersection
/// length a (mm) of the ray with pixel j.
struct RayEntry {
  std::size_t j;
  double a;
};

/// All nonzeros of one matrix row, in traversal order (monotone along the
/// ray). Accumulating a dot product over `entries` in order reproduces
/// forward_project for that row bit for bit.
struct RaySample {
  std::size_t row = 0;
  std::vector<RayEntry> entries;
};

namespace detail {

/// Rays traced since program start; tests use this to assert that one outer
/// iteration of every solver costs the same number of row traversals.
inline std::atomic<std::uint64_t> traced_rays{0};

struct Segment {
  double x0, y0, x1, y1;
};

/// Endpoints of ray `i` in world mm. All projector entry points derive ray
/// geometry from here so forward, back and sampled traversals agree exactly.
inline Segment ray_segment(const ScanGeometry& geom, const ImageGrid& grid,
                           std::size_t ray) {
  require(ray < ray_count(geom), ErrorCode::IndexOutOfRange,
          "ray index out of range");
  const int dets = num_dets(geom);
  const int v = static_cast<int>(ray / dets);
  const int k = static_cast<int>(ray % dets);

  if (const auto* fan = std::get_if<FanBeamGeometry>(&geom)) {
    const double phi = fan->angles[v];
    const double c = std::cos(phi), s = std::sin(phi);
    const double sx = fan->src_to_iso * c, sy = fan->src_to_iso * s;
    // flat detector crosses the source-isocenter axis at src_to_det from
    // the source, cells laid out along the tangential direction
    const double dcx = sx - fan->src_to_det * c;
    const double dcy = sy - fan->src_to_det * s;
    const double off = (k - 0.5 * (fan->num_dets - 1)) * fan->det_size;
    return {sx, sy, dcx + off * -s, dcy + off * c};
  }

  const auto& par = std::get<ParallelBeamGeometry>(geom);
  const double phi = par.angles[v];
  const double c = std::cos(phi), s = std::sin(phi);
  const double off = (k - 0.5 * (par.num_dets - 1)) * par.det_size;
  const double bx = off * -s, by = off * c;  // closest point to the origin
  const double reach = 0.5 * grid.diagonal() + grid.pixel_size;
  return {bx - reach * c, by - reach * s, bx + reach * c, by + reach * s};
}

/// Exact-length grid traversal: visits every pixel the open segment crosses,
/// in order, with the chord length in mm. visit(j, length). Rays that touch
/// the grid only on a boundary line contribute to the higher-index cell.
template <class Visit>
void trace_segment(const ImageGrid& g, const Segment& seg, Visit&& visit) {
  traced_rays.fetch_add(1, std::memory_order_relaxed);

  const double dx = seg.x1 - seg.x0, dy = seg.y1 - seg.y0;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return;

  const double gx0 = g.xmin(), gx1 = gx0 + g.width();
  const double gy0 = g.ymin(), gy1 = gy0 + g.height();

  double t0 = 0.0, t1 = 1.0;
  if (dx != 0.0) {
    double ta = (gx0 - seg.x0) / dx, tb = (gx1 - seg.x0) / dx;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  } else if (seg.x0 < gx0 || seg.x0 > gx1) {
    return;
  }
  if (dy != 0.0) {
    double ta = (gy0 - seg.y0) / dy, tb = (gy1 - seg.y0) / dy;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  } else if (seg.y0 < gy0 || seg.y0 > gy1) {
    return;
  }
  if (!(t0 < t1)) return;

  const double h = g.pixel_size;
  const double ex = seg.x0 + t0 * dx, ey = seg.y0 + t0 * dy;
  int ix = std::clamp(static_cast<int>(std::floor((ex - gx0) / h)), 0,
                      g.nx - 1);
  int iy = std::clamp(static_cast<int>(std::floor((ey - gy0) / h)), 0,
                      g.ny - 1);

  const int sx_step = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int sy_step = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  // parameter of the next x / y pixel boundary along the ray
  double tx = inf, ty = inf;
  if (sx_step > 0)
    tx = (gx0 + (ix + 1) * h - seg.x0) / dx;
  else if (sx_step < 0)
    tx = (gx0 + ix * h - seg.x0) / dx;
  if (sy_step > 0)
    ty = (gy0 + (iy + 1) * h - seg.y0) / dy;
  else if (sy_step < 0)
    ty = (gy0 + iy * h - seg.y0) / dy;
  const double dtx = sx_step ? h / std::abs(dx) : inf;
  const double dty = sy_step ? h / std::abs(dy) : inf;

  double t = t0;
  while (t < t1) {
    double tn = std::min({tx, ty, t1});
    if (tn < t) tn = t;  // rounding guard on boundary-aligned rays
    const double w = (tn - t) * len;
    if (w > 0.0) visit(g.index(ix, iy), w);
    if (tn >= t1) break;
    bool stepped = false;
    if (tx <= tn) {
      ix += sx_step;
      tx += dtx;
      stepped = true;
    }
    if (ty <= tn) {
      iy += sy_step;
      ty += dty;
      stepped = true;
    }
    if (!stepped || ix < 0 || ix >= g.nx || iy < 0 || iy >= g.ny) break;
    t = tn;
  }
}

template <class Visit>
void trace_ray(const ScanGeometry& geom, const ImageGrid& grid,
               std::size_t ray, Visit&& visit) {
  trace_segment(grid, ray_segment(geom, grid, ray),
                std::forward<Visit>(visit));
}

}  // namespace detail

/// Nonzeros of matrix row `ray`, in traversal order.
inline RaySample row_entries(const ScanGeometry& geom, const ImageGrid& grid,
                             std::size_t ray) {
  RaySample sample;
  sample.row = ray;
  detail::trace_ray(geom, grid, ray, [&](std::size_t j, double a) {
    sample.entries.push_back({j, a});
  });
  return sample;
}

/// p = A x: line integrals of `v` along every ray of the scan, view-major.
inline Sinogram forward_project(const ScanGeometry& geom, const Volume& v) {
  Sinogram out(geom);
  const auto& x = v.values();
  const std::size_t m = out.ray_count();
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    detail::trace_ray(geom, v.grid(), i,
                      [&](std::size_t j, double a) { sum += a * x[j]; });
    out.values()[i] = sum;
  }
  return out;
}

/// x = A^T s: scatter of the sinogram back along the same rays, on `grid`.
inline Volume back_project(const ScanGeometry& geom, const Sinogram& s,
                           const ImageGrid& grid) {
  Volume out(grid);
  auto& x = out.values();
  const std::size_t m = s.ray_count();
  for (std::size_t i = 0; i < m; ++i) {
    const double si = s.values()[i];
    detail::trace_ray(geom, grid, i,
                      [&](std::size_t j, double a) { x[j] += a * si; });
  }
  return out;
}

/// Row and column weight vectors of the implicit matrix. When `weights` is
/// given the matrix is taken as the row-scaled W^(1/2) A (entry
/// sqrt(w_i) * a_ij); nnz counts are unaffected by scaling.
enum class NormalizationKind {
  RowSum,        // per ray: sum_j a_ij                     (length m)
  RowSqNorm,     // per ray: sum_j a_ij^2                   (length m)
  ColSum,        // per pixel: sum over all rays of a_ij    (length n)
  ColSumSubset,  // per pixel: sum over rays of the subset  (length n)
  ColNnzSubset,  // per pixel: count of nonzeros in subset  (length n)
  SqsColWeight,  // per pixel: sum_i a_ij * (sum_k a_ik)    (length n)
};

namespace detail {
inline std::vector<std::size_t> subset_rays(const ScanGeometry& geom,
                                            const std::vector<int>& views) {
  const int dets = num_dets(geom);
  const int nv = num_views(geom);
  std::vector<std::size_t> rays;
  rays.reserve(views.size() * dets);
  for (int v : views) {
    require(v >= 0 && v < nv, ErrorCode::IndexOutOfRange,
            "subset view index out of range");
    for (int k = 0; k < dets; ++k)
      rays.push_back(static_cast<std::size_t>(v) * dets + k);
  }
  return rays;
}
}  // namespace detail

inline std::vector<double> normalization(
    const ScanGeometry& geom, const ImageGrid& grid, NormalizationKind kind,
    const std::vector<int>* subset_views = nullptr,
    const std::vector<double>* weights = nullptr) {
  const std::size_t m = ray_count(geom);
  if (weights)
    require(weights->size() == m, ErrorCode::WeightLengthMismatch,
            "normalization: weights length must equal the ray count");

  const bool needs_subset = kind == NormalizationKind::ColSumSubset ||
                            kind == NormalizationKind::ColNnzSubset;
  require(!needs_subset || subset_views != nullptr, ErrorCode::SubsetRequired,
          "normalization: this kind is defined per subset");

  auto row_scale = [&](std::size_t i) {
    return weights ? std::sqrt((*weights)[i]) : 1.0;
  };

  switch (kind) {
    case NormalizationKind::RowSum: {
      std::vector<double> out(m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        double sum = 0.0;
        detail::trace_ray(geom, grid, i,
                          [&](std::size_t, double a) { sum += a; });
        out[i] = row_scale(i) * sum;
      }
      return out;
    }
    case NormalizationKind::RowSqNorm: {
      std::vector<double> out(m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        double sum = 0.0;
        detail::trace_ray(geom, grid, i,
                          [&](std::size_t, double a) { sum += a * a; });
        const double w = weights ? (*weights)[i] : 1.0;
        out[i] = w * sum;
      }
      return out;
    }
    case NormalizationKind::ColSum:
    case NormalizationKind::ColSumSubset: {
      std::vector<double> out(grid.size(), 0.0);
      std::vector<std::size_t> rays;
      if (kind == NormalizationKind::ColSumSubset)
        rays = detail::subset_rays(geom, *subset_views);
      else
        for (std::size_t i = 0; i < m; ++i) rays.push_back(i);
      for (std::size_t i : rays) {
        const double sc = row_scale(i);
        detail::trace_ray(geom, grid, i,
                          [&](std::size_t j, double a) { out[j] += sc * a; });
      }
      return out;
    }
    case NormalizationKind::ColNnzSubset: {
      std::vector<double> out(grid.size(), 0.0);
      for (std::size_t i : detail::subset_rays(geom, *subset_views))
        detail::trace_ray(geom, grid, i,
                          [&](std::size_t j, double) { out[j] += 1.0; });
      return out;
    }
    case NormalizationKind::SqsColWeight: {
      std::vector<double> out(grid.size(), 0.0);
      std::vector<RayEntry> buf;
      for (std::size_t i = 0; i < m; ++i) {
        buf.clear();
        double rowsum = 0.0;
        const double sc = row_scale(i);
        detail::trace_ray(geom, grid, i, [&](std::size_t j, double a) {
          buf.push_back({j, sc * a});
          rowsum += sc * a;
        });
        for (const auto& e : buf) out[e.j] += e.a * rowsum;
      }
      return out;
    }
  }
  fail(ErrorCode::InvalidConfig, "normalization: unknown kind");
}

}  // namespace trex
