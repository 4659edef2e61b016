#pragma once

#include <cmath>
#include <vector>

#include "trex/projector.hpp"
#include "trex/solvers.hpp"
#include "trex/types.hpp"

namespace trex {

/// State of the least-squares proximal evaluation
///   argmin_x ||A x - p||^2 (optionally row-weighted) + 1/(2 lambda) ||x - u||^2,
/// solved matrix-free on the lifted system that stacks the scaled residual
/// block y = sqrt(2 lambda) (p - A x) on top of the coupling block x - u.
/// SART/ART/BICAV sweeps carry y; the OS-SQS sweep needs no lifting.
struct ProxState {
  Volume x;
  std::vector<double> y;
};

/// Lifted row denominators (always >= 1) and, for OS-SQS, the separable
/// quadratic column weights of the data block.
struct ProxNorms {
  std::vector<double> row;
  std::vector<double> col;
};

inline ProxNorms make_prox_norms(const ProxConfig& cfg,
                                 const ScanGeometry& geom,
                                 const ImageGrid& grid) {
  const std::vector<double>* w = cfg.weights ? &*cfg.weights : nullptr;
  ProxNorms norms;
  switch (cfg.method) {
    case ProxMethod::SART: {
      norms.row = normalization(geom, grid, NormalizationKind::RowSum,
                                nullptr, w);
      const double s2l = std::sqrt(2.0 * cfg.lambda);
      for (double& r : norms.row) r = s2l * r + 1.0;
      return norms;
    }
    case ProxMethod::ART:
    case ProxMethod::BICAV: {
      norms.row = normalization(geom, grid, NormalizationKind::RowSqNorm,
                                nullptr, w);
      const double t2l = 2.0 * cfg.lambda;
      for (double& r : norms.row) r = t2l * r + 1.0;
      return norms;
    }
    case ProxMethod::OSSQS:
      norms.col = normalization(geom, grid, NormalizationKind::SqsColWeight,
                                nullptr, w);
      return norms;
  }
  fail(ErrorCode::InvalidConfig, "make_prox_norms: unknown method");
}

inline ProxState make_prox_state(const ProxConfig& cfg, std::size_t rays,
                                 const Volume& u) {
  ProxState st;
  if (cfg.method == ProxMethod::OSSQS) {
    st.x = Volume(u.grid());  // zeros; u enters through the update itself
  } else {
    st.x = u;
    st.y.assign(rays, 0.0);
  }
  return st;
}

namespace detail {

inline double prox_row_scale(const ProxConfig& cfg, std::size_t i) {
  return cfg.weights ? std::sqrt((*cfg.weights)[i]) : 1.0;
}

inline void prox_art_step(const ProxConfig& cfg, ProxState& st,
                          const ScanGeometry& geom, const Sinogram& p,
                          std::size_t ray, const ProxNorms& norms) {
  static thread_local std::vector<RayEntry> buf;
  buf.clear();
  auto& x = st.x.values();
  const double sc = prox_row_scale(cfg, ray);
  const double s2l = std::sqrt(2.0 * cfg.lambda);
  double fp = 0.0;
  trace_ray(geom, st.x.grid(), ray, [&](std::size_t j, double a) {
    buf.push_back({j, sc * a});
    fp += sc * a * x[j];
  });
  const double dy = cfg.alpha *
                    (s2l * sc * p.values()[ray] - s2l * fp - st.y[ray]) /
                    norms.row[ray];
  st.y[ray] += dy;
  for (const auto& e : buf) {
    x[e.j] += dy * s2l * e.a;
    if (cfg.clip_enabled && x[e.j] < 0.0) x[e.j] = 0.0;
  }
}

/// Shared per-view sweep for the SART and BICAV flavors: simultaneous
/// residual-block update plus a column-normalized image update, where SART
/// divides by the view's scaled column sums and BICAV by the view's
/// per-column nonzero counts.
inline void prox_view_step(const ProxConfig& cfg, ProxState& st,
                           const ScanGeometry& geom, const Sinogram& p,
                           int view, const ProxNorms& norms) {
  static thread_local std::vector<double> colw, dy;
  auto& x = st.x.values();
  const ImageGrid& grid = st.x.grid();
  const int dets = num_dets(geom);
  const std::size_t first = static_cast<std::size_t>(view) * dets;
  const double s2l = std::sqrt(2.0 * cfg.lambda);
  const bool nnz_cols = cfg.method == ProxMethod::BICAV;

  colw.assign(grid.size(), 0.0);
  dy.assign(dets, 0.0);

  for (int k = 0; k < dets; ++k) {
    const std::size_t i = first + k;
    const double sc = prox_row_scale(cfg, i);
    double fp = 0.0;
    trace_ray(geom, grid, i, [&](std::size_t j, double a) {
      fp += sc * a * x[j];
      colw[j] += nnz_cols ? 1.0 : sc * a;
    });
    dy[k] = cfg.alpha *
            (s2l * sc * p.values()[i] - s2l * fp - st.y[i]) / norms.row[i];
  }

  for (int k = 0; k < dets; ++k) {
    const std::size_t i = first + k;
    st.y[i] += dy[k];
    const double d = dy[k];
    if (d == 0.0) continue;
    const double sc = prox_row_scale(cfg, i);
    trace_ray(geom, grid, i, [&](std::size_t j, double a) {
      const double den = nnz_cols ? colw[j] : s2l * colw[j];
      if (den > 0.0) x[j] += d * s2l * sc * a / den;
    });
  }
  if (cfg.clip_enabled) clip_in_place(x);
}

inline void prox_ossqs_step(const ProxConfig& cfg, ProxState& st,
                            const ScanGeometry& geom, const Sinogram& p,
                            const Subset& subset, const ProxNorms& norms,
                            const Volume& u) {
  static thread_local std::vector<double> quo, grad;
  auto& x = st.x.values();
  const ImageGrid& grid = st.x.grid();
  const int dets = num_dets(geom);
  const double t2l = 2.0 * cfg.lambda;
  const double scale = cfg.alpha * subset.of_total;

  quo.assign(static_cast<std::size_t>(subset.views.size()) * dets, 0.0);
  grad.assign(grid.size(), 0.0);

  std::size_t qi = 0;
  for (int v : subset.views)
    for (int k = 0; k < dets; ++k, ++qi) {
      const std::size_t i = static_cast<std::size_t>(v) * dets + k;
      const double sc = prox_row_scale(cfg, i);
      double fp = 0.0;
      trace_ray(geom, grid, i,
                [&](std::size_t j, double a) { fp += sc * a * x[j]; });
      quo[qi] = sc * p.values()[i] - fp;
    }

  qi = 0;
  for (int v : subset.views)
    for (int k = 0; k < dets; ++k, ++qi) {
      const double q = quo[qi];
      if (q == 0.0) continue;
      const std::size_t i = static_cast<std::size_t>(v) * dets + k;
      const double sc = prox_row_scale(cfg, i);
      trace_ray(geom, grid, i, [&](std::size_t j, double a) {
        grad[j] += t2l * sc * a * q;
      });
    }

  const auto& uv = u.values();
  for (std::size_t j = 0; j < x.size(); ++j)
    x[j] += scale * (grad[j] + uv[j] - x[j]) / (t2l * norms.col[j] + 1.0);
  if (cfg.clip_enabled) clip_in_place(x);
}

inline std::vector<Subset> prox_subsets(const ProxConfig& cfg,
                                        const ScanGeometry& geom) {
  SolveConfig sc;
  switch (cfg.method) {
    case ProxMethod::ART: sc.method = Method::ART; break;
    case ProxMethod::SART: sc.method = Method::SART; break;
    case ProxMethod::BICAV: sc.method = Method::BICAV; break;
    case ProxMethod::OSSQS: sc.method = Method::OSSQS; break;
  }
  sc.num_subsets = cfg.num_subsets;
  return make_subsets(sc, geom);
}

}  // namespace detail

/// One subset update of the proximal sweep, in place. `u` is the proximal
/// center (only the OS-SQS flavor reads it after initialization).
inline void prox_inner_step(const ProxConfig& cfg, ProxState& st,
                            const ScanGeometry& geom, const Sinogram& p,
                            const Subset& subset, const ProxNorms& norms,
                            const Volume& u) {
  switch (cfg.method) {
    case ProxMethod::ART:
      require(subset.kind == SubsetGranularity::Ray,
              ErrorCode::SubsetGranularityMismatch,
              "prox ART updates one row at a time");
      require(subset.ray < p.ray_count(), ErrorCode::IndexOutOfRange,
              "prox_inner_step: ray index out of range");
      detail::prox_art_step(cfg, st, geom, p, subset.ray, norms);
      return;
    case ProxMethod::SART:
    case ProxMethod::BICAV:
      require(subset.kind == SubsetGranularity::Views &&
                  subset.views.size() == 1,
              ErrorCode::SubsetGranularityMismatch,
              "prox SART/BICAV update one view at a time");
      detail::prox_view_step(cfg, st, geom, p, subset.views[0], norms);
      return;
    case ProxMethod::OSSQS:
      require(subset.kind == SubsetGranularity::Views && !subset.views.empty(),
              ErrorCode::SubsetGranularityMismatch,
              "prox OSSQS updates a nonempty block of views");
      require(norms.col.size() == st.x.grid().size(),
              ErrorCode::LengthMismatch,
              "prox_inner_step: col norms must have one entry per pixel");
      detail::prox_ossqs_step(cfg, st, geom, p, subset, norms, u);
      return;
  }
}

/// Approximate proximal map of the (optionally weighted) projection
/// least-squares term at center u: cfg.inner_iters sweeps of the chosen
/// row-action flavor, started cold (x = u or 0 per flavor, y = 0).
inline Volume prox_ls(const ProxConfig& cfg, const Sinogram& p,
                      const Volume& u) {
  cfg.validate(p.ray_count());
  const ScanGeometry& geom = p.geometry();
  ProxState st = make_prox_state(cfg, p.ray_count(), u);
  const ProxNorms norms = make_prox_norms(cfg, geom, u.grid());
  const auto subsets = detail::prox_subsets(cfg, geom);
  for (int it = 0; it < cfg.inner_iters; ++it)
    for (const auto& s : subsets)
      prox_inner_step(cfg, st, geom, p, s, norms, u);
  return st.x;
}

}  // namespace trex
