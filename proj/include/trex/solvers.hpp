#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trex/projector.hpp"
#include "trex/types.hpp"

namespace trex {

enum class SubsetGranularity { Ray, Views, All };

/// One block of rows processed between two image updates. `of_total` is the
/// number of subsets that partition a full sweep (the ordered-subsets
/// acceleration factor); only OS-SQS reads it.
struct Subset {
  SubsetGranularity kind = SubsetGranularity::All;
  std::size_t ray = 0;     // Ray granularity
  std::vector<int> views;  // Views granularity
  int of_total = 1;

  static Subset single_ray(std::size_t i) {
    Subset s;
    s.kind = SubsetGranularity::Ray;
    s.ray = i;
    return s;
  }
  static Subset single_view(int v) {
    Subset s;
    s.kind = SubsetGranularity::Views;
    s.views = {v};
    return s;
  }
  static Subset all() { return Subset{}; }
};

/// Precomputed row/column weight vectors a method divides by. Row vectors
/// have length m, column vectors length n; per-subset column weights are
/// cheap and get recomputed on the fly instead.
struct SolverNorms {
  std::vector<double> row;
  std::vector<double> col;
};

inline SolverNorms make_solver_norms(Method method, const ScanGeometry& geom,
                                     const ImageGrid& grid) {
  SolverNorms norms;
  switch (method) {
    case Method::ART:
    case Method::BICAV:
      norms.row = normalization(geom, grid, NormalizationKind::RowSqNorm);
      break;
    case Method::SART:
      norms.row = normalization(geom, grid, NormalizationKind::RowSum);
      break;
    case Method::SIRT:
    case Method::BSSART:
      norms.row = normalization(geom, grid, NormalizationKind::RowSum);
      norms.col = normalization(geom, grid, NormalizationKind::ColSum);
      break;
    case Method::OSSQS:
      norms.col = normalization(geom, grid, NormalizationKind::SqsColWeight);
      break;
    case Method::CGLS:
      break;
  }
  return norms;
}

/// Solver iterate plus the internals a method carries between steps.
/// For CGLS `x` is the unconstrained CG iterate; use reported_x to apply
/// the nonnegativity clip to what gets measured and returned.
struct SolverState {
  Volume x;
  int iteration = 0;
  std::vector<TraceRow> trace;

  // CGLS internals
  bool cg_ready = false;
  std::vector<double> cg_r, cg_s, cg_d;
  double cg_gamma = 0.0;

  Volume reported_x(const SolveConfig& cfg) const {
    if (cfg.method == Method::CGLS && cfg.clip_enabled) return clip(x);
    return x;
  }
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void require_granularity(Method m, const Subset& s) {
  switch (m) {
    case Method::ART:
      require(s.kind == SubsetGranularity::Ray,
              ErrorCode::SubsetGranularityMismatch,
              "ART updates one row at a time");
      return;
    case Method::SART:
    case Method::BSSART:
    case Method::BICAV:
      require(s.kind == SubsetGranularity::Views && s.views.size() == 1,
              ErrorCode::SubsetGranularityMismatch,
              std::string(method_name(m)) + " updates one view at a time");
      return;
    case Method::OSSQS:
      require(s.kind == SubsetGranularity::Views && !s.views.empty(),
              ErrorCode::SubsetGranularityMismatch,
              "OSSQS updates a nonempty block of views");
      return;
    case Method::SIRT:
    case Method::CGLS:
      require(s.kind == SubsetGranularity::All,
              ErrorCode::SubsetGranularityMismatch,
              std::string(method_name(m)) + " updates all rows at once");
      return;
  }
}

inline void art_step(SolverState& st, const ScanGeometry& geom,
                     const Sinogram& p, std::size_t ray, double alpha,
                     const SolverNorms& norms, bool clip_enabled) {
  static thread_local std::vector<RayEntry> buf;
  buf.clear();
  auto& x = st.x.values();
  double fp = 0.0;
  trace_ray(geom, st.x.grid(), ray, [&](std::size_t j, double a) {
    buf.push_back({j, a});
    fp += a * x[j];
  });
  const double r = norms.row[ray];
  if (r <= 0.0) return;
  const double delta = alpha * (p.values()[ray] - fp) / r;
  for (const auto& e : buf) {
    x[e.j] += delta * e.a;
    if (clip_enabled && x[e.j] < 0.0) x[e.j] = 0.0;
  }
}

/// Shared per-view update for SART / BSSART / BICAV. They differ only in
/// the row normalizer already baked into `norms.row` and in the column
/// weight: SART divides by the view's column sums, BICAV by the view's
/// per-column nonzero counts, BSSART by the global column sums.
inline void view_step(Method method, SolverState& st, const ScanGeometry& geom,
                      const Sinogram& p, int view, double alpha,
                      const SolverNorms& norms, bool clip_enabled) {
  static thread_local std::vector<double> colw, quo;
  auto& x = st.x.values();
  const ImageGrid& grid = st.x.grid();
  const int dets = num_dets(geom);
  const std::size_t first = static_cast<std::size_t>(view) * dets;

  const bool view_cols = method != Method::BSSART;
  const bool nnz_cols = method == Method::BICAV;
  if (view_cols) colw.assign(grid.size(), 0.0);
  quo.assign(dets, 0.0);

  for (int k = 0; k < dets; ++k) {
    const std::size_t i = first + k;
    double fp = 0.0;
    trace_ray(geom, grid, i, [&](std::size_t j, double a) {
      fp += a * x[j];
      if (view_cols) colw[j] += nnz_cols ? 1.0 : a;
    });
    const double r = norms.row[i];
    quo[k] = r > 0.0 ? (p.values()[i] - fp) / r : 0.0;
  }

  const std::vector<double>& cw = view_cols ? colw : norms.col;
  for (int k = 0; k < dets; ++k) {
    const double q = quo[k];
    if (q == 0.0) continue;
    trace_ray(geom, grid, first + k, [&](std::size_t j, double a) {
      const double c = cw[j];
      if (c > 0.0) x[j] += alpha * a * q / c;
    });
  }
  if (clip_enabled) clip_in_place(x);
}

inline void sirt_step(SolverState& st, const ScanGeometry& geom,
                      const Sinogram& p, double alpha,
                      const SolverNorms& norms, bool clip_enabled) {
  auto& x = st.x.values();
  const ImageGrid& grid = st.x.grid();
  const std::size_t m = p.ray_count();
  static thread_local std::vector<double> quo;
  quo.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double fp = 0.0;
    trace_ray(geom, grid, i,
              [&](std::size_t j, double a) { fp += a * x[j]; });
    const double r = norms.row[i];
    quo[i] = r > 0.0 ? (p.values()[i] - fp) / r : 0.0;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double q = quo[i];
    if (q == 0.0) continue;
    trace_ray(geom, grid, i, [&](std::size_t j, double a) {
      const double c = norms.col[j];
      if (c > 0.0) x[j] += alpha * a * q / c;
    });
  }
  if (clip_enabled) clip_in_place(x);
}

inline void ossqs_step(SolverState& st, const ScanGeometry& geom,
                       const Sinogram& p, const Subset& subset, double alpha,
                       const SolverNorms& norms, bool clip_enabled) {
  auto& x = st.x.values();
  const ImageGrid& grid = st.x.grid();
  const int dets = num_dets(geom);
  const double scale = alpha * subset.of_total;
  static thread_local std::vector<double> quo;
  quo.assign(static_cast<std::size_t>(subset.views.size()) * dets, 0.0);

  std::size_t qi = 0;
  for (int v : subset.views)
    for (int k = 0; k < dets; ++k, ++qi) {
      const std::size_t i = static_cast<std::size_t>(v) * dets + k;
      double fp = 0.0;
      trace_ray(geom, grid, i,
                [&](std::size_t j, double a) { fp += a * x[j]; });
      quo[qi] = p.values()[i] - fp;
    }

  qi = 0;
  for (int v : subset.views)
    for (int k = 0; k < dets; ++k, ++qi) {
      const double q = quo[qi];
      if (q == 0.0) continue;
      trace_ray(geom, grid, static_cast<std::size_t>(v) * dets + k,
                [&](std::size_t j, double a) {
                  const double c = norms.col[j];
                  if (c > 0.0) x[j] += scale * a * q / c;
                });
    }
  if (clip_enabled) clip_in_place(x);
}

inline void cgls_step(SolverState& st, const ScanGeometry& geom,
                      const Sinogram& p) {
  auto& x = st.x.values();
  const ImageGrid& grid = st.x.grid();
  const std::size_t m = p.ray_count();
  const std::size_t n = grid.size();

  if (!st.cg_ready) {
    st.cg_r.assign(p.values().begin(), p.values().end());
    bool x_zero = true;
    for (double v : x)
      if (v != 0.0) {
        x_zero = false;
        break;
      }
    if (!x_zero)
      for (std::size_t i = 0; i < m; ++i) {
        double fp = 0.0;
        trace_ray(geom, grid, i,
                  [&](std::size_t j, double a) { fp += a * x[j]; });
        st.cg_r[i] -= fp;
      }
    st.cg_s.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double ri = st.cg_r[i];
      if (ri == 0.0) continue;
      trace_ray(geom, grid, i,
                [&](std::size_t j, double a) { st.cg_s[j] += a * ri; });
    }
    st.cg_d = st.cg_s;
    st.cg_gamma = dot(st.cg_s, st.cg_s);
    st.cg_ready = true;
  }

  if (st.cg_gamma == 0.0) return;  // normal equations already solved

  static thread_local std::vector<double> q;
  q.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double fp = 0.0;
    trace_ray(geom, grid, i,
              [&](std::size_t j, double a) { fp += a * st.cg_d[j]; });
    q[i] = fp;
  }
  const double qq = dot(q, q);
  if (qq == 0.0) return;
  const double step = st.cg_gamma / qq;
  for (std::size_t j = 0; j < n; ++j) x[j] += step * st.cg_d[j];
  for (std::size_t i = 0; i < m; ++i) st.cg_r[i] -= step * q[i];

  st.cg_s.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double ri = st.cg_r[i];
    if (ri == 0.0) continue;
    trace_ray(geom, grid, i,
              [&](std::size_t j, double a) { st.cg_s[j] += a * ri; });
  }
  const double gamma_new = dot(st.cg_s, st.cg_s);
  const double beta = gamma_new / st.cg_gamma;  // Fletcher-Reeves ratio
  st.cg_gamma = gamma_new;
  for (std::size_t j = 0; j < n; ++j)
    st.cg_d[j] = st.cg_s[j] + beta * st.cg_d[j];
}

}  // namespace detail

/// Applies one subset update of `method` to the state, in place.
inline void solver_step(Method method, SolverState& st,
                        const ScanGeometry& geom, const Sinogram& p,
                        const Subset& subset, double alpha,
                        const SolverNorms& norms, bool clip_enabled = true) {
  detail::require_granularity(method, subset);
  const std::size_t m = p.ray_count();
  const std::size_t n = st.x.grid().size();
  const bool needs_row = method == Method::ART || method == Method::SART ||
                         method == Method::SIRT || method == Method::BSSART ||
                         method == Method::BICAV;
  const bool needs_col = method == Method::SIRT || method == Method::BSSART ||
                         method == Method::OSSQS;
  require(!needs_row || norms.row.size() == m, ErrorCode::LengthMismatch,
          "solver_step: row norms must have one entry per ray");
  require(!needs_col || norms.col.size() == n, ErrorCode::LengthMismatch,
          "solver_step: col norms must have one entry per pixel");
  switch (method) {
    case Method::ART:
      require(subset.ray < m, ErrorCode::IndexOutOfRange,
              "solver_step: ray index out of range");
      detail::art_step(st, geom, p, subset.ray, alpha, norms, clip_enabled);
      return;
    case Method::SART:
    case Method::BSSART:
    case Method::BICAV:
      detail::view_step(method, st, geom, p, subset.views[0], alpha, norms,
                        clip_enabled);
      return;
    case Method::SIRT:
      detail::sirt_step(st, geom, p, alpha, norms, clip_enabled);
      return;
    case Method::OSSQS:
      detail::ossqs_step(st, geom, p, subset, alpha, norms, clip_enabled);
      return;
    case Method::CGLS:
      detail::cgls_step(st, geom, p);
      return;
  }
}

/// Subset schedule of one full sweep, in update order.
inline std::vector<Subset> make_subsets(const SolveConfig& cfg,
                                        const ScanGeometry& geom) {
  const int nv = num_views(geom);
  std::vector<Subset> subsets;
  switch (cfg.method) {
    case Method::ART: {
      const std::size_t m = ray_count(geom);
      subsets.reserve(m);
      for (std::size_t i = 0; i < m; ++i)
        subsets.push_back(Subset::single_ray(i));
      break;
    }
    case Method::SART:
    case Method::BSSART:
    case Method::BICAV:
      subsets.reserve(nv);
      for (int v = 0; v < nv; ++v) subsets.push_back(Subset::single_view(v));
      break;
    case Method::OSSQS: {
      const int s = cfg.num_subsets > 0 ? cfg.num_subsets : nv;
      require(s <= nv, ErrorCode::InvalidConfig,
              "OSSQS: num_subsets must not exceed the number of views");
      for (int q = 0; q < s; ++q) {
        Subset sub;
        sub.kind = SubsetGranularity::Views;
        sub.of_total = s;
        const int lo = static_cast<int>(static_cast<long long>(q) * nv / s);
        const int hi =
            static_cast<int>(static_cast<long long>(q + 1) * nv / s);
        for (int v = lo; v < hi; ++v) sub.views.push_back(v);
        subsets.push_back(std::move(sub));
      }
      break;
    }
    case Method::SIRT:
    case Method::CGLS:
      subsets.push_back(Subset::all());
      break;
  }
  if (cfg.bit_reversal_order && subsets.size() > 1) {
    const int count = static_cast<int>(subsets.size());
    int bits = 0;
    while ((1 << bits) < count) ++bits;
    std::vector<Subset> reordered;
    reordered.reserve(count);
    for (int i = 0; i < (1 << bits); ++i) {
      int r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (1 << b)) r |= 1 << (bits - 1 - b);
      if (r < count) reordered.push_back(std::move(subsets[r]));
    }
    subsets = std::move(reordered);
  }
  return subsets;
}

/// Runs `cfg.outer_iters` full sweeps from x = 0 and records one trace row
/// per sweep. SNR is NaN without a ground truth. The sinogram's own geometry
/// drives the projector; `grid` is the reconstruction grid.
inline SolverState run_solver(const SolveConfig& cfg, const ImageGrid& grid,
                              const Sinogram& p,
                              const Volume* ground_truth = nullptr) {
  cfg.validate();
  if (ground_truth)
    require(ground_truth->grid() == grid, ErrorCode::GridMismatch,
            "run_solver: ground truth grid must match the solve grid");
  const ScanGeometry& geom = p.geometry();

  SolverState st;
  st.x = Volume(grid);
  if (cfg.outer_iters == 0) return st;

  const SolverNorms norms = make_solver_norms(cfg.method, geom, grid);
  const auto subsets = make_subsets(cfg, geom);
  const auto t_start = std::chrono::steady_clock::now();

  for (int t = 1; t <= cfg.outer_iters; ++t) {
    for (const auto& s : subsets)
      solver_step(cfg.method, st, geom, p, s, cfg.alpha, norms,
                  cfg.clip_enabled);
    st.iteration = t;

    for (double v : st.x.values())
      require(std::isfinite(v), ErrorCode::NonFiniteData,
              "run_solver: iterate diverged to non-finite values");

    const Volume xr = st.reported_x(cfg);
    const Sinogram ax = forward_project(geom, xr);
    double res = 0.0;
    for (std::size_t i = 0; i < ax.ray_count(); ++i) {
      const double d = ax.values()[i] - p.values()[i];
      res += d * d;
    }
    TraceRow row;
    row.iter = t;
    row.snr_db = ground_truth ? snr(xr, *ground_truth)
                              : std::numeric_limits<double>::quiet_NaN();
    row.residual_l2 = std::sqrt(res);
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    st.trace.push_back(row);
  }
  return st;
}

}  // namespace trex
