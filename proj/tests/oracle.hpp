#pragma once

// Dense reference implementations used only by tests: everything here is
// assembled with Eigen and solved by factorization so the matrix-free
// library code is checked against an independent numerical path.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "trex/trex.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

/// Dense system matrix, row by row from the sampled ray entries. An
/// optional weight vector pre-scales row i by sqrt(w_i).
inline MatrixXd dense_matrix(const trex::ScanGeometry& geom,
                             const trex::ImageGrid& grid,
                             const std::vector<double>* weights = nullptr) {
  const auto m = static_cast<Eigen::Index>(trex::ray_count(geom));
  const auto n = static_cast<Eigen::Index>(grid.size());
  MatrixXd A = MatrixXd::Zero(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sc = weights ? std::sqrt((*weights)[i]) : 1.0;
    const auto row = trex::row_entries(geom, grid, static_cast<std::size_t>(i));
    for (const auto& e : row.entries)
      A(i, static_cast<Eigen::Index>(e.j)) += sc * e.a;
  }
  return A;
}

/// Minimum-norm least-squares solution A^+ b.
inline VectorXd min_norm_solve(const MatrixXd& A, const VectorXd& b) {
  return A.completeOrthogonalDecomposition().solve(b);
}

/// Optimum of || A x - b ||^2 weighted by diag(d)^{-1}; rows with d_i = 0
/// are dropped (they correspond to rays that miss the grid).
inline VectorXd weighted_ls_solve(const MatrixXd& A, const VectorXd& b,
                                  const VectorXd& d) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d(i) > 0) keep.push_back(i);
  MatrixXd B(static_cast<Eigen::Index>(keep.size()), A.cols());
  VectorXd q(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const double s = 1.0 / std::sqrt(d(keep[k]));
    B.row(static_cast<Eigen::Index>(k)) = s * A.row(keep[k]);
    q(static_cast<Eigen::Index>(k)) = s * b(keep[k]);
  }
  return B.completeOrthogonalDecomposition().solve(q);
}

/// Closed-form minimizer of ||A x - p||^2 + 1/(2 lambda) ||x - u||^2:
/// (2 lambda A^T A + I)^{-1} (2 lambda A^T p + u).
inline VectorXd prox_closed_form(const MatrixXd& A, const VectorXd& p,
                                 const VectorXd& u, double lambda) {
  const Eigen::Index n = A.cols();
  const MatrixXd M =
      2.0 * lambda * (A.transpose() * A) + MatrixXd::Identity(n, n);
  return M.ldlt().solve(2.0 * lambda * (A.transpose() * p) + u);
}

/// Dense regularization operator assembled column by column.
inline MatrixXd dense_reg(const trex::RegOp& op) {
  const auto n = static_cast<Eigen::Index>(op.grid.size());
  const auto d = static_cast<Eigen::Index>(op.rows());
  MatrixXd K(d, n);
  std::vector<double> e(op.grid.size(), 0.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[static_cast<std::size_t>(j)] = 1.0;
    const auto col = trex::reg_apply(op, trex::Volume(op.grid, e));
    K.col(j) = to_vec(col);
    e[static_cast<std::size_t>(j)] = 0.0;
  }
  return K;
}

/// Sparse row view of the (optionally pre-scaled) system, in the exact
/// per-ray entry order the library traverses.
struct SparseRows {
  std::vector<trex::RaySample> rows;
  std::vector<double> p;  // pre-scaled measurements
  int dets = 0;

  SparseRows(const trex::ScanGeometry& geom, const trex::ImageGrid& grid,
             const std::vector<double>& p_raw,
             const std::vector<double>* weights = nullptr) {
    dets = trex::num_dets(geom);
    const std::size_t m = trex::ray_count(geom);
    rows.reserve(m);
    p.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      auto r = trex::row_entries(geom, grid, i);
      const double sc = weights ? std::sqrt((*weights)[i]) : 1.0;
      for (auto& e : r.entries) e.a = sc * e.a;
      p[i] = sc * p_raw[i];
      rows.push_back(std::move(r));
    }
  }

  double dot_row(std::size_t i, const std::vector<double>& x) const {
    double s = 0.0;
    for (const auto& e : rows[i].entries) s += e.a * x[e.j];
    return s;
  }
  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (const auto& e : rows[i].entries) s += e.a;
    return s;
  }
  double row_sq(std::size_t i) const {
    double s = 0.0;
    for (const auto& e : rows[i].entries) s += e.a * e.a;
    return s;
  }
};

/// Reference sweeps of the proximal row-action updates, written against the
/// update equations directly on materialized rows. Used to check the
/// library's matrix-free sweeps and to realize "the same algorithm on a
/// pre-scaled system" for the weighted-equivalence check.
struct ProxMirror {
  const SparseRows& S;
  double lambda, alpha;
  bool clip;
  std::vector<double> x, y;
  std::size_t n;

  ProxMirror(const SparseRows& s, double lambda_, double alpha_, bool clip_,
             const std::vector<double>& u, bool ossqs_style)
      : S(s), lambda(lambda_), alpha(alpha_), clip(clip_), n(u.size()) {
    if (ossqs_style) {
      x.assign(n, 0.0);
    } else {
      x = u;
      y.assign(S.rows.size(), 0.0);
    }
  }

  void clip_x() {
    if (clip)
      for (double& v : x) v = std::max(0.0, v);
  }

  void art_sweep() {
    const double s2l = std::sqrt(2.0 * lambda);
    for (std::size_t i = 0; i < S.rows.size(); ++i) {
      const double den = 2.0 * lambda * S.row_sq(i) + 1.0;
      const double dy =
          alpha * (s2l * S.p[i] - s2l * S.dot_row(i, x) - y[i]) / den;
      y[i] += dy;
      for (const auto& e : S.rows[i].entries) {
        x[e.j] += dy * s2l * e.a;
        if (clip && x[e.j] < 0.0) x[e.j] = 0.0;
      }
    }
  }

  void sart_sweep() {
    const double s2l = std::sqrt(2.0 * lambda);
    const int views = static_cast<int>(S.rows.size()) / S.dets;
    std::vector<double> colsum(n), dy(S.dets);
    for (int v = 0; v < views; ++v) {
      std::fill(colsum.begin(), colsum.end(), 0.0);
      const std::size_t first = static_cast<std::size_t>(v) * S.dets;
      for (int k = 0; k < S.dets; ++k)
        for (const auto& e : S.rows[first + k].entries) colsum[e.j] += e.a;
      for (int k = 0; k < S.dets; ++k) {
        const std::size_t i = first + k;
        const double den = s2l * S.row_sum(i) + 1.0;
        dy[k] =
            alpha * (s2l * S.p[i] - s2l * S.dot_row(i, x) - y[i]) / den;
      }
      for (int k = 0; k < S.dets; ++k) {
        const std::size_t i = first + k;
        y[i] += dy[k];
        for (const auto& e : S.rows[i].entries)
          if (colsum[e.j] > 0.0)
            x[e.j] += dy[k] * s2l * e.a / (s2l * colsum[e.j]);
      }
      clip_x();
    }
  }

  void bicav_sweep() {
    const double s2l = std::sqrt(2.0 * lambda);
    const int views = static_cast<int>(S.rows.size()) / S.dets;
    std::vector<double> cnt(n), dy(S.dets);
    for (int v = 0; v < views; ++v) {
      std::fill(cnt.begin(), cnt.end(), 0.0);
      const std::size_t first = static_cast<std::size_t>(v) * S.dets;
      for (int k = 0; k < S.dets; ++k)
        for (const auto& e : S.rows[first + k].entries) cnt[e.j] += 1.0;
      for (int k = 0; k < S.dets; ++k) {
        const std::size_t i = first + k;
        const double den = 2.0 * lambda * S.row_sq(i) + 1.0;
        dy[k] =
            alpha * (s2l * S.p[i] - s2l * S.dot_row(i, x) - y[i]) / den;
      }
      for (int k = 0; k < S.dets; ++k) {
        const std::size_t i = first + k;
        y[i] += dy[k];
        for (const auto& e : S.rows[i].entries)
          if (cnt[e.j] > 0.0) x[e.j] += dy[k] * s2l * e.a / cnt[e.j];
      }
      clip_x();
    }
  }

  /// One full pass over all `num_subsets` contiguous view blocks.
  void ossqs_sweep(const std::vector<double>& u, int num_subsets) {
    const double t2l = 2.0 * lambda;
    const int views = static_cast<int>(S.rows.size()) / S.dets;
    std::vector<double> cw(n, 0.0), grad(n);
    for (std::size_t i = 0; i < S.rows.size(); ++i) {
      const double rs = S.row_sum(i);
      for (const auto& e : S.rows[i].entries) cw[e.j] += e.a * rs;
    }
    for (int q = 0; q < num_subsets; ++q) {
      const int lo = static_cast<int>(static_cast<long long>(q) * views /
                                      num_subsets);
      const int hi = static_cast<int>(static_cast<long long>(q + 1) * views /
                                      num_subsets);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (int v = lo; v < hi; ++v)
        for (int k = 0; k < S.dets; ++k) {
          const std::size_t i = static_cast<std::size_t>(v) * S.dets + k;
          const double quo = S.p[i] - S.dot_row(i, x);
          for (const auto& e : S.rows[i].entries)
            grad[e.j] += t2l * e.a * quo;
        }
      for (std::size_t j = 0; j < n; ++j)
        x[j] += alpha * num_subsets * (grad[j] + u[j] - x[j]) /
                (t2l * cw[j] + 1.0);
      clip_x();
    }
  }
};

/// Deterministic pseudo-random vectors for oracle inputs.
inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed,
                                         double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(n);
  for (double& c : v) {
    const double r = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    c = lo + (hi - lo) * r;
  }
  return v;
}

}  // namespace oracle
