#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "trex/types.hpp"

namespace trex {

/// Sparsifying linear operators used by the regularized reconstructions.
///  GradITV: forward-difference gradient, prox couples each (dx, dy) pair.
///  GradATV: same operator, prox thresholds every component on its own.
///  SAD8:    all eight neighbor differences x_i - x_k per pixel.
enum class RegKind { GradITV, GradATV, SAD8 };

inline const char* reg_kind_name(RegKind k) {
  switch (k) {
    case RegKind::GradITV: return "ITV";
    case RegKind::GradATV: return "ATV";
    case RegKind::SAD8: return "SAD8";
  }
  return "?";
}

struct RegOp {
  RegKind kind = RegKind::GradITV;
  ImageGrid grid;
  double sigma = 0.0;  // regularization strength, >= 0

  RegOp() = default;
  RegOp(RegKind kind_, const ImageGrid& grid_, double sigma_)
      : kind(kind_), grid(grid_), sigma(sigma_) {
    require(sigma >= 0 && std::isfinite(sigma), ErrorCode::InvalidConfig,
            "RegOp: sigma must be >= 0");
  }

  int components() const { return kind == RegKind::SAD8 ? 8 : 2; }
  std::size_t rows() const { return grid.size() * components(); }
};

namespace detail {

// SAD8 neighbor offsets, clockwise from East, in (dx, dy) index steps with
// y growing toward the next image row.
inline constexpr int sad8_dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
inline constexpr int sad8_dy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

}  // namespace detail

/// K x. Layout is pixel-major: components c of pixel j live at
/// j * components + c. Gradient components are (horizontal, vertical)
/// forward differences x(ix+1,iy) - x(ix,iy) and x(ix,iy+1) - x(ix,iy);
/// SAD8 components are x_i - x_k over the eight neighbors. Differences that
/// would reach outside the grid are zero rows.
inline std::vector<double> reg_apply(const RegOp& op, const Volume& v) {
  require(v.grid() == op.grid, ErrorCode::GridMismatch,
          "reg_apply: volume grid does not match operator grid");
  const auto& x = v.values();
  const int nx = op.grid.nx, ny = op.grid.ny;
  std::vector<double> out(op.rows(), 0.0);

  if (op.kind == RegKind::SAD8) {
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        const std::size_t j = op.grid.index(ix, iy);
        const double xj = x[j];
        for (int c = 0; c < 8; ++c) {
          const int kx = ix + detail::sad8_dx[c];
          const int ky = iy + detail::sad8_dy[c];
          if (kx < 0 || kx >= nx || ky < 0 || ky >= ny) continue;
          out[j * 8 + c] = xj - x[op.grid.index(kx, ky)];
        }
      }
    return out;
  }

  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t j = op.grid.index(ix, iy);
      if (ix + 1 < nx) out[j * 2] = x[j + 1] - x[j];
      if (iy + 1 < ny) out[j * 2 + 1] = x[j + nx] - x[j];
    }
  return out;
}

/// K^T z.
inline Volume reg_adjoint(const RegOp& op, const std::vector<double>& z) {
  require(z.size() == op.rows(), ErrorCode::LengthMismatch,
          "reg_adjoint: input length does not match operator rows");
  const int nx = op.grid.nx, ny = op.grid.ny;
  Volume out(op.grid);
  auto& x = out.values();

  if (op.kind == RegKind::SAD8) {
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        const std::size_t j = op.grid.index(ix, iy);
        for (int c = 0; c < 8; ++c) {
          const int kx = ix + detail::sad8_dx[c];
          const int ky = iy + detail::sad8_dy[c];
          if (kx < 0 || kx >= nx || ky < 0 || ky >= ny) continue;
          const double v = z[j * 8 + c];
          x[j] += v;
          x[op.grid.index(kx, ky)] -= v;
        }
      }
    return out;
  }

  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t j = op.grid.index(ix, iy);
      if (ix + 1 < nx) {
        x[j] -= z[j * 2];
        x[j + 1] += z[j * 2];
      }
      if (iy + 1 < ny) {
        x[j] -= z[j * 2 + 1];
        x[j + nx] += z[j * 2 + 1];
      }
    }
  return out;
}

/// prox_{lambda * sigma * g}(u) in the range space of K, where g is the
/// group L2 norm for GradITV (pairwise shrinkage) and the L1 norm for
/// GradATV and SAD8 (soft thresholding). The threshold is lambda * sigma;
/// sigma = 0 makes this the identity.
inline std::vector<double> prox_reg(const RegOp& op, double lambda,
                                    const std::vector<double>& u) {
  require(lambda > 0 && std::isfinite(lambda), ErrorCode::InvalidLambda,
          "prox_reg: lambda must be > 0");
  require(u.size() == op.rows(), ErrorCode::LengthMismatch,
          "prox_reg: input length does not match operator rows");
  const double tau = lambda * op.sigma;
  std::vector<double> out(u.size());
  if (tau == 0.0) {
    out = u;
    return out;
  }

  if (op.kind == RegKind::GradITV) {
    for (std::size_t j = 0; j < u.size(); j += 2) {
      const double a = u[j], b = u[j + 1];
      const double nrm = std::hypot(a, b);
      const double den = std::max(tau, nrm);
      out[j] = a - tau * a / den;
      out[j + 1] = b - tau * b / den;
    }
    return out;
  }

  for (std::size_t j = 0; j < u.size(); ++j) {
    const double mag = std::abs(u[j]) - tau;
    out[j] = mag > 0 ? std::copysign(mag, u[j]) : 0.0;
  }
  return out;
}

/// Largest singular value of a linear operator by power iteration on A^T A.
/// apply: vector(n) -> vector(d); adjoint: vector(d) -> vector(n).
/// Deterministic for a fixed seed.
template <class Apply, class Adjoint>
double operator_norm(std::size_t dim_in, Apply&& apply, Adjoint&& adjoint,
                     double tol = 1e-10, int max_iters = 100000,
                     std::uint64_t seed = 0x243f6a8885a308d3ull) {
  require(dim_in >= 1, ErrorCode::InvalidConfig,
          "operator_norm: empty domain");
  std::mt19937_64 rng(seed);
  std::vector<double> v(dim_in);
  double nv = 0.0;
  for (double& c : v) {
    // map the top 53 bits to [0, 1); keeps the stream identical everywhere
    const double r = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    c = 2.0 * r - 1.0;
    nv += c * c;
  }
  nv = std::sqrt(nv);
  if (nv == 0.0) {
    v[0] = 1.0;
    nv = 1.0;
  }
  for (double& c : v) c /= nv;

  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    auto w = apply(v);
    double nw = 0.0;
    for (double c : w) nw += c * c;
    const double est = std::sqrt(nw);
    if (it > 0 && std::abs(est - sigma) <= tol * std::max(est, 1e-300))
      return est;
    sigma = est;
    auto u = adjoint(w);
    require(u.size() == dim_in, ErrorCode::LengthMismatch,
            "operator_norm: adjoint returned wrong dimension");
    double nu = 0.0;
    for (double c : u) nu += c * c;
    nu = std::sqrt(nu);
    if (nu == 0.0) return sigma;  // current direction is annihilated
    for (std::size_t j = 0; j < dim_in; ++j) v[j] = u[j] / nu;
  }
  return sigma;
}

/// ||K||_2 of a regularization operator.
inline double op_norm(const RegOp& op, double tol = 1e-10,
                      std::uint64_t seed = 0x243f6a8885a308d3ull) {
  return operator_norm(
      op.grid.size(),
      [&](const std::vector<double>& x) {
        return reg_apply(op, Volume(op.grid, x));
      },
      [&](const std::vector<double>& z) {
        return reg_adjoint(op, z).values();
      },
      tol, 100000, seed);
}

}  // namespace trex
