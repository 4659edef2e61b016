#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "trex/noise.hpp"
#include "trex/prox_data.hpp"
#include "trex/regularizers.hpp"
#include "trex/types.hpp"

namespace trex {

enum class DataTerm { GaussianLS, PoissonWLS };

/// Regularized reconstruction via linearized ADMM on
///   min_x f(x) + g(K x),
/// f the (optionally statistically weighted) projection least-squares term
/// handled by an approximate row-action prox, g the sparsifying penalty of
/// `reg`, K its linear operator.
struct TrexConfig {
  DataTerm data_term = DataTerm::GaussianLS;
  ProxConfig prox;  // lambda is replaced by the resolved mu on every call
  RegOp reg;
  double rho = 25.0;  // penalty on the splitting constraint
  double mu = 0.0;    // primal step; 0 selects 1 / (rho * ||K||^2)
  int outer_iters = 30;
  double opnorm_tol = 1e-10;
  std::uint64_t opnorm_seed = 0x243f6a8885a308d3ull;
};

struct TrexState {
  Volume x;
  std::vector<double> z;  // split variable in the range of K
  std::vector<double> y;  // scaled dual
  int iteration = 0;
  double mu = 0.0;      // resolved primal step
  double k_norm = 0.0;  // inflated operator norm estimate used for the bound
  std::vector<TrexTraceRow> trace;
};

/// Called after every outer iteration with the updated state and K x^{t+1}.
using TrexObserver =
    std::function<void(const TrexState&, const std::vector<double>& kx)>;

/// Runs `cfg.outer_iters` linearized ADMM iterations from x = 0, z = Kx,
/// y = 0. The measured sinogram `p` drives the data prox; `intensity`
/// supplies photon counts when data_term is PoissonWLS and no weights were
/// preset. The step bound mu * rho * ||K||^2 < 1 is enforced against a 1%
/// inflated power-iteration estimate; the automatic mu satisfies it by
/// construction.
inline TrexState run_trex(const TrexConfig& cfg, const Sinogram& p,
                          const Sinogram* intensity = nullptr,
                          const Volume* ground_truth = nullptr,
                          const TrexObserver& observer = {}) {
  require(cfg.rho > 0 && std::isfinite(cfg.rho), ErrorCode::InvalidConfig,
          "run_trex: rho must be > 0");
  require(cfg.outer_iters >= 0, ErrorCode::InvalidConfig,
          "run_trex: outer_iters must be >= 0");
  require(cfg.mu >= 0 && std::isfinite(cfg.mu), ErrorCode::InvalidConfig,
          "run_trex: mu must be >= 0 (0 selects the automatic step)");
  const ImageGrid& grid = cfg.reg.grid;
  if (ground_truth)
    require(ground_truth->grid() == grid, ErrorCode::GridMismatch,
            "run_trex: ground truth grid must match the regularizer grid");

  const double kn_est = op_norm(cfg.reg, cfg.opnorm_tol, cfg.opnorm_seed);
  const double kn = 1.01 * kn_est;
  require(kn > 0, ErrorCode::InvalidConfig,
          "run_trex: regularization operator has zero norm on this grid");
  const double knsq = kn * kn;

  double mu = cfg.mu;
  if (mu == 0.0) {
    mu = 1.0 / (cfg.rho * knsq);
  } else {
    require(mu * cfg.rho * knsq < 1.0, ErrorCode::StepSizeViolation,
            "run_trex: mu * rho * ||K||^2 must be < 1");
  }

  ProxConfig prox_cfg = cfg.prox;
  prox_cfg.lambda = mu;
  if (cfg.data_term == DataTerm::PoissonWLS && !prox_cfg.weights) {
    require(intensity != nullptr, ErrorCode::MissingIntensityData,
            "run_trex: PoissonWLS needs photon counts or preset weights");
    prox_cfg.weights = poisson_weights(*intensity, prox_cfg.mapping);
  }
  prox_cfg.validate(p.ray_count());

  TrexState st;
  st.mu = mu;
  st.k_norm = kn;
  st.x = Volume(grid);
  st.z.assign(cfg.reg.rows(), 0.0);  // K of the zero start
  st.y.assign(cfg.reg.rows(), 0.0);

  const double rho_mu = cfg.rho * mu;
  const double inv_rho = 1.0 / cfg.rho;
  const auto t_start = std::chrono::steady_clock::now();
  std::vector<double> w(cfg.reg.rows());

  for (int t = 1; t <= cfg.outer_iters; ++t) {
    // x-step: prox of f at x - rho*mu*K^T(Kx - z + y)
    std::vector<double> kx = reg_apply(cfg.reg, st.x);
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = kx[i] - st.z[i] + st.y[i];
    Volume grad = reg_adjoint(cfg.reg, w);
    Volume u = st.x;
    for (std::size_t j = 0; j < u.values().size(); ++j)
      u.values()[j] -= rho_mu * grad.values()[j];
    st.x = prox_ls(prox_cfg, p, u);

    // z-step: prox of g at Kx + y
    kx = reg_apply(cfg.reg, st.x);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = kx[i] + st.y[i];
    std::vector<double> z_prev = std::move(st.z);
    st.z = prox_reg(cfg.reg, inv_rho, w);

    // dual ascent on the splitting constraint
    for (std::size_t i = 0; i < st.y.size(); ++i)
      st.y[i] += kx[i] - st.z[i];

    st.iteration = t;

    double primal = 0.0, dual = 0.0;
    for (std::size_t i = 0; i < st.z.size(); ++i) {
      const double d = kx[i] - st.z[i];
      primal += d * d;
      w[i] = st.z[i] - z_prev[i];
    }
    const Volume dz = reg_adjoint(cfg.reg, w);
    for (double v : dz.values()) dual += v * v;

    TrexTraceRow row;
    row.iter = t;
    row.snr_db = ground_truth ? snr(st.x, *ground_truth)
                              : std::numeric_limits<double>::quiet_NaN();
    row.primal_res = std::sqrt(primal);
    row.dual_res = cfg.rho * std::sqrt(dual);
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    st.trace.push_back(row);

    if (observer) observer(st, kx);
  }
  return st;
}

}  // namespace trex
