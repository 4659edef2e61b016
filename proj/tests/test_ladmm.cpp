#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracle.hpp"
#include "trex/ladmm.hpp"

using namespace trex;

namespace {

ScanGeometry fan_geometry(int views) {
  return ScanGeometry(
      FanBeamGeometry(uniform_arc(views, 2.0 * std::acos(-1.0)), 5, 1.2, 20.0,
                      10.0));
}

struct SplitProblem {
  ScanGeometry geom = fan_geometry(6);
  ImageGrid g = ImageGrid(4, 4, 1.0);
  Volume truth;
  Sinogram p;

  explicit SplitProblem(std::uint64_t seed)
      : truth(g, oracle::random_vector(g.size(), seed, 0.1, 1.0)),
        p(forward_project(geom, truth)) {
    for (std::size_t i = 0; i < p.ray_count(); ++i)
      p.values()[i] *= 1.0 + 0.02 * static_cast<double>(i % 5);
  }

  TrexConfig config(double sigma, double rho) const {
    TrexConfig cfg;
    cfg.reg = RegOp(RegKind::GradITV, g, sigma);
    cfg.rho = rho;
    cfg.prox.method = ProxMethod::SART;
    cfg.prox.inner_iters = 2;
    cfg.outer_iters = 5;
    return cfg;
  }
};

}  // namespace

TEST_CASE("automatic primal step saturates the stability bound") {
  SplitProblem pb(101);
  TrexConfig cfg = pb.config(0.05, 25.0);
  cfg.outer_iters = 1;
  const TrexState st = run_trex(cfg, pb.p);

  const double kn = 1.01 * op_norm(cfg.reg, cfg.opnorm_tol, cfg.opnorm_seed);
  CHECK(st.k_norm == kn);
  CHECK(st.mu == 1.0 / (cfg.rho * (kn * kn)));
  CHECK(st.mu * cfg.rho * kn * kn <= 1.0 + 1e-12);
}

TEST_CASE("explicit steps are checked against the inflated norm estimate") {
  SplitProblem pb(103);
  TrexConfig cfg = pb.config(0.05, 25.0);
  cfg.outer_iters = 1;
  const double kn = 1.01 * op_norm(cfg.reg, cfg.opnorm_tol, cfg.opnorm_seed);
  const double bound = 1.0 / (cfg.rho * kn * kn);

  cfg.mu = 0.5 * bound;
  const TrexState ok = run_trex(cfg, pb.p);
  CHECK(ok.mu == cfg.mu);

  cfg.mu = 1.2 * bound;
  try {
    run_trex(cfg, pb.p);
    FAIL("expected the step bound to reject this mu");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StepSizeViolation);
  }

  cfg.mu = -1.0;
  CHECK_THROWS_AS(run_trex(cfg, pb.p), Error);
}

TEST_CASE("a regularizer with empty support is rejected") {
  // on 1x1 there are no neighbor differences: every operator row is zero
  SplitProblem pb(107);
  TrexConfig cfg;
  cfg.reg = RegOp(RegKind::GradITV, ImageGrid(1, 1, 1.0), 0.1);
  ParallelBeamGeometry par({0.0}, 1, 1.0);
  Sinogram p{ScanGeometry(par)};
  p.values()[0] = 1.0;
  try {
    run_trex(cfg, p);
    FAIL("expected a zero-norm error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("dual ascent accumulates the constraint gap exactly") {
  SplitProblem pb(109);
  TrexConfig cfg = pb.config(0.08, 10.0);
  cfg.outer_iters = 6;

  std::vector<double> y_prev(cfg.reg.rows(), 0.0);
  int calls = 0;
  const TrexObserver obs = [&](const TrexState& st,
                               const std::vector<double>& kx) {
    ++calls;
    REQUIRE(kx.size() == y_prev.size());
    for (std::size_t i = 0; i < y_prev.size(); ++i) {
      const double want = y_prev[i] + (kx[i] - st.z[i]);
      REQUIRE(st.y[i] == want);  // single rounding per component, bit for bit
    }
    y_prev = st.y;
  };
  run_trex(cfg, pb.p, nullptr, nullptr, obs);
  CHECK(calls == 6);
}

TEST_CASE("split variable is the shrinkage of the shifted range point") {
  SplitProblem pb(113);
  TrexConfig cfg = pb.config(0.1, 8.0);
  cfg.outer_iters = 4;
  const double inv_rho = 1.0 / cfg.rho;

  std::vector<double> y_prev(cfg.reg.rows(), 0.0);
  const TrexObserver obs = [&](const TrexState& st,
                               const std::vector<double>& kx) {
    std::vector<double> w(kx.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = kx[i] + y_prev[i];
    const auto z_want = prox_reg(cfg.reg, inv_rho, w);
    REQUIRE(st.z == z_want);
    y_prev = st.y;
  };
  run_trex(cfg, pb.p, nullptr, nullptr, obs);
}

TEST_CASE("the loop composes the published pieces verbatim") {
  SplitProblem pb(127);
  TrexConfig cfg = pb.config(0.07, 4.0);
  cfg.outer_iters = 3;
  const TrexState st = run_trex(cfg, pb.p, nullptr, &pb.truth);

  // replay the recursion with the library primitives
  const double kn = 1.01 * op_norm(cfg.reg, cfg.opnorm_tol, cfg.opnorm_seed);
  const double knsq = kn * kn;
  const double mu = 1.0 / (cfg.rho * knsq);
  ProxConfig pc = cfg.prox;
  pc.lambda = mu;
  const double rho_mu = cfg.rho * mu;
  const double inv_rho = 1.0 / cfg.rho;

  Volume x(pb.g);
  std::vector<double> z(cfg.reg.rows(), 0.0), y(cfg.reg.rows(), 0.0);
  std::vector<double> w(cfg.reg.rows());
  for (int t = 0; t < 3; ++t) {
    std::vector<double> kx = reg_apply(cfg.reg, x);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = kx[i] - z[i] + y[i];
    Volume grad = reg_adjoint(cfg.reg, w);
    Volume u = x;
    for (std::size_t j = 0; j < u.values().size(); ++j)
      u.values()[j] -= rho_mu * grad.values()[j];
    x = prox_ls(pc, pb.p, u);

    kx = reg_apply(cfg.reg, x);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = kx[i] + y[i];
    z = prox_reg(cfg.reg, inv_rho, w);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += kx[i] - z[i];
  }

  CHECK(st.x.values() == x.values());
  CHECK(st.z == z);
  CHECK(st.y == y);
  REQUIRE(st.trace.size() == 3);
  CHECK(st.trace.back().iter == 3);
  CHECK(std::isfinite(st.trace.back().snr_db));
}

TEST_CASE("residual trace reports the current gap norms") {
  SplitProblem pb(131);
  TrexConfig cfg = pb.config(0.05, 25.0);
  cfg.outer_iters = 4;

  std::vector<double> z_prev(cfg.reg.rows(), 0.0);
  const TrexObserver obs = [&](const TrexState& st,
                               const std::vector<double>& kx) {
    double primal = 0.0, dual = 0.0;
    std::vector<double> dz(kx.size());
    for (std::size_t i = 0; i < kx.size(); ++i) {
      const double d = kx[i] - st.z[i];
      primal += d * d;
      dz[i] = st.z[i] - z_prev[i];
    }
    const Volume ktdz = reg_adjoint(cfg.reg, dz);
    for (double v : ktdz.values()) dual += v * v;
    const auto& row = st.trace.back();
    CHECK(row.iter == st.iteration);
    CHECK(row.primal_res == std::sqrt(primal));
    CHECK(row.dual_res == cfg.rho * std::sqrt(dual));
    z_prev = st.z;
  };
  const TrexState st = run_trex(cfg, pb.p, nullptr, nullptr, obs);
  for (std::size_t t = 0; t < st.trace.size(); ++t) {
    CHECK(std::isnan(st.trace[t].snr_db));
    if (t > 0) CHECK(st.trace[t].wall_ms >= st.trace[t - 1].wall_ms);
  }
}

TEST_CASE("statistical weighting resolves from photon counts") {
  SplitProblem pb(137);
  const Sinogram clean = forward_project(pb.geom, pb.truth);
  const auto sim = simulate_measurements(clean, NoiseModelSpec{1e4, 7});

  TrexConfig cfg = pb.config(0.05, 25.0);
  cfg.data_term = DataTerm::PoissonWLS;
  cfg.prox.mapping = WeightMapping::R2;
  cfg.outer_iters = 3;

  try {
    run_trex(cfg, sim.measured);
    FAIL("expected missing intensity data to be reported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingIntensityData);
  }

  const TrexState a = run_trex(cfg, sim.measured, &sim.intensity);

  // presetting the same weights must route through the identical path
  TrexConfig preset = cfg;
  preset.prox.weights = poisson_weights(sim.intensity, WeightMapping::R2);
  const TrexState b = run_trex(preset, sim.measured);
  CHECK(a.x.values() == b.x.values());
  CHECK(a.z == b.z);
}

TEST_CASE("zero regularization strength reduces to the data solution") {
  SplitProblem pb(139);
  const Sinogram consistent = forward_project(pb.geom, pb.truth);

  TrexConfig cfg;
  cfg.reg = RegOp(RegKind::GradITV, pb.g, 0.0);
  cfg.rho = 1e-4;  // large automatic mu: the prox nearly solves least squares
  cfg.prox.method = ProxMethod::SART;
  cfg.prox.inner_iters = 50;
  cfg.outer_iters = 25;
  const TrexState st = run_trex(cfg, consistent, nullptr, &pb.truth);

  // identity shrinkage keeps the dual at zero, so the loop is a proximal
  // descent on the data term alone and recovers the consistent solution
  for (double v : st.y) CHECK(v == 0.0);
  CHECK(st.trace.back().snr_db > 60.0);
}

TEST_CASE("runs repeat bitwise") {
  SplitProblem pb(149);
  TrexConfig cfg = pb.config(0.1, 25.0);
  cfg.outer_iters = 4;
  const TrexState a = run_trex(cfg, pb.p);
  const TrexState b = run_trex(cfg, pb.p);
  CHECK(a.x.values() == b.x.values());
  CHECK(a.z == b.z);
  CHECK(a.y == b.y);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t t = 0; t < a.trace.size(); ++t) {
    CHECK(a.trace[t].primal_res == b.trace[t].primal_res);
    CHECK(a.trace[t].dual_res == b.trace[t].dual_res);
  }
}

TEST_CASE("zero outer iterations return the initial state") {
  SplitProblem pb(151);
  TrexConfig cfg = pb.config(0.05, 25.0);
  cfg.outer_iters = 0;
  const TrexState st = run_trex(cfg, pb.p);
  CHECK(st.trace.empty());
  for (double v : st.x.values()) CHECK(v == 0.0);
}
