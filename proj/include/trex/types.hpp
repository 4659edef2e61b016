#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace trex {

enum class ErrorCode {
  GridMismatch,
  ZeroReference,
  GeometryInvalid,
  IndexOutOfRange,
  SubsetRequired,
  SubsetGranularityMismatch,
  InvalidLambda,
  WeightLengthMismatch,
  AllZeroMeasurements,
  LengthMismatch,
  StepSizeViolation,
  MissingIntensityData,
  InvalidConfig,
  NonFiniteData,
  IoError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

/// Regular 2D pixel grid, isotropic pixels, centered on the world origin.
/// Pixel (ix, iy) has center ((ix - (nx-1)/2) * h, (iy - (ny-1)/2) * h) in mm
/// and flat index iy * nx + ix (row-major).
struct ImageGrid {
  int nx = 0;
  int ny = 0;
  double pixel_size = 1.0;  // mm

  ImageGrid() = default;
  ImageGrid(int nx_, int ny_, double pixel_size_)
      : nx(nx_), ny(ny_), pixel_size(pixel_size_) {
    require(nx >= 1 && ny >= 1, ErrorCode::GeometryInvalid,
            "ImageGrid: nx and ny must be >= 1");
    require(pixel_size > 0 && std::isfinite(pixel_size),
            ErrorCode::GeometryInvalid, "ImageGrid: pixel_size must be > 0");
  }

  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * nx + ix;
  }
  double width() const { return nx * pixel_size; }    // world extent in x, mm
  double height() const { return ny * pixel_size; }   // world extent in y, mm
  double xmin() const { return -0.5 * width(); }
  double ymin() const { return -0.5 * height(); }
  double diagonal() const { return std::hypot(width(), height()); }

  friend bool operator==(const ImageGrid& a, const ImageGrid& b) {
    return a.nx == b.nx && a.ny == b.ny && a.pixel_size == b.pixel_size;
  }
};

namespace detail {
inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    require(std::isfinite(x), ErrorCode::NonFiniteData,
            std::string(what) + ": values must be finite");
}
}  // namespace detail

/// Attenuation image (1/mm) on an ImageGrid, stored row-major.
/// Value type: copies are deep; mutate only instances you own exclusively.
class Volume {
 public:
  Volume() = default;
  explicit Volume(const ImageGrid& grid)
      : grid_(grid), values_(grid.size(), 0.0) {}
  Volume(const ImageGrid& grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    require(values_.size() == grid_.size(), ErrorCode::LengthMismatch,
            "Volume: values length must equal nx*ny");
    detail::check_finite(values_, "Volume");
  }

  const ImageGrid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double at(int ix, int iy) const { return values_[grid_.index(ix, iy)]; }
  double& at(int ix, int iy) { return values_[grid_.index(ix, iy)]; }

 private:
  ImageGrid grid_;
  std::vector<double> values_;
};

/// Fan-beam scan: point source rotating on a circle of radius src_to_iso
/// around the grid center, flat detector of num_dets cells at distance
/// src_to_det from the source, one ray per detector cell center.
/// At view angle phi the source sits at src_to_iso * (cos phi, sin phi).
struct FanBeamGeometry {
  std::vector<double> angles;  // radians, strictly increasing
  int num_dets = 0;
  double det_size = 1.0;     // detector pitch, mm
  double src_to_det = 2.0;   // source-to-detector distance, mm
  double src_to_iso = 1.0;   // source-to-isocenter distance, mm

  FanBeamGeometry() = default;
  FanBeamGeometry(std::vector<double> angles_, int num_dets_, double det_size_,
                  double src_to_det_, double src_to_iso_)
      : angles(std::move(angles_)),
        num_dets(num_dets_),
        det_size(det_size_),
        src_to_det(src_to_det_),
        src_to_iso(src_to_iso_) {
    validate();
  }

  void validate() const {
    require(!angles.empty(), ErrorCode::GeometryInvalid,
            "FanBeamGeometry: need at least one view");
    require(num_dets >= 1, ErrorCode::GeometryInvalid,
            "FanBeamGeometry: num_dets must be >= 1");
    require(det_size > 0, ErrorCode::GeometryInvalid,
            "FanBeamGeometry: det_size must be > 0");
    require(src_to_iso > 0 && src_to_iso < src_to_det,
            ErrorCode::GeometryInvalid,
            "FanBeamGeometry: need 0 < src_to_iso < src_to_det");
    for (std::size_t i = 0; i + 1 < angles.size(); ++i)
      require(angles[i] < angles[i + 1], ErrorCode::GeometryInvalid,
              "FanBeamGeometry: angles must be strictly increasing");
    for (double a : angles)
      require(std::isfinite(a), ErrorCode::GeometryInvalid,
              "FanBeamGeometry: angles must be finite");
  }

  int num_views() const { return static_cast<int>(angles.size()); }
  std::size_t ray_count() const {
    return static_cast<std::size_t>(angles.size()) * num_dets;
  }
};

/// Parallel-beam scan used for small exact test systems. At view angle phi
/// rays travel along (cos phi, sin phi); detector cell k is offset
/// (k - (num_dets-1)/2) * det_size along (-sin phi, cos phi).
struct ParallelBeamGeometry {
  std::vector<double> angles;
  int num_dets = 0;
  double det_size = 1.0;

  ParallelBeamGeometry() = default;
  ParallelBeamGeometry(std::vector<double> angles_, int num_dets_,
                       double det_size_)
      : angles(std::move(angles_)), num_dets(num_dets_), det_size(det_size_) {
    validate();
  }

  void validate() const {
    require(!angles.empty(), ErrorCode::GeometryInvalid,
            "ParallelBeamGeometry: need at least one view");
    require(num_dets >= 1, ErrorCode::GeometryInvalid,
            "ParallelBeamGeometry: num_dets must be >= 1");
    require(det_size > 0, ErrorCode::GeometryInvalid,
            "ParallelBeamGeometry: det_size must be > 0");
    for (std::size_t i = 0; i + 1 < angles.size(); ++i)
      require(angles[i] < angles[i + 1], ErrorCode::GeometryInvalid,
              "ParallelBeamGeometry: angles must be strictly increasing");
  }

  int num_views() const { return static_cast<int>(angles.size()); }
  std::size_t ray_count() const {
    return static_cast<std::size_t>(angles.size()) * num_dets;
  }
};

using ScanGeometry = std::variant<FanBeamGeometry, ParallelBeamGeometry>;

inline int num_views(const ScanGeometry& g) {
  return std::visit([](const auto& gg) { return gg.num_views(); }, g);
}
inline int num_dets(const ScanGeometry& g) {
  return std::visit([](const auto& gg) { return gg.num_dets; }, g);
}
inline std::size_t ray_count(const ScanGeometry& g) {
  return std::visit([](const auto& gg) { return gg.ray_count(); }, g);
}
inline const std::vector<double>& view_angles(const ScanGeometry& g) {
  return std::visit(
      [](const auto& gg) -> const std::vector<double>& { return gg.angles; },
      g);
}

/// Uniform arc of `count` view angles starting at `start`, spanning `arc`
/// without the closing endpoint: angle_k = start + arc * k / count.
inline std::vector<double> uniform_arc(int count, double arc,
                                       double start = 0.0) {
  require(count >= 1, ErrorCode::GeometryInvalid, "uniform_arc: count >= 1");
  require(arc > 0, ErrorCode::GeometryInvalid, "uniform_arc: arc > 0");
  std::vector<double> a(count);
  for (int k = 0; k < count; ++k) a[k] = start + arc * k / count;
  return a;
}

/// Line-integral measurements, view-major: value for (view v, detector k)
/// lives at v * num_dets + k.
class Sinogram {
 public:
  Sinogram() = default;
  explicit Sinogram(ScanGeometry geom)
      : geom_(std::move(geom)), values_(trex::ray_count(geom_), 0.0) {}
  Sinogram(ScanGeometry geom, std::vector<double> values)
      : geom_(std::move(geom)), values_(std::move(values)) {
    require(values_.size() == trex::ray_count(geom_), ErrorCode::LengthMismatch,
            "Sinogram: values length must equal num_views*num_dets");
    detail::check_finite(values_, "Sinogram");
  }

  const ScanGeometry& geometry() const { return geom_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  int num_views() const { return trex::num_views(geom_); }
  int num_dets() const { return trex::num_dets(geom_); }
  std::size_t ray_count() const { return values_.size(); }

 private:
  ScanGeometry geom_;
  std::vector<double> values_;
};

enum class Method { ART, SART, SIRT, BSSART, BICAV, OSSQS, CGLS };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::ART: return "ART";
    case Method::SART: return "SART";
    case Method::SIRT: return "SIRT";
    case Method::BSSART: return "BSSART";
    case Method::BICAV: return "BICAV";
    case Method::OSSQS: return "OSSQS";
    case Method::CGLS: return "CGLS";
  }
  return "?";
}

/// Configuration for the plain iterative solvers.
struct SolveConfig {
  Method method = Method::SART;
  double alpha = 1.0;        // relaxation
  int outer_iters = 1;       // full sweeps over all rays
  int num_subsets = 0;       // OS-SQS only; 0 means one subset per view
  bool clip_enabled = true;  // nonnegativity projection after each update
  bool bit_reversal_order = false;  // subset ordering; default ascending
  std::uint64_t seed = 0;    // reserved for stochastic components

  /// Throws on hard violations; returns human-readable warnings otherwise.
  std::vector<std::string> validate() const {
    require(alpha > 0 && std::isfinite(alpha), ErrorCode::InvalidConfig,
            "SolveConfig: alpha must be > 0");
    require(outer_iters >= 0, ErrorCode::InvalidConfig,
            "SolveConfig: outer_iters must be >= 0");
    require(num_subsets >= 0, ErrorCode::InvalidConfig,
            "SolveConfig: num_subsets must be >= 0");
    std::vector<std::string> warnings;
    if (alpha >= 2.0)
      warnings.push_back(
          "alpha >= 2 is outside the range required by the convergence "
          "guarantees of " +
          std::string(method_name(method)));
    return warnings;
  }
};

enum class ProxMethod { ART, SART, BICAV, OSSQS };

inline const char* prox_method_name(ProxMethod m) {
  switch (m) {
    case ProxMethod::ART: return "ART";
    case ProxMethod::SART: return "SART";
    case ProxMethod::BICAV: return "BICAV";
    case ProxMethod::OSSQS: return "OSSQS";
  }
  return "?";
}

enum class WeightMapping { R1, R2, R3 };  // identity, sqrt, cbrt

/// Configuration for the data-term proximal operators.
struct ProxConfig {
  ProxMethod method = ProxMethod::SART;
  double alpha = 1.0;
  double lambda = 1.0;  // proximal coupling, > 0
  int inner_iters = 2;  // full sweeps per call
  int num_subsets = 0;  // OS-SQS only; 0 means one subset per view
  bool clip_enabled = true;
  std::optional<std::vector<double>> weights;  // per-ray, each in (0,1]
  WeightMapping mapping = WeightMapping::R1;

  void validate(std::size_t rays) const {
    require(lambda > 0 && std::isfinite(lambda), ErrorCode::InvalidLambda,
            "ProxConfig: lambda must be > 0");
    require(inner_iters >= 1, ErrorCode::InvalidConfig,
            "ProxConfig: inner_iters must be >= 1");
    require(alpha > 0 && std::isfinite(alpha), ErrorCode::InvalidConfig,
            "ProxConfig: alpha must be > 0");
    if (weights) {
      require(weights->size() == rays, ErrorCode::WeightLengthMismatch,
              "ProxConfig: weights length must equal the ray count");
      for (double w : *weights)
        require(w > 0 && w <= 1.0, ErrorCode::InvalidConfig,
                "ProxConfig: weights must lie in (0, 1]");
    }
  }
};

/// One convergence-trace sample of a plain solver run.
struct TraceRow {
  int iter = 0;
  double snr_db = 0;       // NaN when no ground truth was supplied
  double residual_l2 = 0;  // ||A x - p||_2
  double wall_ms = 0;      // elapsed since the run started
};

/// One convergence-trace sample of a regularized (split) reconstruction.
struct TrexTraceRow {
  int iter = 0;
  double snr_db = 0;
  double primal_res = 0;  // ||K x - z||_2
  double dual_res = 0;    // rho * ||K^T (z - z_prev)||_2
  double wall_ms = 0;
};

/// Nonnegativity projection, elementwise max(0, x).
inline Volume clip(const Volume& v) {
  Volume out = v;
  for (double& x : out.values()) x = std::max(0.0, x);
  return out;
}

inline void clip_in_place(std::vector<double>& v) {
  for (double& x : v) x = std::max(0.0, x);
}

/// SNR in dB of estimate x against reference xhat:
/// 10*log10(sum xhat^2 / sum (x - xhat)^2). Returns +infinity on a perfect
/// match so convergence plots never fail at the optimum.
inline double snr(const Volume& x, const Volume& xhat) {
  require(x.grid() == xhat.grid(), ErrorCode::GridMismatch,
          "snr: grids must match");
  double ref = 0.0, err = 0.0;
  const auto& a = x.values();
  const auto& b = xhat.values();
  for (std::size_t j = 0; j < a.size(); ++j) {
    ref += b[j] * b[j];
    const double d = a[j] - b[j];
    err += d * d;
  }
  require(ref > 0.0, ErrorCode::ZeroReference,
          "snr: reference volume is identically zero");
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ref / err);
}

}  // namespace trex
