#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "trex/types.hpp"

namespace trex {

/// One additive ellipse of a phantom, in normalized coordinates: the image
/// grid spans [-1, 1] x [-1, 1]. theta_deg rotates the ellipse counter-
/// clockwise; intensity adds (may be negative) inside the ellipse.
struct PhantomEllipse {
  double cx = 0, cy = 0;
  double a = 0, b = 0;      // semi-axes, normalized units
  double theta_deg = 0;
  double intensity = 0;
};

struct EllipsePhantomSpec {
  std::vector<PhantomEllipse> ellipses;
};

/// Text form: one ellipse per line, "cx cy a b theta_deg intensity",
/// '#' starts a comment, blank lines are skipped.
inline EllipsePhantomSpec parse_phantom(const std::string& text) {
  EllipsePhantomSpec spec;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    PhantomEllipse e;
    if (!(ls >> e.cx)) continue;  // blank or comment-only line
    require(static_cast<bool>(ls >> e.cy >> e.a >> e.b >> e.theta_deg >>
                              e.intensity),
            ErrorCode::IoError,
            "phantom line " + std::to_string(lineno) +
                ": expected 'cx cy a b theta_deg intensity'");
    require(e.a > 0 && e.b > 0, ErrorCode::IoError,
            "phantom line " + std::to_string(lineno) +
                ": semi-axes must be > 0");
    spec.ellipses.push_back(e);
  }
  require(!spec.ellipses.empty(), ErrorCode::IoError,
          "phantom: no ellipses found");
  return spec;
}

inline EllipsePhantomSpec load_phantom(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCode::IoError, path + ": cannot open phantom file");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_phantom(buf.str());
}

namespace detail {

// Head phantom, the ten-ellipse table with contrast-enhanced intensities.
inline constexpr const char* head_phantom_text = R"(# head phantom
# cx      cy       a        b        theta_deg  intensity
  0       0        0.69     0.92      0          1.0
  0      -0.0184   0.6624   0.874     0         -0.8
  0.22    0        0.11     0.31    -18         -0.2
 -0.22    0        0.16     0.41     18         -0.2
  0       0.35     0.21     0.25      0          0.1
  0       0.1      0.046    0.046     0          0.1
  0      -0.1      0.046    0.046     0          0.1
 -0.08   -0.605    0.046    0.023     0          0.1
  0      -0.605    0.023    0.023     0          0.1
  0.06   -0.605    0.023    0.046     0          0.1
)";

// Synthetic torso slice: body outline, two lungs, spine, heart and a small
// dense lesion. Coarse stand-in for an anthropomorphic thorax section.
inline constexpr const char* torso_phantom_text = R"(# synthetic torso
# cx      cy       a        b        theta_deg  intensity
  0       0        0.90     0.65      0          0.40   # body
 -0.42    0.05     0.26     0.38      8         -0.30   # left lung
  0.42    0.05     0.26     0.38     -8         -0.30   # right lung
  0      -0.48     0.10     0.11      0          0.50   # spine
  0.08    0.18     0.22     0.26    -25          0.15   # heart
 -0.30   -0.20     0.05     0.05      0          0.20   # lesion
)";

}  // namespace detail

/// Built-in phantom tables: "head" (the classic ten-ellipse head slice) and
/// "torso" (a synthetic thorax section).
inline EllipsePhantomSpec builtin_phantom(const std::string& name) {
  if (name == "head" || name == "shepp-logan")
    return parse_phantom(detail::head_phantom_text);
  if (name == "torso") return parse_phantom(detail::torso_phantom_text);
  fail(ErrorCode::InvalidConfig, "unknown builtin phantom '" + name + "'");
}

inline const char* builtin_phantom_text(const std::string& name) {
  if (name == "head" || name == "shepp-logan")
    return detail::head_phantom_text;
  if (name == "torso") return detail::torso_phantom_text;
  fail(ErrorCode::InvalidConfig, "unknown builtin phantom '" + name + "'");
}

/// Paints the phantom on a grid: a pixel takes the sum of the intensities of
/// all ellipses whose interior contains the pixel center. World coordinates
/// map to normalized ones through half the grid extent per axis.
inline Volume rasterize_phantom(const EllipsePhantomSpec& spec,
                                const ImageGrid& grid) {
  Volume out(grid);
  const double sx = 2.0 / grid.width();
  const double sy = 2.0 / grid.height();
  for (const auto& e : spec.ellipses) {
    const double th = e.theta_deg * std::acos(-1.0) / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    for (int iy = 0; iy < grid.ny; ++iy) {
      const double wy = (iy - 0.5 * (grid.ny - 1)) * grid.pixel_size;
      const double yn = wy * sy;
      for (int ix = 0; ix < grid.nx; ++ix) {
        const double wx = (ix - 0.5 * (grid.nx - 1)) * grid.pixel_size;
        const double xn = wx * sx;
        const double dx = xn - e.cx, dy = yn - e.cy;
        const double u = ct * dx + st * dy;
        const double w = -st * dx + ct * dy;
        const double q = (u / e.a) * (u / e.a) + (w / e.b) * (w / e.b);
        if (q <= 1.0) out.at(ix, iy) += e.intensity;
      }
    }
  }
  return out;
}

}  // namespace trex
