#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "trex/types.hpp"

namespace trex {

static_assert(std::endian::native == std::endian::little,
              "raw serialization assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "raw serialization assumes IEEE-754 binary64");

namespace detail {

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = std::strtod(buf, nullptr);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char probe[64];
      std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
      if (std::strtod(probe, nullptr) == v) return probe;
    }
  }
  return buf;
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_doubles(std::istream& is, std::size_t count,
                                        const std::string& path) {
  std::vector<double> v(count);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  require(static_cast<std::size_t>(is.gcount()) == count * sizeof(double),
          ErrorCode::IoError, path + ": truncated payload");
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCode::IoError, path + ": cannot open for reading");
  return is;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCode::IoError, path + ": cannot open for writing");
  return os;
}

}  // namespace detail

/// Raw volume file: one ASCII header line "nx ny pixel_size\n" followed by
/// nx*ny little-endian float64 values in row-major order. Round-trips are
/// bit-exact.
inline void write_volume_raw(const std::string& path, const Volume& v) {
  auto os = detail::open_out(path);
  os << v.grid().nx << ' ' << v.grid().ny << ' '
     << detail::format_double(v.grid().pixel_size) << '\n';
  detail::write_doubles(os, v.values());
  require(os.good(), ErrorCode::IoError, path + ": write failed");
}

inline Volume read_volume_raw(const std::string& path) {
  auto is = detail::open_in(path);
  std::string header;
  require(static_cast<bool>(std::getline(is, header)), ErrorCode::IoError,
          path + ": missing header");
  std::istringstream hs(header);
  int nx = 0, ny = 0;
  double pixel_size = 0;
  require(static_cast<bool>(hs >> nx >> ny >> pixel_size), ErrorCode::IoError,
          path + ": malformed header, expected 'nx ny pixel_size'");
  ImageGrid grid(nx, ny, pixel_size);
  auto values = detail::read_doubles(is, grid.size(), path);
  return Volume(grid, std::move(values));
}

/// Raw sinogram file: header "num_views num_dets\n" followed by
/// num_views*num_dets little-endian float64 values, view-major.
inline void write_sinogram_raw(const std::string& path, const Sinogram& s) {
  auto os = detail::open_out(path);
  os << s.num_views() << ' ' << s.num_dets() << '\n';
  detail::write_doubles(os, s.values());
  require(os.good(), ErrorCode::IoError, path + ": write failed");
}

struct RawSinogram {
  int num_views = 0;
  int num_dets = 0;
  std::vector<double> values;
};

/// Reads the payload of a raw sinogram file. The scan geometry is not part
/// of the format; attach one with `with_geometry` when it is known.
inline RawSinogram read_sinogram_raw(const std::string& path) {
  auto is = detail::open_in(path);
  std::string header;
  require(static_cast<bool>(std::getline(is, header)), ErrorCode::IoError,
          path + ": missing header");
  std::istringstream hs(header);
  RawSinogram raw;
  require(static_cast<bool>(hs >> raw.num_views >> raw.num_dets),
          ErrorCode::IoError,
          path + ": malformed header, expected 'num_views num_dets'");
  require(raw.num_views >= 1 && raw.num_dets >= 1, ErrorCode::IoError,
          path + ": non-positive dimensions");
  raw.values = detail::read_doubles(
      is, static_cast<std::size_t>(raw.num_views) * raw.num_dets, path);
  return raw;
}

inline Sinogram with_geometry(const RawSinogram& raw, ScanGeometry geom) {
  require(raw.num_views == num_views(geom) && raw.num_dets == num_dets(geom),
          ErrorCode::GridMismatch,
          "sinogram payload dimensions do not match the geometry");
  return Sinogram(std::move(geom), raw.values);
}

/// 16-bit binary PGM (P5) preview. Values are clipped to [0, vmax] and scaled
/// by 65535/vmax where vmax is the maximum value (1.0 when the volume is not
/// positive anywhere); the scaling is recorded in a sidecar text file
/// `<path>.scale`. Payload samples are big-endian per the PGM format.
inline void write_volume_pgm(const std::string& path, const Volume& v) {
  double vmax = 0.0;
  for (double x : v.values()) vmax = std::max(vmax, x);
  if (vmax <= 0.0) vmax = 1.0;

  auto os = detail::open_out(path);
  os << "P5\n" << v.grid().nx << ' ' << v.grid().ny << "\n65535\n";
  for (double x : v.values()) {
    double t = std::max(0.0, std::min(x / vmax, 1.0));
    auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                              static_cast<unsigned char>(q & 0xff)};
    os.write(reinterpret_cast<const char*>(bytes), 2);
  }
  require(os.good(), ErrorCode::IoError, path + ": write failed");

  auto meta = detail::open_out(path + ".scale");
  meta << "max_value " << detail::format_double(vmax) << '\n'
       << "quantization 65535\n";
  require(meta.good(), ErrorCode::IoError, path + ".scale: write failed");
}

namespace detail {
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}
}  // namespace detail

inline void write_trace_csv(const std::string& path,
                            const std::vector<TraceRow>& rows) {
  auto os = detail::open_out(path);
  os << "iter,snr_db,residual_l2,wall_ms\n";
  for (const auto& r : rows)
    os << r.iter << ',' << detail::csv_number(r.snr_db) << ','
       << detail::csv_number(r.residual_l2) << ','
       << detail::csv_number(r.wall_ms) << '\n';
  require(os.good(), ErrorCode::IoError, path + ": write failed");
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<TrexTraceRow>& rows) {
  auto os = detail::open_out(path);
  os << "iter,snr_db,primal_res,dual_res,wall_ms\n";
  for (const auto& r : rows)
    os << r.iter << ',' << detail::csv_number(r.snr_db) << ','
       << detail::csv_number(r.primal_res) << ','
       << detail::csv_number(r.dual_res) << ','
       << detail::csv_number(r.wall_ms) << '\n';
  require(os.good(), ErrorCode::IoError, path + ": write failed");
}

/// Scan geometry as a small key=value text file, losslessly (angles are
/// printed so they parse back to the identical doubles).
inline void write_geometry(const std::string& path, const ScanGeometry& geom) {
  auto os = detail::open_out(path);
  if (const auto* fan = std::get_if<FanBeamGeometry>(&geom)) {
    os << "type=fan\n";
    os << "num_dets=" << fan->num_dets << '\n';
    os << "det_size=" << detail::format_double(fan->det_size) << '\n';
    os << "src_to_det=" << detail::format_double(fan->src_to_det) << '\n';
    os << "src_to_iso=" << detail::format_double(fan->src_to_iso) << '\n';
    os << "angles=";
    for (std::size_t i = 0; i < fan->angles.size(); ++i)
      os << (i ? "," : "") << detail::format_double(fan->angles[i]);
    os << '\n';
  } else {
    const auto& par = std::get<ParallelBeamGeometry>(geom);
    os << "type=parallel\n";
    os << "num_dets=" << par.num_dets << '\n';
    os << "det_size=" << detail::format_double(par.det_size) << '\n';
    os << "angles=";
    for (std::size_t i = 0; i < par.angles.size(); ++i)
      os << (i ? "," : "") << detail::format_double(par.angles[i]);
    os << '\n';
  }
  require(os.good(), ErrorCode::IoError, path + ": write failed");
}

inline ScanGeometry read_geometry(const std::string& path) {
  auto is = detail::open_in(path);
  std::string type;
  int dets = 0;
  double det_size = 0, src_to_det = 0, src_to_iso = 0;
  std::vector<double> angles;
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "type") {
      type = val;
    } else if (key == "num_dets") {
      dets = std::stoi(val);
    } else if (key == "det_size") {
      det_size = std::strtod(val.c_str(), nullptr);
    } else if (key == "src_to_det") {
      src_to_det = std::strtod(val.c_str(), nullptr);
    } else if (key == "src_to_iso") {
      src_to_iso = std::strtod(val.c_str(), nullptr);
    } else if (key == "angles") {
      std::istringstream as(val);
      std::string tok;
      while (std::getline(as, tok, ','))
        angles.push_back(std::strtod(tok.c_str(), nullptr));
    }
  }
  if (type == "fan")
    return FanBeamGeometry(std::move(angles), dets, det_size, src_to_det,
                           src_to_iso);
  if (type == "parallel")
    return ParallelBeamGeometry(std::move(angles), dets, det_size);
  fail(ErrorCode::IoError, path + ": unknown geometry type '" + type + "'");
}

}  // namespace trex
