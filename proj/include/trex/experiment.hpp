#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "trex/io.hpp"
#include "trex/ladmm.hpp"
#include "trex/noise.hpp"
#include "trex/phantom.hpp"
#include "trex/prox_data.hpp"
#include "trex/solvers.hpp"
#include "trex/types.hpp"

namespace trex {

/// A reconstruction method name: either a plain solver ("SART", "CGLS", ...)
/// or a regularized combination "TREX-<PROX>-<REG>" such as TREX-SART-ITV,
/// TREX-ART-ATV or TREX-OSSQS-SAD.
struct MethodSpec {
  std::string name;
  bool is_trex = false;
  Method plain = Method::SART;
  ProxMethod prox = ProxMethod::SART;
  RegKind reg = RegKind::GradITV;
};

inline MethodSpec parse_method(const std::string& name) {
  MethodSpec ms;
  ms.name = name;
  if (name == "ART") { ms.plain = Method::ART; return ms; }
  if (name == "SART") { ms.plain = Method::SART; return ms; }
  if (name == "SIRT") { ms.plain = Method::SIRT; return ms; }
  if (name == "BSSART") { ms.plain = Method::BSSART; return ms; }
  if (name == "BICAV") { ms.plain = Method::BICAV; return ms; }
  if (name == "OSSQS") { ms.plain = Method::OSSQS; return ms; }
  if (name == "CGLS") { ms.plain = Method::CGLS; return ms; }
  if (name.rfind("TREX-", 0) == 0) {
    const auto rest = name.substr(5);
    const auto dash = rest.find('-');
    require(dash != std::string::npos, ErrorCode::InvalidConfig,
            "method '" + name + "': expected TREX-<PROX>-<REG>");
    const auto prox = rest.substr(0, dash);
    const auto reg = rest.substr(dash + 1);
    ms.is_trex = true;
    if (prox == "ART") ms.prox = ProxMethod::ART;
    else if (prox == "SART") ms.prox = ProxMethod::SART;
    else if (prox == "BICAV") ms.prox = ProxMethod::BICAV;
    else if (prox == "OSSQS") ms.prox = ProxMethod::OSSQS;
    else fail(ErrorCode::InvalidConfig,
              "method '" + name + "': unknown prox flavor '" + prox + "'");
    if (reg == "ITV") ms.reg = RegKind::GradITV;
    else if (reg == "ATV") ms.reg = RegKind::GradATV;
    else if (reg == "SAD" || reg == "SAD8") ms.reg = RegKind::SAD8;
    else fail(ErrorCode::InvalidConfig,
              "method '" + name + "': unknown regularizer '" + reg + "'");
    return ms;
  }
  fail(ErrorCode::InvalidConfig, "unknown method '" + name + "'");
}

/// Relaxation default: near-2 overrelaxation pays off on sparse-view scans,
/// plain relaxation is safer once the system gets better determined.
inline double default_alpha(int views) { return views <= 30 ? 1.99 : 1.0; }

/// Regularization strength / penalty defaults keyed on how underdetermined
/// the scan is.
inline void default_sigma_rho(int views, double& sigma, double& rho) {
  if (views <= 20) {
    sigma = 0.05;
    rho = 25.0;
  } else {
    sigma = 0.1;
    rho = 50.0;
  }
}

/// One experiment, as parsed from a sectioned key=value spec file.
/// Sentinels: alpha = 0, sigma < 0, rho < 0 select the defaults above;
/// mu = 0 selects the automatic step (except OS-SQS prox, which demands an
/// explicit one).
struct ExperimentSpec {
  // [grid]
  int nx = 128, ny = 128;
  double pixel_size = 1.0;
  // [scan]
  std::string scan_type = "fan";
  int views = 30;
  double arc_deg = 360.0;
  double start_deg = 0.0;
  int num_dets = 222;
  double det_size = 1.0239;
  double src_to_det = 949.075;
  double src_to_iso = 474.5375;
  // [phantom]
  std::string phantom = "head";     // builtin name
  std::string phantom_file;         // overrides builtin when set
  // [noise]
  double i0 = 1e5;
  std::uint64_t seed = 0;
  // [data] — optional externally simulated inputs (dir with simulate outputs)
  std::string data_dir;
  // [reconstruct]
  std::string method = "SART";
  int iters = 30;
  double alpha = 0.0;
  double sigma = -1.0;
  double rho = -1.0;
  double mu = 0.0;
  std::string lambda_map = "r1";
  int inner_iters = 2;
  bool clip = true;
  int num_subsets = 0;
  std::string data_term = "poisson";  // or "gaussian"
  // [compare]
  std::vector<std::string> compare_methods;
  int jobs = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_num(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  require(end && *end == '\0' && !v.empty(), ErrorCode::InvalidConfig,
          "spec: bad numeric value for " + key + ": '" + v + "'");
  return d;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  require(!v.empty(), ErrorCode::InvalidConfig, "spec: empty " + key);
  char* end = nullptr;
  const auto u = std::strtoull(v.c_str(), &end, 10);
  require(end && *end == '\0', ErrorCode::InvalidConfig,
          "spec: bad integer for " + key + ": '" + v + "'");
  return u;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  fail(ErrorCode::InvalidConfig, "spec: bad boolean for " + key);
}

}  // namespace detail

inline ExperimentSpec parse_experiment_text(const std::string& text) {
  ExperimentSpec spec;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', ErrorCode::InvalidConfig,
              "spec line " + std::to_string(lineno) + ": unclosed section");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidConfig,
            "spec line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "grid.nx") spec.nx = static_cast<int>(detail::parse_num(val, qual));
    else if (qual == "grid.ny") spec.ny = static_cast<int>(detail::parse_num(val, qual));
    else if (qual == "grid.pixel_size") spec.pixel_size = detail::parse_num(val, qual);
    else if (qual == "scan.type") spec.scan_type = val;
    else if (qual == "scan.views") spec.views = static_cast<int>(detail::parse_num(val, qual));
    else if (qual == "scan.arc_deg") spec.arc_deg = detail::parse_num(val, qual);
    else if (qual == "scan.start_deg") spec.start_deg = detail::parse_num(val, qual);
    else if (qual == "scan.num_dets") spec.num_dets = static_cast<int>(detail::parse_num(val, qual));
    else if (qual == "scan.det_size") spec.det_size = detail::parse_num(val, qual);
    else if (qual == "scan.src_to_det") spec.src_to_det = detail::parse_num(val, qual);
    else if (qual == "scan.src_to_iso") spec.src_to_iso = detail::parse_num(val, qual);
    else if (qual == "phantom.builtin") spec.phantom = val;
    else if (qual == "phantom.file") spec.phantom_file = val;
    else if (qual == "noise.i0") spec.i0 = detail::parse_num(val, qual);
    else if (qual == "noise.seed") spec.seed = detail::parse_u64(val, qual);
    else if (qual == "data.dir") spec.data_dir = val;
    else if (qual == "reconstruct.method") spec.method = val;
    else if (qual == "reconstruct.iters") spec.iters = static_cast<int>(detail::parse_num(val, qual));
    else if (qual == "reconstruct.alpha") spec.alpha = detail::parse_num(val, qual);
    else if (qual == "reconstruct.sigma") spec.sigma = detail::parse_num(val, qual);
    else if (qual == "reconstruct.rho") spec.rho = detail::parse_num(val, qual);
    else if (qual == "reconstruct.mu") spec.mu = detail::parse_num(val, qual);
    else if (qual == "reconstruct.lambda_map") spec.lambda_map = val;
    else if (qual == "reconstruct.inner_iters") spec.inner_iters = static_cast<int>(detail::parse_num(val, qual));
    else if (qual == "reconstruct.clip") spec.clip = detail::parse_bool(val, qual);
    else if (qual == "reconstruct.num_subsets") spec.num_subsets = static_cast<int>(detail::parse_num(val, qual));
    else if (qual == "reconstruct.data_term") spec.data_term = val;
    else if (qual == "compare.methods") {
      std::istringstream ms(val);
      std::string tok;
      while (std::getline(ms, tok, ','))
        spec.compare_methods.push_back(detail::trim(tok));
    } else if (qual == "compare.jobs") {
      spec.jobs = static_cast<int>(detail::parse_num(val, qual));
    } else {
      fail(ErrorCode::InvalidConfig,
           "spec line " + std::to_string(lineno) + ": unknown key '" + qual +
               "'");
    }
  }
  return spec;
}

inline ExperimentSpec load_experiment(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCode::IoError, path + ": cannot open spec file");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_experiment_text(buf.str());
}

/// Optional command-line overrides applied on top of a parsed spec.
struct SpecOverrides {
  std::optional<std::string> method;
  std::optional<int> views;
  std::optional<double> alpha, rho, mu, sigma;
  std::optional<std::string> lambda_map;
  std::optional<int> inner_iters;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

inline void apply_overrides(ExperimentSpec& spec, const SpecOverrides& ov) {
  if (ov.method) spec.method = *ov.method;
  if (ov.views) spec.views = *ov.views;
  if (ov.alpha) spec.alpha = *ov.alpha;
  if (ov.rho) spec.rho = *ov.rho;
  if (ov.mu) spec.mu = *ov.mu;
  if (ov.sigma) spec.sigma = *ov.sigma;
  if (ov.lambda_map) spec.lambda_map = *ov.lambda_map;
  if (ov.inner_iters) spec.inner_iters = *ov.inner_iters;
  if (ov.seed) spec.seed = *ov.seed;
  if (ov.jobs) spec.jobs = *ov.jobs;
}

inline ScanGeometry make_geometry(const ExperimentSpec& spec) {
  const double pi = std::acos(-1.0);
  auto angles = uniform_arc(spec.views, spec.arc_deg * pi / 180.0,
                            spec.start_deg * pi / 180.0);
  if (spec.scan_type == "fan")
    return FanBeamGeometry(std::move(angles), spec.num_dets, spec.det_size,
                           spec.src_to_det, spec.src_to_iso);
  if (spec.scan_type == "parallel")
    return ParallelBeamGeometry(std::move(angles), spec.num_dets,
                                spec.det_size);
  fail(ErrorCode::InvalidConfig,
       "spec: scan type must be 'fan' or 'parallel'");
}

inline WeightMapping parse_mapping(const std::string& name) {
  if (name == "r1") return WeightMapping::R1;
  if (name == "r2") return WeightMapping::R2;
  if (name == "r3") return WeightMapping::R3;
  fail(ErrorCode::InvalidConfig,
       "lambda_map must be one of r1, r2, r3 (got '" + name + "')");
}

/// Everything a reconstruction consumes; either simulated in memory or
/// loaded from a simulate output directory.
struct ExperimentData {
  Volume phantom;
  Sinogram clean;      // noiseless line integrals (empty when loaded w/o it)
  Sinogram measured;   // log-transformed noisy measurements
  Sinogram intensity;  // transmitted photon counts
  bool has_ground_truth = false;
};

inline ExperimentData simulate_experiment(const ExperimentSpec& spec) {
  ExperimentData data;
  const ImageGrid grid(spec.nx, spec.ny, spec.pixel_size);
  const ScanGeometry geom = make_geometry(spec);
  const EllipsePhantomSpec ph = spec.phantom_file.empty()
                                    ? builtin_phantom(spec.phantom)
                                    : load_phantom(spec.phantom_file);
  data.phantom = rasterize_phantom(ph, grid);
  data.clean = forward_project(geom, data.phantom);
  // Counting noise acts on transmission fractions, so the line integrals
  // are normalized to one attenuation length at the densest ray before the
  // photon draw and the noisy integrals are scaled back afterwards.  The
  // measured sinogram stays commensurate with the clean one and the
  // densest ray still sees the strongest relative noise.
  double pmax = 0.0;
  for (double v : data.clean.values()) pmax = std::max(pmax, v);
  NoiseModelSpec noise{spec.i0, spec.seed};
  Sinogram scaled = data.clean;
  if (pmax > 0.0)
    for (double& v : scaled.values()) v /= pmax;
  auto sim = simulate_measurements(scaled, noise);
  if (pmax > 0.0)
    for (double& v : sim.measured.values()) v *= pmax;
  data.measured = std::move(sim.measured);
  data.intensity = std::move(sim.intensity);
  data.has_ground_truth = true;
  return data;
}

inline ExperimentData load_experiment_data(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  ExperimentData data;
  const fs::path dir(spec.data_dir);
  const ScanGeometry geom = read_geometry((dir / "geometry.txt").string());
  data.measured =
      with_geometry(read_sinogram_raw((dir / "measured.sino").string()), geom);
  if (fs::exists(dir / "intensity.sino"))
    data.intensity = with_geometry(
        read_sinogram_raw((dir / "intensity.sino").string()), geom);
  if (fs::exists(dir / "phantom.raw")) {
    data.phantom = read_volume_raw((dir / "phantom.raw").string());
    data.has_ground_truth = true;
  }
  return data;
}

inline ExperimentData acquire_data(const ExperimentSpec& spec) {
  return spec.data_dir.empty() ? simulate_experiment(spec)
                               : load_experiment_data(spec);
}

// ---- output manifest ------------------------------------------------------

struct ManifestEntry {
  std::string path;  // file name relative to the output directory
  std::uint64_t bytes = 0;
  std::uint64_t hash = 0;
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCode::IoError, path + ": cannot reopen for hashing");
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

/// Convergence traces carry wall-clock times, which vary run to run; the
/// manifest hashes them with the wall_ms column removed so reruns of the
/// same experiment produce identical manifests.
inline std::string canonical_content(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) return bytes;
  const std::string header = bytes.substr(0, nl);
  if (header.size() < 8 || header.substr(header.size() - 8) != ",wall_ms")
    return bytes;
  std::string canon = header.substr(0, header.size() - 8) + "\n";
  std::size_t pos = nl + 1;
  while (pos < bytes.size()) {
    auto end = bytes.find('\n', pos);
    if (end == std::string::npos) end = bytes.size();
    const std::string row = bytes.substr(pos, end - pos);
    const auto comma = row.rfind(',');
    canon += (comma == std::string::npos ? row : row.substr(0, comma)) + "\n";
    pos = end + 1;
  }
  return canon;
}

}  // namespace detail

inline ManifestEntry manifest_entry(const std::filesystem::path& dir,
                                    const std::string& name) {
  const std::string canon =
      detail::canonical_content(detail::read_file_bytes((dir / name).string()));
  return {name, canon.size(), detail::fnv1a64(canon)};
}

inline void write_manifest(const std::filesystem::path& dir,
                           std::vector<ManifestEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.path < b.path;
            });
  auto os = detail::open_out((dir / "manifest.txt").string());
  char hex[17];
  for (const auto& e : entries) {
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(e.hash));
    os << e.path << ' ' << e.bytes << ' ' << hex << '\n';
  }
  require(os.good(), ErrorCode::IoError, "manifest.txt: write failed");
}

// ---- commands -------------------------------------------------------------

namespace detail {

inline int effective_jobs(int requested) {
  int jobs = std::max(1, requested);
  if (const char* cap = std::getenv("TREX_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1) jobs = std::min(jobs, c);
  }
  return jobs;
}

struct MethodRun {
  Volume x;
  bool is_trex = false;
  std::vector<std::string> warnings;
  std::vector<TraceRow> trace;           // plain solver trace
  std::vector<TrexTraceRow> trex_trace;  // regularized loop trace

  std::size_t iters() const {
    return is_trex ? trex_trace.size() : trace.size();
  }
  void snr_summary(int& best_iter, double& best, double& last) const {
    best_iter = 0;
    best = -std::numeric_limits<double>::infinity();
    last = std::numeric_limits<double>::quiet_NaN();
    auto scan = [&](int iter, double snr_db) {
      if (snr_db > best) {
        best = snr_db;
        best_iter = iter;
      }
      last = snr_db;
    };
    if (is_trex)
      for (const auto& r : trex_trace) scan(r.iter, r.snr_db);
    else
      for (const auto& r : trace) scan(r.iter, r.snr_db);
  }
  void write_trace(const std::string& path) const {
    if (is_trex)
      write_trace_csv(path, trex_trace);
    else
      write_trace_csv(path, trace);
  }
};

/// Runs one named method end to end on prepared data.
inline MethodRun run_method(const ExperimentSpec& spec,
                            const ExperimentData& data,
                            const std::string& method_name) {
  const MethodSpec ms = parse_method(method_name);
  const ImageGrid grid(spec.nx, spec.ny, spec.pixel_size);
  const int views = num_views(data.measured.geometry());
  const double alpha = spec.alpha > 0 ? spec.alpha : default_alpha(views);
  const Volume* gt = data.has_ground_truth ? &data.phantom : nullptr;

  MethodRun run;
  if (!ms.is_trex) {
    SolveConfig cfg;
    cfg.method = ms.plain;
    cfg.alpha = alpha;
    cfg.outer_iters = spec.iters;
    cfg.num_subsets = spec.num_subsets;
    cfg.clip_enabled = spec.clip;
    cfg.seed = spec.seed;
    run.warnings = cfg.validate();
    SolverState st = run_solver(cfg, grid, data.measured, gt);
    run.x = st.reported_x(cfg);
    run.trace = std::move(st.trace);
    return run;
  }

  double sigma = spec.sigma, rho = spec.rho;
  double def_sigma = 0, def_rho = 0;
  default_sigma_rho(views, def_sigma, def_rho);
  if (sigma < 0) sigma = def_sigma;
  if (rho < 0) rho = def_rho;

  require(spec.data_term == "gaussian" || spec.data_term == "poisson",
          ErrorCode::InvalidConfig,
          "data_term must be 'gaussian' or 'poisson'");
  TrexConfig cfg;
  cfg.data_term = spec.data_term == "gaussian" ? DataTerm::GaussianLS
                                               : DataTerm::PoissonWLS;
  cfg.prox.method = ms.prox;
  cfg.prox.alpha = alpha;
  cfg.prox.inner_iters = spec.inner_iters;
  cfg.prox.num_subsets = spec.num_subsets;
  cfg.prox.clip_enabled = spec.clip;
  cfg.prox.mapping = parse_mapping(spec.lambda_map);
  cfg.reg = RegOp(ms.reg, grid, sigma);
  cfg.rho = rho;
  cfg.mu = spec.mu;
  cfg.outer_iters = spec.iters;
  require(ms.prox != ProxMethod::OSSQS || cfg.mu > 0, ErrorCode::InvalidConfig,
          "the OS-SQS prox needs an explicit --mu; the automatic step is far "
          "too small for it");

  const Sinogram* intensity =
      data.intensity.ray_count() > 0 ? &data.intensity : nullptr;
  TrexState st = run_trex(cfg, data.measured, intensity, gt);
  run.x = std::move(st.x);
  run.is_trex = true;
  run.trex_trace = std::move(st.trace);
  return run;
}

}  // namespace detail

/// simulate: rasterize the phantom, project it, apply the photon noise
/// model, and write phantom/geometry/sinograms plus a manifest into out_dir.
inline void cmd_simulate(const ExperimentSpec& spec, const std::string& out,
                         std::ostream& log) {
  namespace fs = std::filesystem;
  const fs::path dir(out);
  fs::create_directories(dir);
  const ExperimentData data = simulate_experiment(spec);

  write_volume_raw((dir / "phantom.raw").string(), data.phantom);
  write_volume_pgm((dir / "phantom.pgm").string(), data.phantom);
  write_geometry((dir / "geometry.txt").string(), data.measured.geometry());
  write_sinogram_raw((dir / "clean.sino").string(), data.clean);
  write_sinogram_raw((dir / "measured.sino").string(), data.measured);
  write_sinogram_raw((dir / "intensity.sino").string(), data.intensity);

  std::vector<ManifestEntry> manifest;
  for (const char* name : {"phantom.raw", "phantom.pgm", "phantom.pgm.scale",
                           "geometry.txt", "clean.sino", "measured.sino",
                           "intensity.sino"})
    manifest.push_back(manifest_entry(dir, name));
  write_manifest(dir, manifest);
  log << "simulate: wrote " << manifest.size() + 1 << " files to " << out
      << " (views=" << spec.views << ", dets=" << spec.num_dets
      << ", i0=" << spec.i0 << ", seed=" << spec.seed << ")\n";
}

/// reconstruct: run spec.method on the experiment data (simulated in memory
/// unless [data] points at a simulate directory) and write the volume, its
/// preview, the convergence trace and a manifest.
inline void cmd_reconstruct(const ExperimentSpec& spec, const std::string& out,
                            std::ostream& log) {
  namespace fs = std::filesystem;
  const fs::path dir(out);
  fs::create_directories(dir);
  const ExperimentData data = acquire_data(spec);

  const MethodSpec ms = parse_method(spec.method);  // validate before running
  detail::MethodRun run = detail::run_method(spec, data, spec.method);
  for (const auto& w : run.warnings) log << "warning: " << w << "\n";

  const std::string stem = "recon_" + ms.name;
  write_volume_raw((dir / (stem + ".raw")).string(), run.x);
  write_volume_pgm((dir / (stem + ".pgm")).string(), run.x);
  run.write_trace((dir / ("trace_" + ms.name + ".csv")).string());

  std::vector<ManifestEntry> manifest;
  for (const std::string& name : {stem + ".raw", stem + ".pgm",
                                 stem + ".pgm.scale",
                                 "trace_" + ms.name + ".csv"})
    manifest.push_back(manifest_entry(dir, name));
  write_manifest(dir, manifest);

  int best_iter = 0;
  double best = 0, last = 0;
  run.snr_summary(best_iter, best, last);
  log << "reconstruct: " << ms.name << " finished " << spec.iters
      << " iterations";
  if (!std::isnan(last)) log << ", final snr " << last << " dB";
  log << ", outputs in " << out << "\n";
}

/// compare: run every method of [compare] on the same data, write the
/// per-method outputs, a summary CSV and a manifest. Methods run in up to
/// `jobs` threads (capped by TREX_THREADS); outputs are identical for any
/// thread count.
inline void cmd_compare(const ExperimentSpec& spec, const std::string& out,
                        std::ostream& log) {
  namespace fs = std::filesystem;
  require(!spec.compare_methods.empty(), ErrorCode::InvalidConfig,
          "compare: the spec lists no methods under [compare]");
  for (const auto& name : spec.compare_methods) parse_method(name);

  const fs::path dir(out);
  fs::create_directories(dir);
  const ExperimentData data = acquire_data(spec);

  const std::size_t count = spec.compare_methods.size();
  std::vector<detail::MethodRun> runs(count);
  std::vector<std::string> errors(count);
  std::atomic<std::size_t> next{0};
  const int jobs =
      std::min<int>(detail::effective_jobs(spec.jobs), static_cast<int>(count));

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= count) return;
      try {
        runs[k] = detail::run_method(spec, data, spec.compare_methods[k]);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < count; ++k)
    require(errors[k].empty(), ErrorCode::InvalidConfig,
            spec.compare_methods[k] + ": " + errors[k]);

  std::vector<ManifestEntry> manifest;
  std::ostringstream summary;
  summary << "method,iters,best_iter,best_snr_db,final_snr_db\n";
  for (std::size_t k = 0; k < count; ++k) {
    const auto& name = spec.compare_methods[k];
    const auto& run = runs[k];
    for (const auto& w : run.warnings)
      log << "warning: " << name << ": " << w << "\n";
    const std::string stem = "recon_" + name;
    write_volume_raw((dir / (stem + ".raw")).string(), run.x);
    write_volume_pgm((dir / (stem + ".pgm")).string(), run.x);
    run.write_trace((dir / ("trace_" + name + ".csv")).string());
    for (const std::string& file : {stem + ".raw", stem + ".pgm",
                                   stem + ".pgm.scale",
                                   "trace_" + name + ".csv"})
      manifest.push_back(manifest_entry(dir, file));

    int best_iter = 0;
    double best = 0, last = 0;
    run.snr_summary(best_iter, best, last);
    summary << name << ',' << run.iters() << ',' << best_iter << ','
            << detail::csv_number(best) << ',' << detail::csv_number(last)
            << '\n';
    log << "compare: " << name << " best " << best << " dB @ iter "
        << best_iter << ", final " << last << " dB\n";
  }
  {
    auto os = detail::open_out((dir / "summary.csv").string());
    os << summary.str();
    require(os.good(), ErrorCode::IoError, "summary.csv: write failed");
  }
  manifest.push_back(manifest_entry(dir, "summary.csv"));
  write_manifest(dir, manifest);
  log << "compare: wrote " << manifest.size() + 1 << " files to " << out
      << "\n";
}

}  // namespace trex
