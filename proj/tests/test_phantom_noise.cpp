#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "trex/noise.hpp"
#include "trex/phantom.hpp"
#include "trex/types.hpp"

using namespace trex;

TEST_CASE("phantom text parsing") {
  const char* text = R"(
# comment line
  0.1  -0.2  0.5  0.3   30   1.5  # trailing comment

  0    0     1    1     0   -0.5
)";
  auto spec = parse_phantom(text);
  REQUIRE(spec.ellipses.size() == 2);
  CHECK(spec.ellipses[0].cx == 0.1);
  CHECK(spec.ellipses[0].cy == -0.2);
  CHECK(spec.ellipses[0].theta_deg == 30.0);
  CHECK(spec.ellipses[1].intensity == -0.5);

  CHECK_THROWS_AS(parse_phantom("0.1 0.2 0.5"), Error);        // short line
  CHECK_THROWS_AS(parse_phantom("0 0 0 0.5 0 1"), Error);      // zero axis
  CHECK_THROWS_AS(parse_phantom("# only comments\n"), Error);  // empty spec
}

TEST_CASE("rasterization covers pixel centers inside the ellipse") {
  // disc of normalized radius 0.5 on a fine grid: covered area tends to
  // pi r^2 of the normalized square, i.e. a quarter of the pixels
  EllipsePhantomSpec spec;
  spec.ellipses.push_back({0, 0, 0.5, 0.5, 0, 2.0});
  ImageGrid g(401, 401, 1.0);
  Volume v = rasterize_phantom(spec, g);
  std::size_t covered = 0;
  for (double x : v.values()) {
    if (x != 0.0) {
      CHECK(x == 2.0);
      ++covered;
    }
  }
  const double frac = static_cast<double>(covered) / g.size();
  const double expect = std::acos(-1.0) * 0.25 * 0.25;  // pi r^2 / 4 area
  CHECK(std::abs(frac - expect) < 4e-3);
}

TEST_CASE("overlapping ellipses add their intensities") {
  EllipsePhantomSpec spec;
  spec.ellipses.push_back({0, 0, 0.8, 0.8, 0, 1.0});
  spec.ellipses.push_back({0, 0, 0.3, 0.3, 0, -0.4});
  ImageGrid g(101, 101, 1.0);
  Volume v = rasterize_phantom(spec, g);
  CHECK(v.at(50, 50) == Catch::Approx(0.6));
  CHECK(v.at(50, 95) == 0.0);   // outside both
  CHECK(v.at(50, 80) == 1.0);   // outer only
}

TEST_CASE("rotation swaps ellipse axes") {
  EllipsePhantomSpec flat, turned;
  flat.ellipses.push_back({0, 0, 0.8, 0.2, 0, 1.0});
  turned.ellipses.push_back({0, 0, 0.8, 0.2, 90, 1.0});
  ImageGrid g(81, 81, 1.0);
  Volume a = rasterize_phantom(flat, g);
  Volume b = rasterize_phantom(turned, g);
  CHECK(a.at(68, 40) == 1.0);  // wide one reaches far in x
  CHECK(b.at(68, 40) == 0.0);
  CHECK(b.at(40, 68) == 1.0);  // rotated one reaches far in y
  CHECK(a.at(40, 68) == 0.0);
}

TEST_CASE("builtin phantoms") {
  auto head = builtin_phantom("head");
  CHECK(head.ellipses.size() == 10);
  ImageGrid g(129, 129, 1.0);
  Volume vh = rasterize_phantom(head, g);
  // center pixel: outer shell 1.0 plus inner -0.8 and nothing else
  CHECK(vh.at(64, 64) == Catch::Approx(0.2).margin(1e-12));

  auto torso = builtin_phantom("torso");
  Volume vt = rasterize_phantom(torso, g);
  double vmin = 1e9, vmax = -1e9;
  for (double x : vt.values()) {
    vmin = std::min(vmin, x);
    vmax = std::max(vmax, x);
  }
  CHECK(vmin >= 0.0);  // attenuation never negative
  CHECK(vmax > 0.5);   // spine region is the densest part

  CHECK_THROWS_AS(builtin_phantom("nonesuch"), Error);
}

TEST_CASE("shipped phantom tables reproduce the builtins bit for bit") {
  const std::string root = TREX_SOURCE_DIR;
  ImageGrid g(96, 96, 1.0);
  for (const char* name : {"head", "torso"}) {
    const auto file =
        load_phantom(root + "/data/phantoms/" + name + ".txt");
    const Volume from_file = rasterize_phantom(file, g);
    const Volume from_builtin = rasterize_phantom(builtin_phantom(name), g);
    REQUIRE(from_file.values() == from_builtin.values());
  }
}

TEST_CASE("poisson sampler hits the first two moments on both branches") {
  // small means use inversion, large means transformed rejection
  for (double mean : {4.5, 300.0}) {
    std::mt19937_64 rng(1234);
    const int trials = 20000;
    double sum = 0, sumsq = 0;
    for (int t = 0; t < trials; ++t) {
      const double k =
          static_cast<double>(trex::detail::poisson_sample(rng, mean));
      sum += k;
      sumsq += k * k;
    }
    const double mhat = sum / trials;
    const double vhat = sumsq / trials - mhat * mhat;
    CHECK(std::abs(mhat - mean) < 5.0 * std::sqrt(mean / trials));
    CHECK(std::abs(vhat - mean) < 0.08 * mean + 1.0);
  }
  std::mt19937_64 rng(7);
  CHECK(trex::detail::poisson_sample(rng, 0.0) == 0);
}

TEST_CASE("measurement simulation is deterministic and order independent") {
  ParallelBeamGeometry par(uniform_arc(4, 3.0), 8, 0.5);
  Sinogram clean{ScanGeometry(par)};
  for (std::size_t i = 0; i < clean.ray_count(); ++i)
    clean.values()[i] = 0.05 * static_cast<double>(i);

  NoiseModelSpec noise{1e4, 99};
  auto a = simulate_measurements(clean, noise);
  auto b = simulate_measurements(clean, noise);
  CHECK(a.measured.values() == b.measured.values());
  CHECK(a.intensity.values() == b.intensity.values());

  NoiseModelSpec other{1e4, 100};
  auto c = simulate_measurements(clean, other);
  CHECK(a.measured.values() != c.measured.values());

  // each ray owns a counter-derived stream: the sample for ray i can be
  // reproduced in isolation, independent of all other rays
  for (std::size_t i : {std::size_t(0), std::size_t(17), std::size_t(31)}) {
    std::mt19937_64 rng(trex::detail::splitmix64(noise.seed ^
                                                 (0x50686f746f6e73ull + i)));
    const double mean = noise.i0 * std::exp(-clean.values()[i]);
    auto k = trex::detail::poisson_sample(rng, mean);
    if (k == 0) k = 1;
    CHECK(a.intensity.values()[i] == static_cast<double>(k));
  }

  // log transform identity
  for (std::size_t i = 0; i < clean.ray_count(); ++i)
    CHECK(a.measured.values()[i] ==
          std::log(noise.i0) - std::log(a.intensity.values()[i]));
}

TEST_CASE("opaque rays clamp to one photon") {
  ParallelBeamGeometry par({0.0}, 4, 0.5);
  Sinogram clean{ScanGeometry(par)};
  for (auto& v : clean.values()) v = 60.0;  // e^-60 of 10 photons: always 0
  NoiseModelSpec noise{10.0, 5};
  auto sim = simulate_measurements(clean, noise);
  for (std::size_t i = 0; i < clean.ray_count(); ++i) {
    CHECK(sim.intensity.values()[i] == 1.0);
    CHECK(sim.measured.values()[i] == std::log(10.0));
  }
  NoiseModelSpec bad{0.5, 5};
  CHECK_THROWS_AS(simulate_measurements(clean, bad), Error);
}

TEST_CASE("statistical weights normalize then compress") {
  std::vector<double> counts{100.0, 25.0, 4.0, 0.5};
  auto r1 = poisson_weights(counts, WeightMapping::R1);
  auto r2 = poisson_weights(counts, WeightMapping::R2);
  auto r3 = poisson_weights(counts, WeightMapping::R3);
  CHECK(r1[0] == 1.0);
  CHECK(r1[1] == 0.25);
  CHECK(r2[1] == 0.5);                       // sqrt applied after normalizing
  CHECK(r3[2] == Catch::Approx(std::cbrt(0.04)));
  for (auto& w : {r1, r2, r3})
    for (double x : w) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
    }

  CHECK_THROWS_AS(poisson_weights(std::vector<double>{}, WeightMapping::R1),
                  Error);
  std::vector<double> zeros(5, 0.0);
  CHECK_THROWS_AS(poisson_weights(zeros, WeightMapping::R1), Error);
  try {
    poisson_weights(zeros, WeightMapping::R1);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllZeroMeasurements);
  }
}
