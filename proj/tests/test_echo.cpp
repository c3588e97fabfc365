#include <cmath>
#include <numeric>

#include "doctest.h"

#include "reqmem/echo.hpp"
#include "reqmem/errors.hpp"
#include "reqmem/fit.hpp"

using namespace reqmem;
using namespace reqmem::echo;

namespace {

EchoConfig small_config(std::size_t n = 4000) {
  EchoConfig c;
  c.emitter_count = n;
  c.pulse_duration = 0.4e-6;
  c.delay = 1.0e-6;
  c.dephasing = Dephasing::markovian(2.4e-6);
  return c;
}

double stddev(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("mims intensity") {
  CHECK(mims_intensity(0.0, 3.0, 2.4e-6, 1.0) == 3.0);
  CHECK(mims_intensity(0.6e-6, 1.0, 2.4e-6, 1.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(mims_intensity(0.6e-6, 1.0, 2.4e-6, 2.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(mims_intensity(0.3e-6, 1.0, 2.4e-6, 2.0) == doctest::Approx(std::exp(-0.25)));
  CHECK(mims_intensity(0.5e-6, 1.0, 2.4e-6, 1.4) > mims_intensity(0.6e-6, 1.0, 2.4e-6, 1.4));
  CHECK_THROWS_AS(mims_intensity(1e-6, 1.0, 2.4e-6, 0.4), InvalidParameter);
  CHECK_THROWS_AS(mims_intensity(1e-6, 1.0, 2.4e-6, 3.5), InvalidParameter);
}

TEST_CASE("effective linewidth forward model") {
  CHECK(effective_linewidth(0.0, 120e3, 200e3, 1e4) == 120e3);
  CHECK(effective_linewidth(1.0, 120e3, 0.0, 1e4) == 120e3);
  CHECK(effective_linewidth(20.0 / 1e4, 120e3, 200e3, 1e4) == doctest::Approx(220e3).epsilon(1e-6));
  double previous = 0.0;
  for (double tw : {0.0, 1e-5, 1e-4, 1e-3}) {
    const double g = effective_linewidth(tw, 120e3, 200e3, 1e4);
    CHECK(g >= previous);
    previous = g;
  }
  CHECK(linewidth_from_decay(0.6e-6) == doctest::Approx(homogeneous_linewidth(2.4e-6)));
}

TEST_CASE("echo timing") {
  // Weak dephasing keeps the statistical wander of the maximum below one bin.
  const EmitterEnsemble e;
  for (double delay : {0.5e-6, 1.0e-6, 2.0e-6}) {
    EchoConfig c = small_config(20000);
    c.dephasing = Dephasing::markovian(1e-3);
    c.delay = delay;
    const auto two = two_pulse_echo(c, e);
    CHECK(std::abs(two.peak_time - 2.0 * delay) <= two.trace.dt);
    CHECK(two.area > 0.0);
    for (std::size_t i = 0; i < two.trace.size(); ++i) CHECK(two.trace.intensity(i) >= 0.0);

    c.wait = 100e-6;
    const auto three = three_pulse_echo(c, e);
    CHECK(std::abs(three.peak_time - (2.0 * delay + 100e-6)) <= three.trace.dt);
  }
}

TEST_CASE("seed determinism and frame invariance") {
  const EmitterEnsemble e;
  EchoConfig c = small_config();
  const auto a = two_pulse_echo(c, e);
  const auto b = two_pulse_echo(c, e);
  CHECK(a.trace.samples == b.trace.samples);
  CHECK(a.area == b.area);

  c.frame_offset = 3.7e6;
  const auto shifted = two_pulse_echo(c, e);
  CHECK(std::abs(shifted.area / a.area - 1.0) < 1e-9);
}

TEST_CASE("seed-to-seed scatter") {
  const EmitterEnsemble e;
  std::vector<double> spread;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    std::vector<double> areas;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      EchoConfig c = small_config(n);
      c.seed = seed;
      areas.push_back(two_pulse_echo(c, e).area);
    }
    spread.push_back(stddev(areas));
  }
  // Neighbouring N differ by 10x, so the scatter should drop by sqrt(10).
  for (std::size_t k = 0; k + 1 < spread.size(); ++k) {
    const double ratio = spread[k] / spread[k + 1] / std::sqrt(10.0);
    CHECK(ratio > 1.0 / 1.5);
    CHECK(ratio < 1.5);
  }
  // Two seeds at the largest N agree within three standard errors.
  EchoConfig c1 = small_config(100000), c2 = small_config(100000);
  c2.seed = 99;
  CHECK(std::abs(two_pulse_echo(c1, e).area - two_pulse_echo(c2, e).area) < 3.0 * std::sqrt(2.0) * spread[2]);
}

TEST_CASE("stimulated echo decays with the lifetime") {
  const EmitterEnsemble e;
  fit::Dataset d;
  for (double tw : {0.0, 0.5e-3, 1e-3, 2e-3, 3e-3, 4.5e-3, 6e-3}) {
    EchoConfig c = small_config();
    c.wait = tw;
    d.x.push_back(tw);
    d.y.push_back(three_pulse_echo(c, e).area);
  }
  const auto r = fit::fit_exponential(d);
  CHECK(r.value("tau") == doctest::Approx(e.lifetime).epsilon(0.05));
}

TEST_CASE("markovian dataset has unit Mims exponent") {
  const EmitterEnsemble e;
  EchoConfig c = small_config(100000);
  std::vector<double> delays;
  for (int i = 0; i < 7; ++i) delays.push_back(0.5e-6 + 0.25e-6 * i);
  const auto rows = echo_decay_dataset(delays, c, e, false, 2);
  REQUIRE(rows.size() == delays.size());
  const auto r = fit::fit_mims(to_dataset(rows));
  CHECK(r.value("x") == doctest::Approx(1.0).epsilon(0.05));
  CHECK(r.value("t_m") == doctest::Approx(2.4e-6).epsilon(0.05));
}

TEST_CASE("decay dataset bookkeeping") {
  const EmitterEnsemble e;
  const auto rows = echo_decay_dataset({1e-6}, small_config(), e, false, 3);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].delay == 1e-6);
  CHECK(rows[0].stderr_area > 0.0);
  const auto single = echo_decay_dataset({1e-6, 1.5e-6}, small_config(), e, false, 1);
  CHECK(single[0].stderr_area == 0.0);
  CHECK_FALSE(to_dataset(single).y_err.has_value());
  CHECK(to_dataset(rows).y_err.has_value());
  CHECK_THROWS_AS(echo_decay_dataset({1.5e-6, 1e-6}, small_config(), e), InvalidParameter);
  CHECK_THROWS_AS(echo_decay_dataset({}, small_config(), e), InvalidParameter);
}

TEST_CASE("config validation") {
  const EmitterEnsemble e;
  EchoConfig c = small_config();
  c.emitter_count = 10;
  CHECK_THROWS_AS(two_pulse_echo(c, e), ConfigError);
  c = small_config();
  c.delay = 0.3e-6;
  CHECK_THROWS_AS(two_pulse_echo(c, e), ConfigError);
  c = small_config();
  c.detector = DetectorGrid{1.9e-6, 2.1e-6, 1e-9};
  CHECK_THROWS_AS(two_pulse_echo(c, e), ConfigError);
  c.detector = DetectorGrid{1.5e-6, 2.5e-6, 50e-9};
  CHECK_THROWS_AS(two_pulse_echo(c, e), ConfigError);
  c.detector = DetectorGrid{0.9e-6, 2.5e-6, 10e-9};
  CHECK_THROWS_AS(two_pulse_echo(c, e), ConfigError);
  c = small_config();
  c.wait = -1.0;
  CHECK_THROWS_AS(three_pulse_echo(c, e), ConfigError);
}
