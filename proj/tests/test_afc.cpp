#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "reqmem/afc.hpp"
#include "reqmem/errors.hpp"

using namespace reqmem;
using namespace reqmem::afc;
using constants::pi;

namespace {

const FrequencyGrid kGrid(0.0, 64e6, 1u << 18);

CombSpec reference_comb() {
  CombSpec c;
  c.tooth_spacing = 1.0 / 600e-9;
  c.tooth_fwhm = c.tooth_spacing / 2.32;
  c.peak_depth = 2.0;
  return c;
}

Spectrum flat(const FrequencyGrid& grid, double d) {
  return Spectrum(grid, std::vector<double>(grid.size(), d), UnitTag::optical_depth);
}

}  // namespace

TEST_CASE("analytic efficiency") {
  CHECK(analytic_efficiency(2.0, 2.32) == doctest::Approx(0.0855).epsilon(0.005));
  CHECK(analytic_efficiency(0.0, 2.32) == 0.0);
  double best_f = 0.0, best = 0.0;
  for (double f = 1.5; f < 10.0; f += 1e-4) {
    const double eta = analytic_efficiency(2.0, f);
    if (eta > best) {
      best = eta;
      best_f = f;
    }
  }
  CHECK(best_f == doctest::Approx(3.19).epsilon(0.005));
  CHECK(best == doctest::Approx(0.106).epsilon(0.01));
  CHECK(reference_comb().finesse() == doctest::Approx(2.32));
  CombSpec c;
  CHECK(c.finesse() == doctest::Approx(2.32).epsilon(1e-3));
  CHECK_THROWS_AS(analytic_efficiency(-1.0, 2.0), InvalidParameter);
}

TEST_CASE("comb profile geometry") {
  const FrequencyGrid grid(0.0, 40e6, 1u << 16);
  SUBCASE("gaussian teeth") {
    CombSpec c = reference_comb();
    c.background_depth = 0.3;
    const Spectrum s = comb_profile(c, grid);
    const double peak = *std::max_element(s.values.begin(), s.values.end());
    const double low = *std::min_element(s.values.begin(), s.values.end());
    CHECK(peak == doctest::Approx(2.3).epsilon(1e-3));
    CHECK(low >= 0.3 - 1e-12);
    // Periodic inside the comb bandwidth.
    for (double nu : {0.0, 0.3e6, 0.61e6, 1.1e6})
      CHECK(s.at(nu) == doctest::Approx(s.at(nu + 3.0 * c.tooth_spacing)).epsilon(1e-3));
  }
  SUBCASE("gaussian mean depth at low finesse") {
    // Overlapping tails add up, so one period averages to d (gamma / Delta) sqrt(pi / (4 ln 2)).
    CombSpec c = reference_comb();
    c.tooth_fwhm = c.tooth_spacing / 2.0;
    const Spectrum s = comb_profile(c, grid);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (std::abs(grid.frequency(i)) < 0.5 * c.tooth_spacing) {
        sum += s.values[i];
        ++n;
      }
    const double expected = 2.0 / 2.0 * std::sqrt(std::acos(-1.0) / (4.0 * std::log(2.0)));
    CHECK(sum / static_cast<double>(n) == doctest::Approx(expected).epsilon(1e-3));
    CHECK(*std::max_element(s.values.begin(), s.values.end()) == doctest::Approx(2.0).epsilon(1e-4));
  }
  SUBCASE("square duty cycle") {
    CombSpec c = reference_comb();
    c.shape = ToothShape::square;
    c.bandwidth = 39e6;
    const Spectrum s = comb_profile(c, grid);
    std::size_t inside = 0, full = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (std::abs(grid.frequency(i)) > 10 * c.tooth_spacing) continue;
      ++inside;
      if (s.values[i] == doctest::Approx(2.0)) ++full;
    }
    const double fraction = static_cast<double>(full) / static_cast<double>(inside);
    const double per_tooth_bins = c.tooth_spacing / grid.bin_width();
    CHECK(std::abs(fraction - 1.0 / 2.32) <= 1.0 / per_tooth_bins);
  }
  SUBCASE("zero depth is flat") {
    CombSpec c = reference_comb();
    c.peak_depth = 0.0;
    c.background_depth = 0.7;
    for (double v : comb_profile(c, grid).values) CHECK(v == 0.7);
  }
  SUBCASE("under-resolved teeth are rejected") {
    CHECK_THROWS_AS(comb_profile(reference_comb(), FrequencyGrid(0.0, 64e6, 256)), ConfigError);
    CombSpec c = reference_comb();
    c.tooth_fwhm = 2.0 * c.tooth_spacing;
    CHECK_THROWS_AS(comb_profile(c, grid), ConfigError);
  }
  CHECK(parse_tooth_shape("lorentzian") == ToothShape::lorentzian);
  CHECK_THROWS_AS(parse_tooth_shape("triangle"), ConfigError);
}

TEST_CASE("dispersion phase") {
  SUBCASE("constant absorption") {
    for (double v : kramers_kronig_phase(flat(FrequencyGrid(0.0, 1e6, 4096), 1.3))) CHECK(v == 0.0);
  }
  SUBCASE("lorentzian hilbert pair") {
    const double gamma = 100e3, d0 = 1.0;
    const FrequencyGrid grid(0.0, 800 * gamma, 16384);
    std::vector<double> d(grid.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double u = 2.0 * grid.frequency(i) / gamma;
      d[i] = d0 / (1.0 + u * u);
    }
    const auto phi = kramers_kronig_phase(Spectrum(grid, d, UnitTag::optical_depth));
    const double extremum = d0 / 4.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double nu = grid.frequency(i);
      if (std::abs(nu) > 20 * gamma) continue;
      const double expected = -(d0 / 2.0) * (gamma / 2.0) * nu / (nu * nu + gamma * gamma / 4.0);
      CHECK(std::abs(phi[i] - expected) < 0.01 * extremum);
    }
    const std::size_t at_half = grid.nearest_index(gamma / 2.0);
    CHECK(std::abs(phi[at_half]) == doctest::Approx(extremum).epsilon(0.01));
  }
  SUBCASE("odd about a symmetric comb") {
    const FrequencyGrid grid(0.0, 40e6, 1u << 16);
    const Spectrum s = comb_profile(reference_comb(), grid);
    const auto phi = kramers_kronig_phase(s);
    // Bin i and n - i are mirror images about the grid frequency at n / 2.
    const std::size_t n = grid.size();
    REQUIRE(std::abs(grid.frequency(n / 2) - 0.5 * grid.bin_width()) < 1e-6);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(phi[i] + phi[n - 1 - i]) < 1e-6);
  }
  SUBCASE("edges must settle") {
    const FrequencyGrid grid(0.0, 1e6, 64);
    std::vector<double> ramp(64);
    for (std::size_t i = 0; i < 64; ++i) ramp[i] = 0.01 * static_cast<double>(i);
    for (double v : kramers_kronig_phase(Spectrum(grid, ramp, UnitTag::optical_depth))) CHECK(v == 0.0);
    std::vector<double> cut(64, 0.0);
    for (std::size_t i = 56; i < 64; ++i) cut[i] = 0.2 * static_cast<double>(i - 56);
    CHECK_THROWS_AS(kramers_kronig_phase(Spectrum(grid, cut, UnitTag::optical_depth)), ConfigError);
  }
}

TEST_CASE("linear filter propagation") {
  const InputPulse pulse;
  const TimeWindow window{-1.5e-6, 2.0e-6};
  SUBCASE("transparent medium") {
    const TimeTrace out = propagate(pulse, flat(kGrid, 0.0), window);
    CHECK(out.total_energy() == doctest::Approx(1.0).epsilon(1e-6));
    const auto echoes = echo_metrics(out, 1.0 / 600e-9, 3);
    for (const auto& e : echoes) CHECK(e.efficiency < 1e-4);
  }
  SUBCASE("beer-lambert") {
    for (double d : {0.5, 2.0}) {
      const TimeTrace out = propagate(pulse, flat(kGrid, d), window);
      CHECK(out.total_energy() == doctest::Approx(std::exp(-d)).epsilon(0.01));
    }
  }
  SUBCASE("square pulse is also normalized") {
    InputPulse square;
    square.shape = PulseShape::square;
    square.duration = 200e-9;
    CHECK(propagate(square, flat(kGrid, 0.0), window).total_energy() == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("energy bound and causality") {
    for (double d : {0.5, 2.0, 5.0}) {
      CombSpec c = reference_comb();
      c.peak_depth = d;
      c.background_depth = 0.1;
      const auto r = store_and_retrieve(c, pulse, kGrid, 3);
      CHECK(r.output.total_energy() <= 1.0 + 1e-6);
      CHECK(r.pre_input_fraction < 1e-4);
    }
  }
  SUBCASE("configuration checks") {
    CHECK_THROWS_AS(propagate(pulse, flat(FrequencyGrid(0.0, 8e6, 4096), 0.0), window), ConfigError);
    CHECK_THROWS_AS(propagate(pulse, flat(FrequencyGrid(0.0, 64e6, 64), 0.0), window), ConfigError);
    const TimeTrace out = propagate(pulse, flat(kGrid, 0.0), TimeWindow{-0.2e-6, 1.0e-6});
    CHECK_THROWS_AS(echo_metrics(out, 1.0 / 600e-9, 2), ConfigError);
  }
}

TEST_CASE("comb storage") {
  const InputPulse pulse;
  SUBCASE("600 ns comb") {
    const auto r = store_and_retrieve(reference_comb(), pulse, kGrid, 3);
    const auto& first = r.echoes.front();
    CHECK(std::abs(first.arrival_time - 600e-9) <= r.output.dt);
    CHECK(first.efficiency == doctest::Approx(analytic_efficiency(2.0, 2.32)).epsilon(0.15));
    CHECK(first.peak_ratio > 0.0);
  }
  SUBCASE("storage times from 300 to 800 ns") {
    for (double storage : {300e-9, 450e-9, 600e-9, 800e-9}) {
      CombSpec c = reference_comb();
      c.tooth_spacing = 1.0 / storage;
      c.tooth_fwhm = c.tooth_spacing / 3.0;
      const auto r = store_and_retrieve(c, pulse, kGrid, 1);
      CHECK(std::abs(r.echoes.front().arrival_time - storage) <= r.output.dt);
    }
  }
  SUBCASE("shallow comb echo train") {
    CombSpec c = reference_comb();
    c.peak_depth = 0.5;
    const auto r = store_and_retrieve(c, pulse, kGrid, 3);
    REQUIRE(r.echoes.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(r.echoes[k].efficiency > 0.0);
      CHECK(std::abs(r.echoes[k].arrival_time - (k + 1) * 600e-9) <= r.output.dt);
      if (k > 0) CHECK(r.echoes[k].efficiency < r.echoes[k - 1].efficiency);
    }
  }
  SUBCASE("grid convergence") {
    const auto coarse = store_and_retrieve(reference_comb(), pulse, kGrid, 1);
    const auto fine = store_and_retrieve(reference_comb(), pulse, FrequencyGrid(0.0, 64e6, 1u << 19), 1);
    CHECK(fine.echoes[0].efficiency ==
          doctest::Approx(coarse.echoes[0].efficiency).epsilon(0.01));
  }
}

TEST_CASE("pulse train spectrum") {
  const auto lines = pulse_train_lines(120e-9, 600e-9);
  REQUIRE(lines.size() >= 3);
  for (std::size_t i = 1; i < lines.size(); ++i)
    CHECK(lines[i].frequency - lines[i - 1].frequency == doctest::Approx(1.0 / 600e-9).epsilon(1e-12));
  double peak = 0.0;
  for (const auto& l : lines) {
    peak = std::max(peak, l.relative_power);
    CHECK(std::abs(l.frequency) < 1.0 / 120e-9 + 1.0);
  }
  CHECK(peak == doctest::Approx(0.04));
  // The first envelope zero sits at 1/w = 8.33 MHz.
  for (const auto& l : lines)
    if (std::abs(std::abs(l.frequency) - 1.0 / 120e-9) < 1.0) CHECK(l.relative_power < 1e-20);
  CHECK(1.0 / 120e-9 == doctest::Approx(8.33e6).epsilon(1e-3));
  CHECK_THROWS_AS(pulse_train_lines(600e-9, 120e-9), ConfigError);
}

TEST_CASE("pumped comb stores and recalls at the period") {
  EmitterEnsemble e;
  e.peak_optical_depth = 2.0;
  PulseTrainBurn train;
  train.saturation_scale = 300.0;
  const FrequencyGrid probe(0.0, 20e6, 8192);
  const Spectrum comb = comb_from_pulse_train(train, e, probe);
  // Absorption minima sit on the pump lines.
  const double between = comb.at(0.5 / train.period);
  CHECK(comb.at(0.0) < between);
  CHECK(comb.at(1.0 / train.period) < between);

  const FrequencyGrid grid(0.0, 64e6, 1u << 16);
  const auto r = retrieve_from_spectrum(resample(comb, grid), 1.0 / train.period, InputPulse{}, 2);
  CHECK(std::abs(r.echoes.front().arrival_time - train.period) <= r.output.dt);
  CHECK(r.echoes.front().efficiency > 1e-4);
  CHECK(r.pre_input_fraction < 1e-4);
}
