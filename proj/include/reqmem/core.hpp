#pragma once

// Domain types and shared scalar physics for rare-earth ensemble spectroscopy.
// All frequencies are ordinary frequencies in Hz. Simulation grids are detuning
// axes relative to the ensemble center frequency; absolute frequencies only appear
// in scan data and exported artifacts.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace reqmem {

namespace constants {
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double speed_of_light = 299792458.0;         // m/s
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double electron_mass = 9.1093837015e-31;     // kg
inline constexpr double elementary_charge = 1.602176634e-19;  // C
}  // namespace constants

/// Uniform frequency axis. Bin i is centered at
/// center + (i - (bin_count - 1) / 2) * bin_width, with bin_width = span / bin_count.
class FrequencyGrid {
public:
  FrequencyGrid(double center_hz, double span_hz, std::size_t bin_count);

  /// Grid with a prescribed bin width instead of span.
  static FrequencyGrid with_bin_width(double center_hz, double bin_width_hz, std::size_t bin_count);

  double center() const { return center_; }
  double span() const { return span_; }
  double bin_width() const { return span_ / static_cast<double>(count_); }
  std::size_t size() const { return count_; }

  double frequency(std::size_t index) const;
  /// Fractional index of a frequency (inverse of frequency()).
  double index_of(double frequency_hz) const;
  /// Nearest bin, clamped to the grid.
  std::size_t nearest_index(double frequency_hz) const;
  double lowest() const { return frequency(0); }
  double highest() const { return frequency(count_ - 1); }
  std::vector<double> frequencies() const;

private:
  double center_;
  double span_;
  std::size_t count_;
};

/// Three ground and three excited hyperfine levels (I = 5/2 doublets).
struct HyperfineStructure {
  std::array<double, 2> ground_splittings{};   // Hz, cumulative offsets of levels 2 and 3
  std::array<double, 2> excited_splittings{};  // Hz
  /// branching(e, g): probability that decay from excited level e ends in ground level g.
  Eigen::Matrix3d branching = Eigen::Matrix3d::Identity();

  std::array<double, 3> ground_offsets() const;
  std::array<double, 3> excited_offsets() const;
  /// Relative absorption strength of g -> e, normalized so that each ground level
  /// carries unit total strength: branching(e, g) / sum_e' branching(e', g).
  double line_strength(int ground, int excited) const;
  void validate() const;

  /// Placeholder splittings of the right order for Eu3+; not measured values.
  static HyperfineStructure placeholder_eu();
};

struct EmitterEnsemble {
  double center_frequency = 516960.3e9;  // Hz
  double inhomogeneous_fwhm = 7.6e9;     // Hz
  double lifetime = 1.50e-3;             // T1, s
  double coherence_time = 2.4e-6;        // T2, s
  double oscillator_strength = 7.4e-9;
  double peak_optical_depth = 2.0;
  double refractive_index = 1.5;
  HyperfineStructure hyperfine = HyperfineStructure::placeholder_eu();
  double number_density = 3.6e27;  // m^-3

  void validate() const;
  /// Homogeneous linewidth 1/(pi T2).
  double homogeneous_fwhm() const;

  /// Densely packed powder used for transmission measurements.
  static EmitterEnsemble powder();
  /// Single crystal measured by fluorescence excitation.
  static EmitterEnsemble single_crystal();
};

enum class UnitTag { optical_depth, transmission, normalized_counts, spectral_density };

std::string_view to_string(UnitTag tag);
UnitTag parse_unit_tag(std::string_view text);

struct Spectrum {
  FrequencyGrid grid;
  std::vector<double> values;
  UnitTag unit = UnitTag::optical_depth;

  Spectrum(FrequencyGrid grid_in, std::vector<double> values_in, UnitTag unit_in);
  std::size_t size() const { return values.size(); }
  /// Linear interpolation; clamps outside the grid.
  double at(double frequency_hz) const;
};

/// Unit-area Lorentzian, (2 / (pi fwhm)) / (1 + (2 (nu - nu0) / fwhm)^2), in 1/Hz.
double lorentzian(double frequency, double center, double fwhm);

/// Inhomogeneous optical-depth line d0 / (1 + (2 delta / Gamma_inh)^2), with the grid
/// read as detunings delta from the ensemble center.
Spectrum optical_depth_profile(const EmitterEnsemble& ensemble, const FrequencyGrid& grid);
/// Same line evaluated at a single detuning from the ensemble center.
double optical_depth_at_detuning(const EmitterEnsemble& ensemble, double detuning);

/// Gamma_h = 1 / (pi T2).
double homogeneous_linewidth(double coherence_time);
/// T2 = 4 tau_decay, where tau_decay is the 1/e constant of the echo intensity.
double coherence_time_from_decay(double decay_constant);

enum class LocalFieldCorrection { none, virtual_cavity, real_cavity };

std::string_view to_string(LocalFieldCorrection c);
LocalFieldCorrection parse_local_field(std::string_view text);
/// chi(n): 1, n ((n^2 + 2) / 3)^2, or n (3 n^2 / (2 n^2 + 1))^2.
double local_field_factor(double refractive_index, LocalFieldCorrection convention);

/// Oscillator strength of a line with radiative rate beta / T1 at vacuum wavelength lambda.
double oscillator_strength(double lifetime, double branching_ratio, double vacuum_wavelength,
                           double refractive_index,
                           LocalFieldCorrection convention = LocalFieldCorrection::virtual_cavity);
/// Branching ratio implied by an oscillator strength. Not clamped to (0, 1].
double implied_branching_ratio(double oscillator_strength, double lifetime,
                               double vacuum_wavelength, double refractive_index,
                               LocalFieldCorrection convention = LocalFieldCorrection::virtual_cavity);

}  // namespace reqmem
