#include "reqmem/core.hpp"

#include <algorithm>
#include <cmath>

#include "reqmem/errors.hpp"

namespace reqmem {

using constants::pi;

FrequencyGrid::FrequencyGrid(double center_hz, double span_hz, std::size_t bin_count)
    : center_(center_hz), span_(span_hz), count_(bin_count) {
  if (bin_count < 2) throw InvalidParameter("FrequencyGrid: bin_count must be >= 2");
  if (!(span_hz > 0.0) || !std::isfinite(span_hz))
    throw InvalidParameter("FrequencyGrid: span must be positive and finite");
  if (!std::isfinite(center_hz)) throw InvalidParameter("FrequencyGrid: center must be finite");
}

FrequencyGrid FrequencyGrid::with_bin_width(double center_hz, double bin_width_hz,
                                            std::size_t bin_count) {
  return FrequencyGrid(center_hz, bin_width_hz * static_cast<double>(bin_count), bin_count);
}

double FrequencyGrid::frequency(std::size_t index) const {
  const double offset = static_cast<double>(index) - 0.5 * static_cast<double>(count_ - 1);
  return center_ + offset * bin_width();
}

double FrequencyGrid::index_of(double frequency_hz) const {
  return (frequency_hz - center_) / bin_width() + 0.5 * static_cast<double>(count_ - 1);
}

std::size_t FrequencyGrid::nearest_index(double frequency_hz) const {
  const double idx = std::round(index_of(frequency_hz));
  if (idx <= 0.0) return 0;
  if (idx >= static_cast<double>(count_ - 1)) return count_ - 1;
  return static_cast<std::size_t>(idx);
}

std::vector<double> FrequencyGrid::frequencies() const {
  std::vector<double> out(count_);
  for (std::size_t i = 0; i < count_; ++i) out[i] = frequency(i);
  return out;
}

std::array<double, 3> HyperfineStructure::ground_offsets() const {
  return {0.0, ground_splittings[0], ground_splittings[0] + ground_splittings[1]};
}

std::array<double, 3> HyperfineStructure::excited_offsets() const {
  return {0.0, excited_splittings[0], excited_splittings[0] + excited_splittings[1]};
}

double HyperfineStructure::line_strength(int ground, int excited) const {
  const double column = branching.col(ground).sum();
  if (column <= 0.0) return 0.0;
  return branching(excited, ground) / column;
}

void HyperfineStructure::validate() const {
  for (double s : ground_splittings)
    if (!(s >= 0.0)) throw InvalidParameter("hyperfine: ground splittings must be >= 0");
  for (double s : excited_splittings)
    if (!(s >= 0.0)) throw InvalidParameter("hyperfine: excited splittings must be >= 0");
  for (int e = 0; e < 3; ++e) {
    for (int g = 0; g < 3; ++g)
      if (!(branching(e, g) >= 0.0))
        throw InvalidParameter("hyperfine: branching entries must be >= 0");
    if (std::abs(branching.row(e).sum() - 1.0) > 1e-12)
      throw InvalidParameter("hyperfine: branching row " + std::to_string(e) +
                             " does not sum to 1");
  }
}

HyperfineStructure HyperfineStructure::placeholder_eu() {
  HyperfineStructure h;
  h.ground_splittings = {35e6, 55e6};
  h.excited_splittings = {75e6, 100e6};
  h.branching << 0.6, 0.3, 0.1,
                 0.3, 0.5, 0.2,
                 0.1, 0.2, 0.7;
  return h;
}

void EmitterEnsemble::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw InvalidParameter(std::string("ensemble: ") + name + " must be positive");
  };
  positive(inhomogeneous_fwhm, "inhomogeneous_fwhm");
  positive(lifetime, "lifetime");
  positive(coherence_time, "coherence_time");
  positive(oscillator_strength, "oscillator_strength");
  positive(number_density, "number_density");
  positive(refractive_index, "refractive_index");
  if (!std::isfinite(center_frequency))
    throw InvalidParameter("ensemble: center_frequency must be finite");
  if (!(peak_optical_depth >= 0.0))
    throw InvalidParameter("ensemble: peak_optical_depth must be >= 0");
  if (coherence_time > 2.0 * lifetime)
    throw InvalidParameter("ensemble: coherence_time exceeds 2 * lifetime");
  hyperfine.validate();
}

double EmitterEnsemble::homogeneous_fwhm() const { return homogeneous_linewidth(coherence_time); }

EmitterEnsemble EmitterEnsemble::powder() { return EmitterEnsemble{}; }

EmitterEnsemble EmitterEnsemble::single_crystal() {
  EmitterEnsemble e;
  e.inhomogeneous_fwhm = 2.2e9;
  return e;
}

std::string_view to_string(UnitTag tag) {
  switch (tag) {
    case UnitTag::optical_depth: return "optical_depth";
    case UnitTag::transmission: return "transmission";
    case UnitTag::normalized_counts: return "normalized_counts";
    case UnitTag::spectral_density: return "spectral_density";
  }
  return "unknown";
}

UnitTag parse_unit_tag(std::string_view text) {
  for (UnitTag t : {UnitTag::optical_depth, UnitTag::transmission, UnitTag::normalized_counts,
                    UnitTag::spectral_density})
    if (to_string(t) == text) return t;
  throw InvalidParameter("unknown unit tag '" + std::string(text) + "'");
}

Spectrum::Spectrum(FrequencyGrid grid_in, std::vector<double> values_in, UnitTag unit_in)
    : grid(grid_in), values(std::move(values_in)), unit(unit_in) {
  if (values.size() != grid.size())
    throw InvalidParameter("Spectrum: value count does not match grid");
  if (unit == UnitTag::transmission) {
    for (double v : values)
      if (v < 0.0 || v > 1.0) throw InvalidParameter("Spectrum: transmission outside [0, 1]");
  }
  if (unit == UnitTag::optical_depth) {
    for (double v : values)
      if (v < 0.0) throw InvalidParameter("Spectrum: negative optical depth");
  }
}

double Spectrum::at(double frequency_hz) const {
  const double idx = grid.index_of(frequency_hz);
  if (idx <= 0.0) return values.front();
  const double last = static_cast<double>(values.size() - 1);
  if (idx >= last) return values.back();
  const auto i = static_cast<std::size_t>(idx);
  const double frac = idx - static_cast<double>(i);
  return values[i] * (1.0 - frac) + values[i + 1] * frac;
}

double lorentzian(double frequency, double center, double fwhm) {
  if (!(fwhm > 0.0)) throw InvalidParameter("lorentzian: fwhm must be positive");
  const double x = 2.0 * (frequency - center) / fwhm;
  return (2.0 / (pi * fwhm)) / (1.0 + x * x);
}

double optical_depth_at_detuning(const EmitterEnsemble& ensemble, double detuning) {
  const double x = 2.0 * detuning / ensemble.inhomogeneous_fwhm;
  return ensemble.peak_optical_depth / (1.0 + x * x);
}

Spectrum optical_depth_profile(const EmitterEnsemble& ensemble, const FrequencyGrid& grid) {
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    values[i] = optical_depth_at_detuning(ensemble, grid.frequency(i));
  return Spectrum(grid, std::move(values), UnitTag::optical_depth);
}

double homogeneous_linewidth(double coherence_time) {
  if (!(coherence_time > 0.0))
    throw InvalidParameter("homogeneous_linewidth: T2 must be positive");
  return 1.0 / (pi * coherence_time);
}

double coherence_time_from_decay(double decay_constant) {
  if (!(decay_constant > 0.0))
    throw InvalidParameter("coherence_time_from_decay: decay constant must be positive");
  return 4.0 * decay_constant;
}

std::string_view to_string(LocalFieldCorrection c) {
  switch (c) {
    case LocalFieldCorrection::none: return "none";
    case LocalFieldCorrection::virtual_cavity: return "virtual_cavity";
    case LocalFieldCorrection::real_cavity: return "real_cavity";
  }
  return "unknown";
}

LocalFieldCorrection parse_local_field(std::string_view text) {
  for (auto c : {LocalFieldCorrection::none, LocalFieldCorrection::virtual_cavity,
                 LocalFieldCorrection::real_cavity})
    if (to_string(c) == text) return c;
  throw InvalidParameter("unknown local-field convention '" + std::string(text) + "'");
}

double local_field_factor(double n, LocalFieldCorrection convention) {
  if (!(n >= 1.0)) throw InvalidParameter("local_field_factor: refractive index must be >= 1");
  switch (convention) {
    case LocalFieldCorrection::none: return 1.0;
    case LocalFieldCorrection::virtual_cavity: {
      const double l = (n * n + 2.0) / 3.0;
      return n * l * l;
    }
    case LocalFieldCorrection::real_cavity: {
      const double l = 3.0 * n * n / (2.0 * n * n + 1.0);
      return n * l * l;
    }
  }
  return 1.0;
}

namespace {

// f / A for a unit local-field factor: eps0 m_e c lambda^2 / (2 pi e^2).
double strength_per_rate(double vacuum_wavelength) {
  using namespace constants;
  return vacuum_permittivity * electron_mass * speed_of_light * vacuum_wavelength *
         vacuum_wavelength / (2.0 * pi * elementary_charge * elementary_charge);
}

}  // namespace

double oscillator_strength(double lifetime, double branching_ratio, double vacuum_wavelength,
                           double refractive_index, LocalFieldCorrection convention) {
  if (!(branching_ratio > 0.0 && branching_ratio <= 1.0))
    throw InvalidParameter("oscillator_strength: branching ratio must lie in (0, 1]");
  if (!(lifetime > 0.0) || !(vacuum_wavelength > 0.0))
    throw InvalidParameter("oscillator_strength: lifetime and wavelength must be positive");
  const double rate = branching_ratio / lifetime;
  return rate * strength_per_rate(vacuum_wavelength) /
         local_field_factor(refractive_index, convention);
}

double implied_branching_ratio(double f, double lifetime, double vacuum_wavelength,
                               double refractive_index, LocalFieldCorrection convention) {
  const double rate =
      f * local_field_factor(refractive_index, convention) / strength_per_rate(vacuum_wavelength);
  return rate * lifetime;
}

}  // namespace reqmem
