#pragma once

// Atomic frequency combs: parametric or pumped comb profiles, causal linear-filter
// propagation of a weak input pulse, and echo extraction.

#include <cstdint>
#include <vector>

#include "reqmem/core.hpp"
#include "reqmem/holeburn.hpp"
#include "reqmem/trace.hpp"

namespace reqmem::afc {

enum class ToothShape { gaussian, lorentzian, square };
std::string_view to_string(ToothShape shape);
ToothShape parse_tooth_shape(std::string_view text);

struct CombSpec {
  double tooth_spacing = 1.0 / 600e-9;  // Delta, Hz
  double tooth_fwhm = 0.7184e6;         // gamma, Hz
  ToothShape shape = ToothShape::gaussian;
  double peak_depth = 2.0;
  double background_depth = 0.0;
  double bandwidth = 30e6;  // total extent of the teeth, Hz
  double center = 0.0;      // detuning of the central tooth, Hz

  void validate() const;
  double finesse() const { return tooth_spacing / tooth_fwhm; }
};

enum class PulseShape { gaussian, square };
std::string_view to_string(PulseShape shape);
PulseShape parse_pulse_shape(std::string_view text);

struct InputPulse {
  PulseShape shape = PulseShape::gaussian;
  double duration = 120e-9;  // intensity FWHM (gaussian) or full width (square), s
  double carrier = 0.0;      // detuning, Hz

  void validate() const;
  /// Intensity-spectrum FWHM.
  double bandwidth() const;
  /// Time before which the input carries a negligible share of its energy.
  double start_time() const;
  /// Peak intensity of the unit-energy pulse.
  double peak_intensity() const;
};

/// Optical depth of the comb; each frequency sees its nearest tooth only.
/// Throws ConfigError if the grid has fewer than 8 bins per tooth FWHM.
Spectrum comb_profile(const CombSpec& spec, const FrequencyGrid& grid);

/// (d/F)^2 exp(-d/F) exp(-7/F^2).
double analytic_efficiency(double optical_depth, double finesse);

/// Phase (rad) that makes exp(-d/2 - i phi) a causal response: the discrete
/// Hilbert transform of d/2 after removing the line through the edge values and
/// 8x zero padding. Throws ConfigError if d is still changing steeply at an edge.
std::vector<double> kramers_kronig_phase(const Spectrum& optical_depth);

struct TimeWindow {
  double start = 0.0;
  double stop = 0.0;
};

/// Unit-energy input filtered by exp(-d/2 - i phi) on the spectrum's grid. The
/// input peaks at t = 0; the returned field envelope is relative to the grid
/// frequency at index size / 2.
TimeTrace propagate(const InputPulse& pulse, const Spectrum& optical_depth, const TimeWindow& window);

struct EchoMetric {
  int order = 0;
  double arrival_time = 0.0;
  double efficiency = 0.0;  // windowed energy over input energy
  double peak_ratio = 0.0;  // peak intensity over input peak intensity
};

/// Energy in windows of width 1/(2 Delta) centered at k / Delta, k = 1..n_echoes.
std::vector<EchoMetric> echo_metrics(const TimeTrace& trace, double tooth_spacing, int n_echoes,
                                     double input_peak_intensity = 0.0);

struct StorageResult {
  Spectrum comb;
  TimeTrace output;
  std::vector<EchoMetric> echoes;
  double pre_input_fraction = 0.0;  // output energy before the input over total output energy
};

/// Builds the comb on `grid`, propagates the pulse and extracts n_echoes echoes.
StorageResult store_and_retrieve(const CombSpec& spec, const InputPulse& pulse,
                                 const FrequencyGrid& grid, int n_echoes);
/// Same for an arbitrary absorption spectrum with the given tooth spacing.
StorageResult retrieve_from_spectrum(const Spectrum& optical_depth, double tooth_spacing,
                                     const InputPulse& pulse, int n_echoes);

struct SweepPoint {
  double finesse = 0.0;
  double optical_depth = 0.0;
  double numeric_efficiency = 0.0;
  double analytic_efficiency = 0.0;
  double arrival_time = 0.0;
};

/// Gaussian-tooth efficiency over a (finesse, depth) grid; points run in parallel.
std::vector<SweepPoint> efficiency_sweep(const std::vector<double>& finesses,
                                         const std::vector<double>& depths, const CombSpec& base,
                                         const InputPulse& pulse, const FrequencyGrid& grid);

/// Fourier-series lines of a square pulse train with unit peak power: spacing
/// 1/period, power (w/T)^2 sinc^2(pi m w / T), limited to the main lobe |nu| < 1/w.
std::vector<holeburn::PumpLine> pulse_train_lines(double pulse_width, double period, double center = 0.0);

struct PulseTrainBurn {
  double pulse_width = 120e-9;
  double period = 600e-9;
  std::uint64_t pulse_count = 1000000;
  double laser_fwhm = 0.0;
  double saturation_scale = 0.0;
  double time_step = 1e-4;
  double probe_laser_fwhm = 0.0;
};

/// Burns the pulse-train spectrum into a thermal ensemble for pulse_count periods
/// and probes the resulting absorption on probe_grid.
Spectrum comb_from_pulse_train(const PulseTrainBurn& train, const EmitterEnsemble& ensemble,
                               const FrequencyGrid& probe_grid);

/// Moves a spectrum onto another grid by linear interpolation (clamped at the edges).
Spectrum resample(const Spectrum& spectrum, const FrequencyGrid& grid);

}  // namespace reqmem::afc
