#pragma once

// Rate-equation spectral hole burning over inhomogeneous frequency classes.
//
// Each class is a set of emitters whose (ground 1 -> excited 1) transition sits at
// the class detuning. The excited state is adiabatically eliminated: pumped
// population returns to the ground levels through the branching matrix, so only
// the three ground-level populations are tracked per class.

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "reqmem/core.hpp"

namespace reqmem::holeburn {

struct PopulationState {
  FrequencyGrid classes;  // class detunings
  std::vector<std::array<double, 3>> populations;
  /// Inhomogeneous probability mass of each class, rho(delta) * class spacing.
  std::vector<double> class_weights;

  std::size_t size() const { return populations.size(); }
  void validate() const;
};

struct PumpLine {
  double frequency = 0.0;  // detuning, Hz
  double relative_power = 0.0;
};

struct BurnSchedule {
  std::vector<PumpLine> lines;
  double laser_fwhm = 0.0;  // Hz
  double duration = 0.0;    // s
  /// Resonant pump rate (1/s) per unit relative power on a unit-strength line.
  double saturation_scale = 0.0;

  void validate() const;

  static BurnSchedule monochromatic(double frequency, double relative_power, double laser_fwhm,
                                    double duration, double saturation_scale);
  /// Treats every bin of a spectral-density pump as a line of power value * bin width.
  static BurnSchedule from_spectral_density(const Spectrum& density, double laser_fwhm,
                                            double duration, double saturation_scale);
};

/// Ground-level relaxation generator: rates(g', g) >= 0 is the g -> g' rate,
/// diagonal entries make every column sum to zero.
struct RelaxationMatrix {
  Eigen::Matrix3d rates = Eigen::Matrix3d::Zero();
  void validate() const;
};

/// Class grid sharing the probe grid's alignment, extended far enough that every
/// hyperfine transition landing inside the probe window belongs to a tracked class.
FrequencyGrid class_grid_for(const FrequencyGrid& probe_grid, const HyperfineStructure& hyperfine,
                             double homogeneous_fwhm, std::size_t oversampling = 1);

/// Infinite-temperature ground populations (1/3 each) with Lorentzian class weights.
PopulationState initialize_thermal(const EmitterEnsemble& ensemble, const FrequencyGrid& class_grid);

/// Evolves the populations under the pump for schedule.duration using exact
/// per-step exponentials of each class's 3x3 generator. Throws NumericError if a
/// class would transfer more than half a level's population in one step.
PopulationState burn(const PopulationState& state, const EmitterEnsemble& ensemble,
                     const BurnSchedule& schedule, double time_step);

/// Optical depth seen by a probe of the given laser width: the unburned
/// inhomogeneous line plus the change contributed by every class.
Spectrum probe_absorption(const PopulationState& state, const EmitterEnsemble& ensemble,
                          const FrequencyGrid& grid, double probe_laser_fwhm);

/// Single-frequency evaluation by direct summation over classes.
double probe_optical_depth(const PopulationState& state, const EmitterEnsemble& ensemble,
                           double frequency, double probe_laser_fwhm);

/// 1 - d_burned / d_unburned at the given frequency.
double hole_depth(const PopulationState& state, const EmitterEnsemble& ensemble, double frequency,
                  double probe_laser_fwhm);

/// Symmetric-exchange generator with nonzero eigenvalues -1/tau_fast and -1/tau_slow
/// and uniform stationary state.
RelaxationMatrix rate_matrix_from_timescales(double tau_fast, double tau_slow);

/// Applies exp(rates * t) to every class.
PopulationState relax(const PopulationState& state, const RelaxationMatrix& matrix, double t);

/// (t, relative hole depth) after relaxing the post-burn state for each t.
std::vector<std::pair<double, double>> hole_depth_trace(const PopulationState& state_after_burn,
                                                        const EmitterEnsemble& ensemble,
                                                        const RelaxationMatrix& matrix,
                                                        double probe_frequency,
                                                        const std::vector<double>& times,
                                                        double probe_laser_fwhm = 0.0);

}  // namespace reqmem::holeburn
