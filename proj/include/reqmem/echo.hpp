#pragma once

// Two- and three-pulse photon echoes from a finite ensemble of discrete emitters.
//
// Pulses are instantaneous rotations acting on emitters inside the excitation
// bandwidth 1 / pulse_duration. Homogeneous dephasing is a per-emitter stochastic
// phase: white frequency noise (Markovian) optionally combined with a sudden-jump
// spectral-diffusion process whose stationary distribution is a Lorentzian of
// FWHM gamma_sd / 2.

#include <cstdint>
#include <optional>
#include <vector>

#include "reqmem/core.hpp"
#include "reqmem/fit.hpp"
#include "reqmem/trace.hpp"

namespace reqmem::echo {

struct Dephasing {
  enum class Kind { markovian, sudden_jump };
  Kind kind = Kind::markovian;
  double t2 = 2.4e-6;       // markovian coherence time, s
  double gamma0 = 0.0;      // sudden_jump: homogeneous linewidth without diffusion, Hz
  double gamma_sd = 0.0;    // sudden_jump: spectral-diffusion width, Hz
  double jump_rate = 0.0;   // sudden_jump: jump rate, 1/s

  static Dephasing markovian(double t2);
  static Dephasing sudden_jump(double gamma0, double gamma_sd, double jump_rate);
};

struct DetectorGrid {
  double start = 0.0;
  double stop = 0.0;
  double bin_width = 0.0;
};

struct EchoConfig {
  std::size_t emitter_count = 100000;
  std::uint64_t seed = 1;
  double pulse_duration = 500e-9;
  double delay = 1e-6;  // tau
  double wait = 0.0;    // T_w, three-pulse only
  Dephasing dephasing = Dephasing::markovian(2.4e-6);
  /// Defaults to a window of +-min(3 pulse_duration, tau) around the echo with bin
  /// min(tau / 50, pulse_duration / 40), aligned so a sample falls on the echo time.
  std::optional<DetectorGrid> detector;
  /// Global detuning added to every emitter (frame shift), Hz.
  double frame_offset = 0.0;

  void validate(bool three_pulse) const;
  double echo_time(bool three_pulse) const;
  DetectorGrid resolved_detector(bool three_pulse) const;
};

struct EchoResult {
  TimeTrace trace;  // intensity, normalized so a perfectly rephased ensemble gives 1
  /// Integrated intensity over the main lobe, |t - t_echo| <= pulse_duration.
  double area = 0.0;
  double peak_time = 0.0;
};

/// I0 exp(-(4 tau / T_M)^x).
double mims_intensity(double tau, double i0, double phase_memory_time, double x);

EchoResult two_pulse_echo(const EchoConfig& config, const EmitterEnsemble& ensemble);
/// pi/2 pulses at 0, tau, tau + T_w; echo at 2 tau + T_w. The stored grating
/// scales the echo intensity by exp(-T_w / T1) and the field by 1/2.
EchoResult three_pulse_echo(const EchoConfig& config, const EmitterEnsemble& ensemble);

/// Gamma0 + (Gamma_sd / 2) (1 - exp(-R T_w)).
double effective_linewidth(double wait, double gamma0, double gamma_sd, double jump_rate);

/// Linewidth implied by a 1/e echo-intensity decay constant, 1 / (4 pi tau_decay).
double linewidth_from_decay(double decay_constant);

struct DecayRow {
  double delay = 0.0;
  double area = 0.0;
  double stderr_area = 0.0;
};

/// Mean echo area and its standard error over `replicates` independent
/// ensembles (seeds config.seed, config.seed + 1, ...) for each delay.
std::vector<DecayRow> echo_decay_dataset(const std::vector<double>& delays,
                                         const EchoConfig& config_template,
                                         const EmitterEnsemble& ensemble, bool three_pulse = false,
                                         std::size_t replicates = 3);

fit::Dataset to_dataset(const std::vector<DecayRow>& rows);

}  // namespace reqmem::echo
