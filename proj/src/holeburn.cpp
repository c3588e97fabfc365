#include "reqmem/holeburn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "reqmem/errors.hpp"
#include "reqmem/fft.hpp"
#include "reqmem/parallel.hpp"

namespace reqmem::holeburn {

using constants::pi;

namespace {

constexpr std::size_t kClassChunk = 4096;

struct Transition {
  int ground;
  int excited;
  double offset;    // transition frequency relative to the class detuning
  double strength;  // relative line strength
};

std::vector<Transition> transitions_of(const HyperfineStructure& hf) {
  const auto g = hf.ground_offsets();
  const auto e = hf.excited_offsets();
  std::vector<Transition> out;
  for (int gi = 0; gi < 3; ++gi)
    for (int ei = 0; ei < 3; ++ei) out.push_back({gi, ei, e[ei] - g[gi], hf.line_strength(gi, ei)});
  return out;
}

// Peak-normalized Lorentzian of FWHM `width` scaled by reference_width / width,
// i.e. pi reference_width / 2 times the unit-area Lorentzian.
double relative_response(double detuning, double width, double reference_width) {
  const double x = 2.0 * detuning / width;
  return (reference_width / width) / (1.0 + x * x);
}

Eigen::Matrix3d matrix_power(Eigen::Matrix3d base, std::uint64_t n) {
  Eigen::Matrix3d result = Eigen::Matrix3d::Identity();
  while (n > 0) {
    if (n & 1U) result = base * result;
    base = base * base;
    n >>= 1U;
  }
  return result;
}

std::array<double, 3> propagate_populations(const Eigen::Matrix3d& m, const std::array<double, 3>& p) {
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = m(i, 0) * p[0] + m(i, 1) * p[1] + m(i, 2) * p[2];
  // Clamp rounding excursions and renormalize to keep each class on the simplex.
  double sum = 0.0;
  for (double& v : out) {
    v = std::max(v, 0.0);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

double scale_to_line(const EmitterEnsemble& ensemble) {
  // Converts class weights (probability mass) to optical depth.
  return ensemble.peak_optical_depth * pi * ensemble.inhomogeneous_fwhm / 2.0;
}

}  // namespace

void PopulationState::validate() const {
  if (populations.size() != classes.size() || class_weights.size() != classes.size())
    throw InvalidParameter("PopulationState: sizes do not match class grid");
  for (std::size_t c = 0; c < populations.size(); ++c) {
    double sum = 0.0;
    for (double v : populations[c]) {
      if (v < 0.0 || v > 1.0) throw InvalidParameter("PopulationState: population outside [0, 1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw InvalidParameter("PopulationState: class " + std::to_string(c) + " does not sum to 1");
    if (class_weights[c] < 0.0) throw InvalidParameter("PopulationState: negative class weight");
  }
}

void BurnSchedule::validate() const {
  if (!(duration >= 0.0)) throw InvalidParameter("burn schedule: duration must be >= 0");
  if (!(laser_fwhm >= 0.0)) throw InvalidParameter("burn schedule: laser_fwhm must be >= 0");
  if (!(saturation_scale >= 0.0))
    throw InvalidParameter("burn schedule: saturation_scale must be >= 0");
  for (const auto& line : lines)
    if (!(line.relative_power >= 0.0) || !std::isfinite(line.frequency))
      throw InvalidParameter("burn schedule: pump powers must be >= 0");
}

BurnSchedule BurnSchedule::monochromatic(double frequency, double relative_power, double laser_fwhm,
                                         double duration, double saturation_scale) {
  BurnSchedule s;
  s.lines.push_back({frequency, relative_power});
  s.laser_fwhm = laser_fwhm;
  s.duration = duration;
  s.saturation_scale = saturation_scale;
  return s;
}

BurnSchedule BurnSchedule::from_spectral_density(const Spectrum& density, double laser_fwhm,
                                                 double duration, double saturation_scale) {
  if (density.unit != UnitTag::spectral_density)
    throw InvalidParameter("burn schedule: pump spectrum must be a spectral density");
  BurnSchedule s;
  const double width = density.grid.bin_width();
  for (std::size_t i = 0; i < density.size(); ++i)
    if (density.values[i] > 0.0) s.lines.push_back({density.grid.frequency(i), density.values[i] * width});
  s.laser_fwhm = laser_fwhm;
  s.duration = duration;
  s.saturation_scale = saturation_scale;
  return s;
}

void RelaxationMatrix::validate() const {
  const double scale = std::max(rates.cwiseAbs().maxCoeff(), 1e-300);
  for (int g = 0; g < 3; ++g) {
    if (std::abs(rates.col(g).sum()) > 1e-12 * scale)
      throw InvalidParameter("relaxation matrix: column " + std::to_string(g) + " does not sum to 0");
    for (int h = 0; h < 3; ++h)
      if (h != g && rates(h, g) < 0.0)
        throw InvalidParameter("relaxation matrix: negative off-diagonal rate");
  }
  Eigen::EigenSolver<Eigen::Matrix3d> solver(rates, false);
  for (int k = 0; k < 3; ++k)
    if (solver.eigenvalues()(k).real() > 1e-12 * scale)
      throw InvalidParameter("relaxation matrix: eigenvalue with positive real part");
}

FrequencyGrid class_grid_for(const FrequencyGrid& probe_grid, const HyperfineStructure& hyperfine,
                             double homogeneous_fwhm, std::size_t oversampling) {
  if (oversampling == 0) throw InvalidParameter("class_grid_for: oversampling must be >= 1");
  double min_offset = 0.0, max_offset = 0.0;
  for (const auto& t : transitions_of(hyperfine)) {
    min_offset = std::min(min_offset, t.offset);
    max_offset = std::max(max_offset, t.offset);
  }
  const double spacing = probe_grid.bin_width() / static_cast<double>(oversampling);
  const double margin = 0.1 * probe_grid.span() + 200.0 * homogeneous_fwhm;
  const auto left = static_cast<std::size_t>(std::ceil((max_offset + margin) / spacing));
  const auto right = static_cast<std::size_t>(std::ceil((margin - min_offset) / spacing));
  const std::size_t inner = (probe_grid.size() - 1) * oversampling + 1;
  const std::size_t count = left + inner + right;
  const double lowest = probe_grid.lowest() - static_cast<double>(left) * spacing;
  const double center = lowest + 0.5 * static_cast<double>(count - 1) * spacing;
  return FrequencyGrid::with_bin_width(center, spacing, count);
}

PopulationState initialize_thermal(const EmitterEnsemble& ensemble, const FrequencyGrid& class_grid) {
  ensemble.validate();
  PopulationState state{class_grid, {}, {}};
  const std::size_t n = class_grid.size();
  state.populations.assign(n, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  state.class_weights.resize(n);
  const double spacing = class_grid.bin_width();
  for (std::size_t c = 0; c < n; ++c)
    state.class_weights[c] =
        lorentzian(class_grid.frequency(c), 0.0, ensemble.inhomogeneous_fwhm) * spacing;
  return state;
}

PopulationState burn(const PopulationState& state, const EmitterEnsemble& ensemble,
                     const BurnSchedule& schedule, double time_step) {
  schedule.validate();
  ensemble.validate();
  if (schedule.duration == 0.0) return state;
  if (!(time_step > 0.0) || time_step > schedule.duration)
    throw InvalidParameter("burn: time_step must lie in (0, duration]");

  const auto transitions = transitions_of(ensemble.hyperfine);
  const double gamma_h = ensemble.homogeneous_fwhm();
  const double width = gamma_h + schedule.laser_fwhm;
  const double t1 = ensemble.lifetime;
  const Eigen::Matrix3d& branching = ensemble.hyperfine.branching;
  const auto steps = static_cast<std::uint64_t>(std::floor(schedule.duration / time_step * (1.0 + 1e-12)));
  const double remainder = std::max(0.0, schedule.duration - static_cast<double>(steps) * time_step);

  PopulationState out = state;
  const std::size_t n = state.size();
  const std::size_t chunks = (n + kClassChunk - 1) / kClassChunk;
  parallel_chunks(chunks, default_threads(), [&](std::size_t chunk) {
    const std::size_t begin = chunk * kClassChunk;
    const std::size_t end = std::min(n, begin + kClassChunk);
    for (std::size_t c = begin; c < end; ++c) {
      const double delta = state.classes.frequency(c);
      Eigen::Matrix3d generator = Eigen::Matrix3d::Zero();
      for (const auto& tr : transitions) {
        if (tr.strength == 0.0) continue;
        double response = 0.0;
        for (const auto& line : schedule.lines)
          response += line.relative_power *
                      relative_response(line.frequency - delta - tr.offset, width, gamma_h);
        const double bare = schedule.saturation_scale * tr.strength * response;
        const double rate = bare / (1.0 + bare * t1);
        for (int g2 = 0; g2 < 3; ++g2) {
          const double flow = rate * branching(tr.excited, g2);
          if (g2 == tr.ground) continue;
          generator(g2, tr.ground) += flow;
          generator(tr.ground, tr.ground) -= flow;
        }
      }
      const double outflow = -generator.diagonal().minCoeff();
      if (outflow * time_step >= 0.5) {
        std::ostringstream msg;
        msg << "burn: class " << c << " (detuning " << delta << " Hz) transfers "
            << outflow * time_step << " of a level per step (limit 0.5); reduce time_step";
        throw NumericError(msg.str());
      }
      if (outflow == 0.0) continue;
      Eigen::Matrix3d propagator = matrix_power((generator * time_step).exp(), steps);
      if (remainder > 0.0) propagator = (generator * remainder).exp() * propagator;
      out.populations[c] = propagate_populations(propagator, state.populations[c]);
    }
  });
  return out;
}

Spectrum probe_absorption(const PopulationState& state, const EmitterEnsemble& ensemble,
                          const FrequencyGrid& grid, double probe_laser_fwhm) {
  const std::size_t n = state.size();
  const double spacing = state.classes.bin_width();
  const std::size_t size = next_power_of_two(2 * n);
  const double width = ensemble.homogeneous_fwhm() + probe_laser_fwhm;
  const auto transitions = transitions_of(ensemble.hyperfine);

  // Change relative to the thermal state, convolved with each transition's
  // shifted Lorentzian in the Fourier domain.
  std::array<ComplexVector, 3> level;
  for (int g = 0; g < 3; ++g) {
    level[g].assign(size, 0.0);
    for (std::size_t c = 0; c < n; ++c)
      level[g][c] = state.class_weights[c] * (state.populations[c][g] - 1.0 / 3.0);
    fft_forward(level[g]);
  }
  ComplexVector total(size, 0.0);
  const double total_time = 1.0 / (static_cast<double>(size) * spacing);
  for (std::size_t j = 0; j < size; ++j) {
    const double t = (j <= size / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(size)) *
                     total_time;
    const double envelope = std::exp(-pi * width * std::abs(t)) / spacing;
    std::complex<double> acc = 0.0;
    for (const auto& tr : transitions) {
      if (tr.strength == 0.0) continue;
      const double phase = -2.0 * pi * tr.offset * t;
      acc += level[tr.ground][j] * tr.strength * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    total[j] = acc * envelope;
  }
  fft_inverse(total);

  const double scale = scale_to_line(ensemble);
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double nu = grid.frequency(i);
    const double idx = state.classes.index_of(nu);
    double change = 0.0;
    if (idx >= 0.0 && idx <= static_cast<double>(n - 1)) {
      const auto k = std::min(static_cast<std::size_t>(idx), n - 2);
      const double frac = idx - static_cast<double>(k);
      change = (1.0 - frac) * total[k].real() + frac * total[k + 1].real();
    }
    values[i] = std::max(0.0, optical_depth_at_detuning(ensemble, nu) + scale * change);
  }
  return Spectrum(grid, std::move(values), UnitTag::optical_depth);
}

double probe_optical_depth(const PopulationState& state, const EmitterEnsemble& ensemble,
                           double frequency, double probe_laser_fwhm) {
  const double width = ensemble.homogeneous_fwhm() + probe_laser_fwhm;
  const auto transitions = transitions_of(ensemble.hyperfine);
  double change = 0.0;
  for (std::size_t c = 0; c < state.size(); ++c) {
    const double delta = state.classes.frequency(c);
    double per_class = 0.0;
    for (const auto& tr : transitions)
      per_class += (state.populations[c][tr.ground] - 1.0 / 3.0) * tr.strength *
                   lorentzian(frequency, delta + tr.offset, width);
    change += state.class_weights[c] * per_class;
  }
  return std::max(0.0, optical_depth_at_detuning(ensemble, frequency) + scale_to_line(ensemble) * change);
}

double hole_depth(const PopulationState& state, const EmitterEnsemble& ensemble, double frequency,
                  double probe_laser_fwhm) {
  const double unburned = optical_depth_at_detuning(ensemble, frequency);
  if (unburned <= 0.0) return 0.0;
  return 1.0 - probe_optical_depth(state, ensemble, frequency, probe_laser_fwhm) / unburned;
}

RelaxationMatrix rate_matrix_from_timescales(double tau_fast, double tau_slow) {
  if (!(tau_fast > 0.0) || !(tau_slow >= tau_fast))
    throw InvalidParameter("rate_matrix_from_timescales: need 0 < tau_fast <= tau_slow");
  // Orthonormal modes orthogonal to (1, 1, 1).
  const Eigen::Vector3d fast_mode = Eigen::Vector3d(1.0, -1.0, 0.0) / std::sqrt(2.0);
  const Eigen::Vector3d slow_mode = Eigen::Vector3d(1.0, 1.0, -2.0) / std::sqrt(6.0);
  RelaxationMatrix m;
  m.rates = -(fast_mode * fast_mode.transpose()) / tau_fast -
            (slow_mode * slow_mode.transpose()) / tau_slow;
  return m;
}

PopulationState relax(const PopulationState& state, const RelaxationMatrix& matrix, double t) {
  if (!(t >= 0.0)) throw InvalidParameter("relax: t must be >= 0");
  if (t == 0.0) return state;
  const Eigen::Matrix3d propagator = (matrix.rates * t).exp();
  PopulationState out = state;
  for (std::size_t c = 0; c < state.size(); ++c) out.populations[c] = propagate_populations(propagator, state.populations[c]);
  return out;
}

std::vector<std::pair<double, double>> hole_depth_trace(const PopulationState& state_after_burn,
                                                        const EmitterEnsemble& ensemble,
                                                        const RelaxationMatrix& matrix,
                                                        double probe_frequency,
                                                        const std::vector<double>& times,
                                                        double probe_laser_fwhm) {
  matrix.validate();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0)) throw InvalidParameter("hole_depth_trace: times must be >= 0");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw InvalidParameter("hole_depth_trace: times must be increasing");
  }
  std::vector<std::pair<double, double>> out(times.size());
  parallel_chunks(times.size(), default_threads(), [&](std::size_t i) {
    const auto relaxed = relax(state_after_burn, matrix, times[i]);
    out[i] = {times[i], hole_depth(relaxed, ensemble, probe_frequency, probe_laser_fwhm)};
  });
  return out;
}

}  // namespace reqmem::holeburn
