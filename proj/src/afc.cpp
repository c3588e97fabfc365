#include "reqmem/afc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "reqmem/errors.hpp"
#include "reqmem/fft.hpp"
#include "reqmem/parallel.hpp"

namespace reqmem::afc {

using constants::pi;

namespace {

const double kLn2 = std::log(2.0);

double tooth_value(ToothShape shape, double offset, double fwhm) {
  switch (shape) {
    case ToothShape::gaussian:
      return std::exp(-4.0 * kLn2 * offset * offset / (fwhm * fwhm));
    case ToothShape::lorentzian: {
      const double x = 2.0 * offset / fwhm;
      return 1.0 / (1.0 + x * x);
    }
    case ToothShape::square:
      return std::abs(offset) < 0.5 * fwhm ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace

std::string_view to_string(ToothShape shape) {
  switch (shape) {
    case ToothShape::gaussian: return "gaussian";
    case ToothShape::lorentzian: return "lorentzian";
    case ToothShape::square: return "square";
  }
  return "gaussian";
}

ToothShape parse_tooth_shape(std::string_view text) {
  if (text == "gaussian") return ToothShape::gaussian;
  if (text == "lorentzian") return ToothShape::lorentzian;
  if (text == "square") return ToothShape::square;
  throw ConfigError("unknown tooth shape '" + std::string(text) + "'");
}

std::string_view to_string(PulseShape shape) {
  return shape == PulseShape::gaussian ? "gaussian" : "square";
}

PulseShape parse_pulse_shape(std::string_view text) {
  if (text == "gaussian") return PulseShape::gaussian;
  if (text == "square") return PulseShape::square;
  throw ConfigError("unknown pulse shape '" + std::string(text) + "'");
}

void CombSpec::validate() const {
  if (!(tooth_spacing > 0.0)) throw ConfigError("comb: tooth_spacing must be positive");
  if (!(tooth_fwhm > 0.0 && tooth_fwhm < tooth_spacing))
    throw ConfigError("comb: tooth_fwhm must lie in (0, tooth_spacing)");
  if (!(bandwidth >= 3.0 * tooth_spacing)) throw ConfigError("comb: bandwidth must be >= 3 tooth spacings");
  if (!(peak_depth >= 0.0) || !(background_depth >= 0.0))
    throw ConfigError("comb: depths must be >= 0");
  if (!std::isfinite(center)) throw ConfigError("comb: center must be finite");
}

void InputPulse::validate() const {
  if (!(duration > 0.0)) throw ConfigError("input pulse: duration must be positive");
  if (!std::isfinite(carrier)) throw ConfigError("input pulse: carrier must be finite");
}

double InputPulse::bandwidth() const {
  return shape == PulseShape::gaussian ? 2.0 * kLn2 / (pi * duration) : 0.885892941378 / duration;
}

double InputPulse::start_time() const {
  return shape == PulseShape::gaussian ? -2.5 * duration : -0.5 * duration;
}

double InputPulse::peak_intensity() const {
  if (shape == PulseShape::square) return 1.0 / duration;
  return 1.0 / (duration * std::sqrt(pi / (4.0 * kLn2)));
}

Spectrum comb_profile(const CombSpec& spec, const FrequencyGrid& grid) {
  spec.validate();
  if (spec.tooth_fwhm < 8.0 * grid.bin_width()) {
    std::ostringstream msg;
    msg << "comb: grid bin " << grid.bin_width() << " Hz resolves the " << spec.tooth_fwhm
        << " Hz tooth with fewer than 8 bins";
    throw ConfigError(msg.str());
  }
  const double max_tooth = std::floor(0.5 * spec.bandwidth / spec.tooth_spacing + 1e-9);
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double rel = grid.frequency(i) - spec.center;
    const double k = std::clamp(std::round(rel / spec.tooth_spacing), -max_tooth, max_tooth);
    double sum = tooth_value(spec.shape, rel - k * spec.tooth_spacing, spec.tooth_fwhm);
    // Gaussian tails from the neighbours matter at low finesse; they are below
    // 1e-5 of the peak at the tooth centers, so the maximum stays at d.
    if (spec.shape == ToothShape::gaussian)
      for (double j : {k - 2.0, k - 1.0, k + 1.0, k + 2.0})
        if (std::abs(j) <= max_tooth) sum += tooth_value(spec.shape, rel - j * spec.tooth_spacing, spec.tooth_fwhm);
    values[i] = spec.background_depth + spec.peak_depth * sum;
  }
  return Spectrum(grid, std::move(values), UnitTag::optical_depth);
}

double analytic_efficiency(double optical_depth, double finesse) {
  if (!(optical_depth >= 0.0)) throw InvalidParameter("analytic_efficiency: d must be >= 0");
  if (!(finesse > 0.0)) throw InvalidParameter("analytic_efficiency: F must be positive");
  const double eff = optical_depth / finesse;
  return eff * eff * std::exp(-eff) * std::exp(-7.0 / (finesse * finesse));
}

std::vector<double> kramers_kronig_phase(const Spectrum& optical_depth) {
  const std::size_t n = optical_depth.size();
  const auto& d = optical_depth.values;
  if (n < 2) throw ConfigError("kramers_kronig_phase: need at least 2 bins");
  // The straight line through the two edge values is removed before padding so
  // the padded sequence is continuous; its own dispersion is neglected.
  const double first = d.front();
  const double ramp = (d.back() - d.front()) / static_cast<double>(n - 1);
  auto background = [&](std::size_t i) { return first + ramp * static_cast<double>(i); };
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::abs(d[i] - background(i)));
  std::vector<double> phase(n, 0.0);
  if (peak == 0.0) return phase;
  // A feature cut by the grid edge shows up as a steep edge slope.
  const double edge_slope = std::max(std::abs(d[1] - d[0]), std::abs(d[n - 1] - d[n - 2]));
  if (edge_slope * static_cast<double>(n - 1) > 0.05 * peak)
    throw ConfigError(
        "kramers_kronig_phase: absorption is still changing at the grid edges; widen the grid");

  const std::size_t size = next_power_of_two(8 * n);
  ComplexVector work(size, 0.0);
  for (std::size_t i = 0; i < n; ++i) work[i] = -0.5 * (d[i] - background(i));
  fft_inverse(work);
  for (std::size_t j = 1; j < size / 2; ++j) work[j] *= 2.0;
  for (std::size_t j = size / 2 + 1; j < size; ++j) work[j] = 0.0;
  fft_forward(work);
  for (std::size_t i = 0; i < n; ++i) phase[i] = -work[i].imag();
  return phase;
}

TimeTrace propagate(const InputPulse& pulse, const Spectrum& optical_depth, const TimeWindow& window) {
  pulse.validate();
  const FrequencyGrid& grid = optical_depth.grid;
  const std::size_t n = grid.size();
  if (n < 4 || n % 2 != 0) throw ConfigError("propagate: grid size must be even and >= 4");
  if (grid.span() < 4.0 * pulse.bandwidth()) {
    std::ostringstream msg;
    msg << "propagate: grid span " << grid.span() << " Hz is below 4x the pulse bandwidth "
        << pulse.bandwidth() << " Hz";
    throw ConfigError(msg.str());
  }
  const double dt = 1.0 / grid.span();
  const double period = static_cast<double>(n) * dt;
  if (!(window.stop > window.start)) throw ConfigError("propagate: empty time window");
  if (window.start < -0.5 * period || window.stop > 0.5 * period) {
    std::ostringstream msg;
    msg << "propagate: time window [" << window.start << ", " << window.stop
        << "] s exceeds half the transform period " << 0.5 * period << " s; refine the grid";
    throw ConfigError(msg.str());
  }

  const double reference = grid.frequency(n / 2);
  const double shift = pulse.carrier - reference;
  ComplexVector field(n);
  double energy = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double t = (j < n / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(n)) * dt;
    double envelope = 0.0;
    if (pulse.shape == PulseShape::gaussian)
      envelope = std::exp(-2.0 * kLn2 * (t / pulse.duration) * (t / pulse.duration));
    else
      envelope = std::abs(t) <= 0.5 * pulse.duration ? 1.0 : 0.0;
    field[j] = envelope * std::polar(1.0, 2.0 * pi * shift * t);
    energy += envelope * envelope * dt;
  }
  if (!(energy > 0.0)) throw ConfigError("propagate: pulse is not resolved by the time step");
  const double norm = 1.0 / std::sqrt(energy);
  for (auto& v : field) v *= norm;

  const auto phase = kramers_kronig_phase(optical_depth);
  fft_forward(field);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = k < n / 2 ? k + n / 2 : k - n / 2;
    field[k] *= std::polar(std::exp(-0.5 * optical_depth.values[i]), -phase[i]);
  }
  fft_inverse(field);

  const auto first = static_cast<long long>(std::ceil(window.start / dt - 1e-9));
  const auto last = static_cast<long long>(std::floor(window.stop / dt + 1e-9));
  TimeTrace out;
  out.kind = TraceKind::field;
  out.dt = dt;
  out.t0 = static_cast<double>(first) * dt;
  const auto count = static_cast<long long>(n);
  for (long long j = first; j <= last; ++j) out.samples.push_back(field[static_cast<std::size_t>(((j % count) + count) % count)]);
  return out;
}

std::vector<EchoMetric> echo_metrics(const TimeTrace& trace, double tooth_spacing, int n_echoes,
                                     double input_peak_intensity) {
  if (!(tooth_spacing > 0.0)) throw InvalidParameter("echo_metrics: tooth spacing must be positive");
  if (n_echoes < 1) throw InvalidParameter("echo_metrics: need at least one echo");
  if (trace.size() < 3) throw ConfigError("echo_metrics: trace too short");
  const double t_last = trace.time(trace.size() - 1);
  std::vector<EchoMetric> out;
  for (int k = 1; k <= n_echoes; ++k) {
    const double center = k / tooth_spacing;
    const double half = 0.25 / tooth_spacing;
    if (center - half < trace.t0 || center + half > t_last) {
      std::ostringstream msg;
      msg << "echo_metrics: window of echo " << k << " overruns the trace [" << trace.t0 << ", " << t_last
          << "] s";
      throw ConfigError(msg.str());
    }
    EchoMetric m;
    m.order = k;
    m.efficiency = trace.energy(center - half, center + half);
    std::size_t best = 0;
    double best_value = -1.0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const double t = trace.time(i);
      if (t < center - half || t >= center + half) continue;
      if (trace.intensity(i) > best_value) {
        best_value = trace.intensity(i);
        best = i;
      }
    }
    m.arrival_time = trace.time(best);
    if (best > 0 && best + 1 < trace.size()) {
      const double a = trace.intensity(best - 1), b = trace.intensity(best), c = trace.intensity(best + 1);
      const double denom = a - 2.0 * b + c;
      if (denom < 0.0) m.arrival_time += 0.5 * (a - c) / denom * trace.dt;
    }
    if (input_peak_intensity > 0.0) m.peak_ratio = best_value / input_peak_intensity;
    out.push_back(m);
  }
  return out;
}

StorageResult retrieve_from_spectrum(const Spectrum& optical_depth, double tooth_spacing,
                                     const InputPulse& pulse, int n_echoes) {
  if (!(tooth_spacing > 0.0)) throw ConfigError("retrieve: tooth spacing must be positive");
  const TimeWindow window{2.0 * pulse.start_time(), (n_echoes + 0.5) / tooth_spacing};
  StorageResult result{optical_depth, propagate(pulse, optical_depth, window), {}, 0.0};
  result.echoes = echo_metrics(result.output, tooth_spacing, n_echoes, pulse.peak_intensity());
  const double total = result.output.total_energy();
  if (total > 0.0)
    result.pre_input_fraction = result.output.energy(window.start, pulse.start_time()) / total;
  return result;
}

StorageResult store_and_retrieve(const CombSpec& spec, const InputPulse& pulse,
                                 const FrequencyGrid& grid, int n_echoes) {
  return retrieve_from_spectrum(comb_profile(spec, grid), spec.tooth_spacing, pulse, n_echoes);
}

std::vector<SweepPoint> efficiency_sweep(const std::vector<double>& finesses,
                                         const std::vector<double>& depths, const CombSpec& base,
                                         const InputPulse& pulse, const FrequencyGrid& grid) {
  std::vector<SweepPoint> points;
  for (double f : finesses)
    for (double d : depths) {
      if (!(f > 1.0)) throw ConfigError("efficiency_sweep: finesse must exceed 1");
      points.push_back({f, d, 0.0, analytic_efficiency(d, f), 0.0});
    }
  parallel_chunks(points.size(), default_threads(), [&](std::size_t i) {
    CombSpec spec = base;
    spec.shape = ToothShape::gaussian;
    spec.tooth_fwhm = spec.tooth_spacing / points[i].finesse;
    spec.peak_depth = points[i].optical_depth;
    const auto result = store_and_retrieve(spec, pulse, grid, 1);
    points[i].numeric_efficiency = result.echoes.front().efficiency;
    points[i].arrival_time = result.echoes.front().arrival_time;
  });
  return points;
}

std::vector<holeburn::PumpLine> pulse_train_lines(double pulse_width, double period, double center) {
  if (!(pulse_width > 0.0) || !(period > pulse_width))
    throw ConfigError("pulse train: need 0 < pulse_width < period");
  const double duty = pulse_width / period;
  const auto max_order = static_cast<long long>(std::ceil(period / pulse_width)) - 1;
  std::vector<holeburn::PumpLine> lines;
  for (long long m = -max_order; m <= max_order; ++m) {
    const double x = pi * static_cast<double>(m) * duty;
    const double sinc = m == 0 ? 1.0 : std::sin(x) / x;
    const double power = duty * duty * sinc * sinc;
    if (power > 0.0) lines.push_back({center + static_cast<double>(m) / period, power});
  }
  return lines;
}

Spectrum comb_from_pulse_train(const PulseTrainBurn& train, const EmitterEnsemble& ensemble,
                               const FrequencyGrid& probe_grid) {
  if (train.pulse_count == 0) throw ConfigError("pulse train: pulse_count must be >= 1");
  holeburn::BurnSchedule schedule;
  schedule.lines = pulse_train_lines(train.pulse_width, train.period);
  schedule.laser_fwhm = train.laser_fwhm;
  schedule.duration = static_cast<double>(train.pulse_count) * train.period;
  schedule.saturation_scale = train.saturation_scale;
  const auto classes = holeburn::class_grid_for(probe_grid, ensemble.hyperfine, ensemble.homogeneous_fwhm());
  const auto thermal = holeburn::initialize_thermal(ensemble, classes);
  const auto burned =
      holeburn::burn(thermal, ensemble, schedule, std::min(train.time_step, schedule.duration));
  return holeburn::probe_absorption(burned, ensemble, probe_grid, train.probe_laser_fwhm);
}

Spectrum resample(const Spectrum& spectrum, const FrequencyGrid& grid) {
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = spectrum.at(grid.frequency(i));
  return Spectrum(grid, std::move(values), spectrum.unit);
}

}  // namespace reqmem::afc
