#include "reqmem/echo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "reqmem/errors.hpp"
#include "reqmem/parallel.hpp"

namespace reqmem::echo {

using constants::pi;

namespace {

constexpr std::size_t kEmitterChunk = 8192;

// Piecewise-constant spectral-diffusion offset with Poisson jump times.
class JumpProcess {
public:
  JumpProcess(RandomStream& rng, double width, double rate) : rng_(rng), width_(width), rate_(rate) {
    value_ = width_ > 0.0 ? rng_.lorentzian(width_) : 0.0;
    next_jump_ = rate_ > 0.0 ? rng_.exponential(rate_) : INFINITY;
  }

  /// Integral of the offset over [now, until]; advances the process to `until`.
  double integrate(double until) {
    double integral = 0.0;
    while (next_jump_ < until) {
      integral += value_ * (next_jump_ - now_);
      now_ = next_jump_;
      value_ = rng_.lorentzian(width_);
      next_jump_ = now_ + rng_.exponential(rate_);
    }
    integral += value_ * (until - now_);
    now_ = until;
    return integral;
  }

private:
  RandomStream& rng_;
  double width_;
  double rate_;
  double value_ = 0.0;
  double now_ = 0.0;
  double next_jump_ = 0.0;
};

EchoResult simulate(const EchoConfig& config, const EmitterEnsemble& ensemble, bool three_pulse) {
  ensemble.validate();
  config.validate(three_pulse);
  const DetectorGrid grid = config.resolved_detector(three_pulse);
  const double dt = grid.bin_width;
  const auto bins = static_cast<std::size_t>(std::floor((grid.stop - grid.start) / dt + 1e-9)) + 1;
  const double tau = config.delay;
  const double last_pulse = three_pulse ? tau + config.wait : tau;
  const double t_echo = config.echo_time(three_pulse);
  const double rephase_before_window = grid.start - last_pulse;

  const Dephasing& deph = config.dephasing;
  double white_t2 = 0.0;  // 0 disables white noise
  double sd_width = 0.0, sd_rate = 0.0;
  if (deph.kind == Dephasing::Kind::markovian) {
    white_t2 = deph.t2;
  } else {
    if (deph.gamma0 > 0.0) white_t2 = 1.0 / (pi * deph.gamma0);
    sd_width = 0.5 * deph.gamma_sd;
    sd_rate = deph.jump_rate;
  }
  const bool diffusion = sd_width > 0.0 && sd_rate > 0.0;
  const bool static_offsets = sd_width > 0.0 && sd_rate == 0.0;

  const double theta_max = std::atan(1.0 / (config.pulse_duration * ensemble.inhomogeneous_fwhm));
  const std::size_t n = config.emitter_count;
  const std::size_t chunks = (n + kEmitterChunk - 1) / kEmitterChunk;
  std::vector<std::vector<std::complex<double>>> partial(chunks);

  parallel_chunks(chunks, default_threads(), [&](std::size_t chunk) {
    RandomStream rng(config.seed, chunk);
    std::vector<std::complex<double>> field(bins, 0.0);
    const std::size_t begin = chunk * kEmitterChunk;
    const std::size_t end = std::min(n, begin + kEmitterChunk);
    const double white_step = white_t2 > 0.0 ? std::sqrt(2.0 * dt / white_t2) : 0.0;
    for (std::size_t j = begin; j < end; ++j) {
      const double detuning =
          0.5 * ensemble.inhomogeneous_fwhm * std::tan(theta_max * (2.0 * rng.uniform() - 1.0)) +
          config.frame_offset;
      double phase = 0.0;
      if (white_t2 > 0.0)
        phase += std::sqrt(2.0 * (tau + rephase_before_window) / white_t2) * rng.normal();
      std::optional<JumpProcess> process;
      if (diffusion) {
        process.emplace(rng, sd_width, sd_rate);
        double acc = -process->integrate(tau);
        process->integrate(last_pulse);
        acc += process->integrate(grid.start);
        phase += 2.0 * pi * acc;
      }
      const double static_offset = static_offsets ? rng.lorentzian(sd_width) : 0.0;
      double t = grid.start;
      for (std::size_t k = 0; k < bins; ++k) {
        if (k > 0) {
          t = grid.start + static_cast<double>(k) * dt;
          if (white_step > 0.0) phase += white_step * rng.normal();
          if (process) phase += 2.0 * pi * process->integrate(t);
        }
        // Static offsets rephase exactly in the three-pulse geometry only when held
        // through the wait; accumulated mismatch is (t - t_echo) like the detuning.
        const double total = -2.0 * pi * (detuning + static_offset) * (t - t_echo) + phase;
        field[k] += std::complex<double>(std::cos(total), std::sin(total));
      }
    }
    partial[chunk] = std::move(field);
  });

  const double amplitude = three_pulse ? 0.5 * std::exp(-config.wait / (2.0 * ensemble.lifetime)) : 1.0;
  EchoResult result;
  result.trace.t0 = grid.start;
  result.trace.dt = dt;
  result.trace.kind = TraceKind::intensity;
  result.trace.samples.assign(bins, 0.0);
  std::size_t peak = 0;
  double best = -1.0;
  for (std::size_t k = 0; k < bins; ++k) {
    std::complex<double> sum = 0.0;
    for (const auto& f : partial) sum += f[k];
    const double intensity = std::norm(amplitude * sum / static_cast<double>(n));
    result.trace.samples[k] = intensity;
    if (std::abs(result.trace.time(k) - t_echo) <= config.pulse_duration * (1.0 + 1e-9))
      result.area += intensity * dt;
    if (intensity > best) {
      best = intensity;
      peak = k;
    }
  }
  result.peak_time = result.trace.time(peak);
  return result;
}

}  // namespace

Dephasing Dephasing::markovian(double t2) {
  Dephasing d;
  d.kind = Kind::markovian;
  d.t2 = t2;
  return d;
}

Dephasing Dephasing::sudden_jump(double gamma0, double gamma_sd, double jump_rate) {
  Dephasing d;
  d.kind = Kind::sudden_jump;
  d.gamma0 = gamma0;
  d.gamma_sd = gamma_sd;
  d.jump_rate = jump_rate;
  return d;
}

double EchoConfig::echo_time(bool three_pulse) const {
  return 2.0 * delay + (three_pulse ? wait : 0.0);
}

DetectorGrid EchoConfig::resolved_detector(bool three_pulse) const {
  if (detector) return *detector;
  const double t_echo = echo_time(three_pulse);
  const double bin = std::min(delay / 50.0, pulse_duration / 40.0);
  const double half = std::min(3.0 * pulse_duration, delay);
  const double steps = std::floor(half / bin + 1e-9);
  return {t_echo - steps * bin, t_echo + steps * bin, bin};
}

void EchoConfig::validate(bool three_pulse) const {
  if (emitter_count < 1000) throw ConfigError("echo: emitter_count must be >= 1000");
  if (!(pulse_duration > 0.0)) throw ConfigError("echo: pulse_duration must be positive");
  if (!(delay > pulse_duration)) throw ConfigError("echo: delay must exceed pulse_duration");
  if (three_pulse && !(wait >= 0.0)) throw ConfigError("echo: wait must be >= 0");
  if (dephasing.kind == Dephasing::Kind::markovian) {
    if (!(dephasing.t2 > 0.0)) throw ConfigError("echo: markovian T2 must be positive");
  } else if (!(dephasing.gamma0 >= 0.0) || !(dephasing.gamma_sd >= 0.0) ||
             !(dephasing.jump_rate >= 0.0)) {
    throw ConfigError("echo: sudden-jump parameters must be >= 0");
  }
  const DetectorGrid grid = resolved_detector(three_pulse);
  if (!(grid.bin_width > 0.0) || !(grid.stop > grid.start))
    throw ConfigError("echo: detector grid must have positive bin width and extent");
  if (grid.bin_width > delay / 50.0) throw ConfigError("echo: detector bin must be <= tau / 50");
  if (grid.bin_width > pulse_duration / 2.0)
    throw ConfigError("echo: detector bin does not resolve the excitation bandwidth");
  const double last_pulse = three_pulse ? delay + wait : delay;
  if (grid.start < last_pulse - 1e-6 * grid.bin_width) throw ConfigError("echo: detector window starts before the last pulse");
  const double t_echo = echo_time(three_pulse);
  if (t_echo - pulse_duration < grid.start || t_echo + pulse_duration > grid.stop)
    throw ConfigError("echo: detector window must cover the echo time +- pulse_duration");
}

double mims_intensity(double tau, double i0, double phase_memory_time, double x) {
  if (!(x >= 0.5 && x <= 3.0)) throw InvalidParameter("mims_intensity: x must lie in [0.5, 3]");
  if (!(phase_memory_time > 0.0)) throw InvalidParameter("mims_intensity: T_M must be positive");
  if (!(tau >= 0.0)) throw InvalidParameter("mims_intensity: tau must be >= 0");
  return i0 * std::exp(-std::pow(4.0 * tau / phase_memory_time, x));
}

EchoResult two_pulse_echo(const EchoConfig& config, const EmitterEnsemble& ensemble) {
  return simulate(config, ensemble, false);
}

EchoResult three_pulse_echo(const EchoConfig& config, const EmitterEnsemble& ensemble) {
  return simulate(config, ensemble, true);
}

double effective_linewidth(double wait, double gamma0, double gamma_sd, double jump_rate) {
  if (!(wait >= 0.0) || !(gamma0 >= 0.0) || !(gamma_sd >= 0.0) || !(jump_rate >= 0.0))
    throw InvalidParameter("effective_linewidth: parameters must be >= 0");
  return gamma0 + 0.5 * gamma_sd * (1.0 - std::exp(-jump_rate * wait));
}

double linewidth_from_decay(double decay_constant) {
  return homogeneous_linewidth(coherence_time_from_decay(decay_constant));
}

std::vector<DecayRow> echo_decay_dataset(const std::vector<double>& delays,
                                         const EchoConfig& config_template,
                                         const EmitterEnsemble& ensemble, bool three_pulse,
                                         std::size_t replicates) {
  if (delays.empty()) throw InvalidParameter("echo_decay_dataset: no delays");
  if (replicates == 0) throw InvalidParameter("echo_decay_dataset: replicates must be >= 1");
  for (std::size_t i = 1; i < delays.size(); ++i)
    if (!(delays[i] > delays[i - 1]))
      throw InvalidParameter("echo_decay_dataset: delays must be increasing");
  std::vector<DecayRow> rows;
  rows.reserve(delays.size());
  for (double delay : delays) {
    std::vector<double> areas;
    for (std::size_t r = 0; r < replicates; ++r) {
      EchoConfig cfg = config_template;
      cfg.delay = delay;
      cfg.seed = config_template.seed + r;
      cfg.detector.reset();
      if (config_template.detector) cfg.detector = config_template.detector;
      areas.push_back(simulate(cfg, ensemble, three_pulse).area);
    }
    double mean = 0.0;
    for (double a : areas) mean += a;
    mean /= static_cast<double>(areas.size());
    double var = 0.0;
    for (double a : areas) var += (a - mean) * (a - mean);
    const double count = static_cast<double>(areas.size());
    const double stderr_area = areas.size() > 1 ? std::sqrt(var / (count - 1.0) / count) : 0.0;
    rows.push_back({delay, mean, stderr_area});
  }
  return rows;
}

fit::Dataset to_dataset(const std::vector<DecayRow>& rows) {
  fit::Dataset d;
  std::vector<double> errs;
  bool all_positive = true;
  for (const auto& row : rows) {
    d.x.push_back(row.delay);
    d.y.push_back(row.area);
    errs.push_back(row.stderr_area);
    all_positive = all_positive && row.stderr_area > 0.0;
  }
  if (all_positive) d.y_err = std::move(errs);
  return d;
}

}  // namespace reqmem::echo
