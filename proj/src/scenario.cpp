#include "reqmem/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "reqmem/afc.hpp"
#include "reqmem/core.hpp"
#include "reqmem/echo.hpp"
#include "reqmem/errors.hpp"
#include "reqmem/fit.hpp"
#include "reqmem/holeburn.hpp"
#include "reqmem/io.hpp"
#include "reqmem/parallel.hpp"

#ifndef REQMEM_VERSION
#define REQMEM_VERSION "0.0.0"
#endif

namespace reqmem::scenario {

using nlohmann::json;
using constants::pi;

// Resonant pump rate per unit relative power; sets how fast a 100 kHz-wide
// monochromatic burn saturates (deep hole within ~1 s).
constexpr double kDefaultSaturationScale = 300.0;

namespace {

struct KindInfo {
  Kind kind;
  const char* name;
  const char* block;
};

constexpr KindInfo kKinds[] = {
    {Kind::ple, "ple", "ple"},
    {Kind::lifetime, "lifetime", "lifetime"},
    {Kind::holeburn, "holeburn", "holeburn"},
    {Kind::hole_decay, "hole_decay", "hole_decay"},
    {Kind::echo2, "echo2", "echo"},
    {Kind::echo3, "echo3", "echo"},
    {Kind::afc, "afc", "afc"},
    {Kind::afc_sweep, "afc_sweep", "afc_sweep"},
    {Kind::fit, "fit", "fit"},
};

const KindInfo& info(Kind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k;
  return kKinds[0];
}

[[noreturn]] void field_error(const std::string& path, const std::string& message) {
  throw ConfigError("config field '" + path + "': " + message);
}

// Typed access to one JSON object; remembers which keys were read so that
// unknown keys can be rejected.
class Fields {
public:
  Fields(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) field_error(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return object_.contains(key) && !object_.at(key).is_null();
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = object_.at(key);
    if (!v.is_number()) field_error(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) field_error(at(key), "must be finite");
    return d;
  }
  double positive(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v > 0.0)) field_error(at(key), "must be positive");
    return v;
  }
  double non_negative(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v >= 0.0)) field_error(at(key), "must be >= 0");
    return v;
  }
  std::optional<double> optional_number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return number(key, 0.0);
  }
  std::size_t count(const std::string& key, std::size_t fallback, std::size_t minimum) {
    if (!has(key)) return fallback;
    const json& v = object_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(minimum))
      field_error(at(key), "expected an integer >= " + std::to_string(minimum));
    return v.get<std::size_t>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = object_.at(key);
    if (!v.is_string()) field_error(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const json& v = object_.at(key);
    if (!v.is_array() || v.empty()) field_error(at(key), "expected a non-empty array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) field_error(at(key), "expected a non-empty array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  /// Explicit null, used to switch optional behavior off.
  bool is_null(const std::string& key) {
    seen_.insert(key);
    return object_.contains(key) && object_.at(key).is_null();
  }
  const json* child(const std::string& key) {
    if (!has(key)) return nullptr;
    return &object_.at(key);
  }
  void finish() const {
    for (const auto& [key, value] : object_.items())
      if (!seen_.count(key)) field_error(at(key), "unknown field");
  }

private:
  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

std::vector<double> logspace(double a, double b, std::size_t n) {
  auto out = linspace(std::log(a), std::log(b), n);
  for (double& v : out) v = std::exp(v);
  return out;
}

std::vector<double> increasing(std::vector<double> v, const std::string& path, bool allow_zero) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0 || (allow_zero && v[i] == 0.0))) field_error(path, "values must be positive");
    if (i > 0 && !(v[i] > v[i - 1])) field_error(path, "values must be strictly increasing");
  }
  return v;
}

// ---------------------------------------------------------------- blocks

struct EnsembleBlock {
  EmitterEnsemble ensemble;
  double wavelength = 579.914e-9;
  LocalFieldCorrection local_field = LocalFieldCorrection::virtual_cavity;
};

struct PleBlock {
  std::size_t bins = 4096;
  double span_factor = 6.0;
  std::size_t segments = 7;
  double overlap = 0.25;
  double gain_min = 0.5;
  double gain_max = 1.5;
  double peak_counts = 2e4;
  double background_counts = 0.0;
};

struct LifetimeBlock {
  double window = 10e-3;
  std::size_t bins = 2000;
  double peak_counts = 2e4;
  double background_counts = 2.0;
  double fit_start = 30e-6;
};

struct BurnBlock {
  std::size_t bins = 8192;
  double span = 20e6;
  double burn_frequency = 0.0;
  double relative_power = 1.0;
  double burn_laser_fwhm = 100e3;
  double probe_laser_fwhm = 100e3;
  double duration = 0.1;
  double saturation_scale = kDefaultSaturationScale;
  double time_step = 5e-5;
  std::size_t oversampling = 1;
  double fit_span = 6e6;
  std::vector<double> depth_durations{0.01, 0.03, 0.1, 0.3, 1.0};
};

struct DecayBlock {
  BurnBlock burn;
  double tau_fast = 1.9;
  double tau_slow = 300.0;
  std::optional<Eigen::Matrix3d> rates;
  std::vector<double> times = logspace(0.05, 3000.0, 40);
};

struct EchoBlock {
  std::size_t emitters = 100000;
  double pulse_duration = 0.4e-6;
  std::vector<double> delays = linspace(0.5e-6, 2.0e-6, 16);
  std::size_t replicates = 3;
  echo::Dephasing dephasing;
  std::optional<double> fixed_x = 1.0;
  std::vector<double> waits{0.0, 100e-6};
  double frame_offset = 0.0;
};

struct AfcBlock {
  bool pulse_train = false;
  std::size_t bins = 1u << 18;
  double span = 64e6;
  afc::CombSpec comb;
  afc::InputPulse pulse;
  int echoes = 3;
  afc::PulseTrainBurn train{120e-9, 600e-9, 1000000, 100e3, kDefaultSaturationScale, 5e-5, 0.0};
  std::size_t probe_bins = 8192;
  double probe_span = 20e6;
};

struct SweepBlock {
  std::size_t bins = 1u << 18;
  double span = 64e6;
  afc::CombSpec comb;
  afc::InputPulse pulse;
  std::vector<double> finesses{2.0, 3.0, 5.0, 10.0};
  std::vector<double> depths{0.5, 1.0, 2.0, 3.0};
};

struct FitBlock {
  std::filesystem::path data;
  std::string model;
  std::optional<double> fixed_x;
};

struct Plan {
  Kind kind = Kind::ple;
  std::optional<std::uint64_t> seed;
  EnsembleBlock ensemble;
  PleBlock ple;
  LifetimeBlock lifetime;
  BurnBlock burn;
  DecayBlock decay;
  EchoBlock echo;
  AfcBlock afc;
  SweepBlock sweep;
  FitBlock fit;
};

EnsembleBlock parse_ensemble(const json& node) {
  Fields f(node, "ensemble");
  EnsembleBlock b;
  const std::string preset = f.text("preset", "powder");
  if (preset == "powder") b.ensemble = EmitterEnsemble::powder();
  else if (preset == "single_crystal") b.ensemble = EmitterEnsemble::single_crystal();
  else field_error(f.at("preset"), "expected 'powder' or 'single_crystal'");
  auto& e = b.ensemble;
  e.center_frequency = f.positive("center_frequency_hz", e.center_frequency);
  e.inhomogeneous_fwhm = f.positive("inhomogeneous_fwhm_hz", e.inhomogeneous_fwhm);
  e.lifetime = f.positive("lifetime_s", e.lifetime);
  e.coherence_time = f.positive("coherence_time_s", e.coherence_time);
  e.oscillator_strength = f.positive("oscillator_strength", e.oscillator_strength);
  e.peak_optical_depth = f.non_negative("peak_optical_depth", e.peak_optical_depth);
  e.refractive_index = f.positive("refractive_index", e.refractive_index);
  e.number_density = f.positive("number_density_m3", e.number_density);
  b.wavelength = f.positive("wavelength_m", b.wavelength);
  try {
    b.local_field = parse_local_field(f.text("local_field", "virtual_cavity"));
  } catch (const std::exception& ex) {
    field_error(f.at("local_field"), ex.what());
  }
  if (const json* hf = f.child("hyperfine")) {
    Fields h(*hf, f.at("hyperfine"));
    auto pair = [&](const std::string& key, std::array<double, 2>& out) {
      const auto v = h.numbers(key, {out[0], out[1]});
      if (v.size() != 2) field_error(h.at(key), "expected 2 values");
      out = {v[0], v[1]};
    };
    pair("ground_splittings_hz", e.hyperfine.ground_splittings);
    pair("excited_splittings_hz", e.hyperfine.excited_splittings);
    if (const json* br = h.child("branching")) {
      if (!br->is_array() || br->size() != 3) field_error(h.at("branching"), "expected a 3x3 array");
      for (int r = 0; r < 3; ++r) {
        const json& row = (*br)[static_cast<std::size_t>(r)];
        if (!row.is_array() || row.size() != 3) field_error(h.at("branching"), "expected a 3x3 array");
        for (int c = 0; c < 3; ++c) {
          if (!row[static_cast<std::size_t>(c)].is_number())
            field_error(h.at("branching"), "expected numbers");
          e.hyperfine.branching(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
      }
    }
    h.finish();
  }
  f.finish();
  try {
    e.validate();
  } catch (const std::exception& ex) {
    field_error("ensemble", ex.what());
  }
  return b;
}

PleBlock parse_ple(Fields& f) {
  PleBlock b;
  b.bins = f.count("bins", b.bins, 64);
  b.span_factor = f.positive("span_factor", b.span_factor);
  b.segments = f.count("segments", b.segments, 1);
  b.overlap = f.number("overlap_fraction", b.overlap);
  if (!(b.overlap > 0.0 && b.overlap < 0.9)) field_error(f.at("overlap_fraction"), "must lie in (0, 0.9)");
  b.gain_min = f.positive("gain_min", b.gain_min);
  b.gain_max = f.positive("gain_max", b.gain_max);
  if (b.gain_max < b.gain_min) field_error(f.at("gain_max"), "must be >= gain_min");
  b.peak_counts = f.positive("peak_counts", b.peak_counts);
  b.background_counts = f.non_negative("background_counts", b.background_counts);
  const double length = static_cast<double>(b.bins) /
                        (static_cast<double>(b.segments) * (1.0 - b.overlap) + b.overlap);
  if (b.segments > 1 && length * b.overlap < 3.0)
    field_error(f.at("overlap_fraction"), "overlaps must contain at least 3 bins");
  return b;
}

LifetimeBlock parse_lifetime(Fields& f) {
  LifetimeBlock b;
  b.window = f.positive("window_s", b.window);
  b.bins = f.count("bins", b.bins, 16);
  b.peak_counts = f.positive("peak_counts", b.peak_counts);
  b.background_counts = f.non_negative("background_counts", b.background_counts);
  b.fit_start = f.non_negative("fit_start_s", b.fit_start);
  if (b.fit_start >= 0.5 * b.window) field_error(f.at("fit_start_s"), "must be below half the window");
  return b;
}

void parse_burn(Fields& f, BurnBlock& b, bool with_durations) {
  b.bins = f.count("bins", b.bins, 64);
  b.span = f.positive("span_hz", b.span);
  b.burn_frequency = f.number("burn_frequency_hz", b.burn_frequency);
  b.relative_power = f.non_negative("relative_power", b.relative_power);
  b.burn_laser_fwhm = f.non_negative("burn_laser_fwhm_hz", b.burn_laser_fwhm);
  b.probe_laser_fwhm = f.non_negative("probe_laser_fwhm_hz", b.probe_laser_fwhm);
  b.duration = f.positive("duration_s", b.duration);
  b.saturation_scale = f.non_negative("saturation_scale", b.saturation_scale);
  b.time_step = f.positive("time_step_s", b.time_step);
  b.oversampling = f.count("oversampling", b.oversampling, 1);
  b.fit_span = f.positive("fit_span_hz", b.fit_span);
  if (b.fit_span > b.span) field_error(f.at("fit_span_hz"), "must not exceed span_hz");
  if (std::abs(b.burn_frequency) > 0.5 * (b.span - b.fit_span))
    field_error(f.at("burn_frequency_hz"), "fit window around the burn leaves the grid");
  if (with_durations)
    b.depth_durations = increasing(f.numbers("depth_durations_s", b.depth_durations), f.at("depth_durations_s"), false);
}

DecayBlock parse_decay(Fields& f) {
  DecayBlock b;
  parse_burn(f, b.burn, false);
  b.tau_fast = f.positive("tau_fast_s", b.tau_fast);
  b.tau_slow = f.positive("tau_slow_s", b.tau_slow);
  if (b.tau_slow < b.tau_fast) field_error(f.at("tau_slow_s"), "must be >= tau_fast_s");
  if (const json* r = f.child("rates")) {
    if (!r->is_array() || r->size() != 3) field_error(f.at("rates"), "expected a 3x3 array");
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i) {
      const json& row = (*r)[static_cast<std::size_t>(i)];
      if (!row.is_array() || row.size() != 3) field_error(f.at("rates"), "expected a 3x3 array");
      for (int j = 0; j < 3; ++j) {
        if (!row[static_cast<std::size_t>(j)].is_number()) field_error(f.at("rates"), "expected numbers");
        m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
      }
    }
    try {
      holeburn::RelaxationMatrix{m}.validate();
    } catch (const std::exception& ex) {
      field_error(f.at("rates"), ex.what());
    }
    b.rates = m;
  }
  b.times = increasing(f.numbers("times_s", b.times), f.at("times_s"), true);
  if (b.times.size() < 6) field_error(f.at("times_s"), "need at least 6 times for a biexponential fit");
  return b;
}

std::vector<double> parse_axis(Fields& f, const std::string& key, std::vector<double> fallback) {
  if (const json* node = f.child(key); node && node->is_object()) {
    Fields a(*node, f.at(key));
    const double start = a.positive("start", 0.0);
    const double stop = a.positive("stop", 0.0);
    const std::size_t n = a.count("count", 0, 2);
    a.finish();
    if (!(stop > start)) field_error(f.at(key), "stop must exceed start");
    return linspace(start, stop, n);
  }
  return f.numbers(key, std::move(fallback));
}

EchoBlock parse_echo(Fields& f, const EmitterEnsemble& ensemble, bool three_pulse) {
  EchoBlock b;
  b.dephasing = echo::Dephasing::markovian(ensemble.coherence_time);
  b.emitters = f.count("emitters", b.emitters, 1000);
  b.pulse_duration = f.positive("pulse_duration_s", b.pulse_duration);
  b.delays = increasing(parse_axis(f, "delays_s", b.delays), f.at("delays_s"), false);
  if (b.delays.size() < 4) field_error(f.at("delays_s"), "need at least 4 delays");
  b.replicates = f.count("replicates", b.replicates, 1);
  b.frame_offset = f.number("frame_offset_hz", b.frame_offset);
  if (f.has("fixed_x")) {
    b.fixed_x = f.number("fixed_x", 1.0);
    if (!(*b.fixed_x >= 0.5 && *b.fixed_x <= 3.0)) field_error(f.at("fixed_x"), "must lie in [0.5, 3]");
  } else if (f.is_null("fixed_x")) {
    b.fixed_x.reset();
  }
  if (const json* node = f.child("dephasing")) {
    Fields d(*node, f.at("dephasing"));
    const std::string model = d.text("model", "markovian");
    if (model == "markovian") {
      b.dephasing = echo::Dephasing::markovian(d.positive("t2_s", ensemble.coherence_time));
    } else if (model == "sudden_jump") {
      b.dephasing = echo::Dephasing::sudden_jump(d.non_negative("gamma0_hz", ensemble.homogeneous_fwhm()),
                                                 d.non_negative("gamma_sd_hz", 0.0),
                                                 d.non_negative("jump_rate_hz", 0.0));
    } else {
      field_error(d.at("model"), "expected 'markovian' or 'sudden_jump'");
    }
    d.finish();
  }
  if (three_pulse) b.waits = increasing(f.numbers("waits_s", b.waits), f.at("waits_s"), true);
  else if (f.has("waits_s")) field_error(f.at("waits_s"), "only valid for kind echo3");
  echo::EchoConfig cfg;
  cfg.emitter_count = b.emitters;
  cfg.pulse_duration = b.pulse_duration;
  cfg.dephasing = b.dephasing;
  for (double delay : b.delays) {
    cfg.delay = delay;
    for (double wait : three_pulse ? b.waits : std::vector<double>{0.0}) {
      cfg.wait = wait;
      try {
        cfg.validate(three_pulse);
      } catch (const ConfigError& ex) {
        field_error(f.at("delays_s"), ex.what());
      }
    }
  }
  return b;
}

void parse_comb(Fields& f, afc::CombSpec& comb) {
  if (f.has("storage_time_s") && f.has("tooth_spacing_hz"))
    field_error(f.at("storage_time_s"), "give either storage_time_s or tooth_spacing_hz");
  if (f.has("storage_time_s")) comb.tooth_spacing = 1.0 / f.positive("storage_time_s", 0.0);
  comb.tooth_spacing = f.positive("tooth_spacing_hz", comb.tooth_spacing);
  if (f.has("finesse") && f.has("tooth_fwhm_hz"))
    field_error(f.at("finesse"), "give either finesse or tooth_fwhm_hz");
  comb.tooth_fwhm = comb.tooth_spacing / 2.32;
  if (f.has("finesse")) comb.tooth_fwhm = comb.tooth_spacing / f.positive("finesse", 2.32);
  comb.tooth_fwhm = f.positive("tooth_fwhm_hz", comb.tooth_fwhm);
  try {
    comb.shape = afc::parse_tooth_shape(f.text("shape", "gaussian"));
  } catch (const ConfigError& ex) {
    field_error(f.at("shape"), ex.what());
  }
  comb.peak_depth = f.non_negative("peak_depth", comb.peak_depth);
  comb.background_depth = f.non_negative("background_depth", comb.background_depth);
  comb.bandwidth = f.positive("bandwidth_hz", comb.bandwidth);
  comb.center = f.number("center_hz", comb.center);
}

void parse_pulse(Fields& f, afc::InputPulse& pulse) {
  try {
    pulse.shape = afc::parse_pulse_shape(f.text("shape", "gaussian"));
  } catch (const ConfigError& ex) {
    field_error(f.at("shape"), ex.what());
  }
  pulse.duration = f.positive("duration_s", pulse.duration);
  pulse.carrier = f.number("carrier_hz", pulse.carrier);
}

void check_afc_grid(const std::string& path, std::size_t bins, double span, const afc::InputPulse& pulse,
                    double tooth_spacing, int echoes) {
  if (bins % 2 != 0) field_error(path + ".bins", "must be even");
  if (span < 4.0 * pulse.bandwidth()) field_error(path + ".span_hz", "must be at least 4x the pulse bandwidth");
  const double half_period = 0.5 * static_cast<double>(bins) / span;
  if ((echoes + 0.5) / tooth_spacing > half_period || -5.0 * pulse.duration < -half_period)
    field_error(path + ".bins", "time window of the echoes exceeds half the transform period");
}

AfcBlock parse_afc(Fields& f) {
  AfcBlock b;
  const std::string mode = f.text("mode", "spec");
  if (mode != "spec" && mode != "pulse_train") field_error(f.at("mode"), "expected 'spec' or 'pulse_train'");
  b.pulse_train = mode == "pulse_train";
  b.bins = f.count("bins", b.bins, 64);
  b.span = f.positive("span_hz", b.span);
  b.echoes = static_cast<int>(f.count("echoes", 3, 1));
  if (const json* node = f.child("pulse")) {
    Fields p(*node, f.at("pulse"));
    parse_pulse(p, b.pulse);
    p.finish();
  }
  if (const json* node = f.child("comb")) {
    if (b.pulse_train) field_error(f.at("comb"), "not used in pulse_train mode");
    Fields c(*node, f.at("comb"));
    parse_comb(c, b.comb);
    c.finish();
  }
  if (const json* node = f.child("pulse_train")) {
    if (!b.pulse_train) field_error(f.at("pulse_train"), "only used in pulse_train mode");
    Fields t(*node, f.at("pulse_train"));
    b.train.pulse_width = t.positive("pulse_width_s", b.train.pulse_width);
    b.train.period = t.positive("period_s", b.train.period);
    b.train.pulse_count = t.count("pulse_count", b.train.pulse_count, 1);
    b.train.laser_fwhm = t.non_negative("laser_fwhm_hz", b.train.laser_fwhm);
    b.train.saturation_scale = t.non_negative("saturation_scale", b.train.saturation_scale);
    b.train.time_step = t.positive("time_step_s", b.train.time_step);
    b.train.probe_laser_fwhm = t.non_negative("probe_laser_fwhm_hz", 0.0);
    b.probe_bins = t.count("probe_bins", b.probe_bins, 64);
    b.probe_span = t.positive("probe_span_hz", b.probe_span);
    t.finish();
  }
  if (b.pulse_train && !(b.train.period > b.train.pulse_width))
    field_error(f.at("pulse_train.period_s"), "must exceed pulse_width_s");
  try {
    b.pulse.validate();
    if (!b.pulse_train) {
      b.comb.validate();
      if (b.comb.tooth_fwhm < 8.0 * b.span / static_cast<double>(b.bins))
        field_error(f.at("bins"), "grid resolves a comb tooth with fewer than 8 bins");
    }
  } catch (const ConfigError& ex) {
    field_error(f.at(b.pulse_train ? "pulse" : "comb"), ex.what());
  }
  const double spacing = b.pulse_train ? 1.0 / b.train.period : b.comb.tooth_spacing;
  check_afc_grid("afc", b.bins, b.span, b.pulse, spacing, b.echoes);
  return b;
}

SweepBlock parse_sweep(Fields& f) {
  SweepBlock b;
  b.bins = f.count("bins", b.bins, 64);
  b.span = f.positive("span_hz", b.span);
  if (const json* node = f.child("pulse")) {
    Fields p(*node, f.at("pulse"));
    parse_pulse(p, b.pulse);
    p.finish();
  }
  if (const json* node = f.child("comb")) {
    Fields c(*node, f.at("comb"));
    parse_comb(c, b.comb);
    c.finish();
  }
  b.finesses = increasing(f.numbers("finesses", b.finesses), f.at("finesses"), false);
  b.depths = increasing(f.numbers("depths", b.depths), f.at("depths"), false);
  for (double fin : b.finesses) {
    if (!(fin > 1.0)) field_error(f.at("finesses"), "values must exceed 1");
    if (b.comb.tooth_spacing / fin < 8.0 * b.span / static_cast<double>(b.bins))
      field_error(f.at("bins"), "grid resolves the narrowest tooth with fewer than 8 bins");
  }
  check_afc_grid("afc_sweep", b.bins, b.span, b.pulse, b.comb.tooth_spacing, 1);
  return b;
}

FitBlock parse_fit(Fields& f, const std::filesystem::path& base_dir) {
  FitBlock b;
  if (!f.has("data")) field_error(f.at("data"), "required");
  b.data = f.text("data", "");
  if (b.data.is_relative()) b.data = base_dir / b.data;
  b.model = f.text("model", "lorentzian");
  if (b.model != "lorentzian" && b.model != "exponential" && b.model != "biexponential" && b.model != "mims")
    field_error(f.at("model"), "expected lorentzian, exponential, biexponential or mims");
  b.fixed_x = f.optional_number("fixed_x");
  if (b.fixed_x && b.model != "mims") field_error(f.at("fixed_x"), "only valid for model mims");
  return b;
}

Plan build_plan(const json& doc, const std::filesystem::path& base_dir) {
  Fields top(doc, "");
  Plan plan;
  if (!top.has("kind")) field_error("kind", "required");
  const std::string kind_name = top.text("kind", "");
  const KindInfo* kind = nullptr;
  for (const auto& k : kKinds)
    if (kind_name == k.name) kind = &k;
  if (!kind)
    field_error("kind", "unknown kind '" + kind_name +
                            "' (expected ple, lifetime, holeburn, hole_decay, echo2, echo3, afc, afc_sweep, fit)");
  plan.kind = kind->kind;

  if (top.has("seed")) {
    const json& s = doc.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      field_error("seed", "expected a non-negative 64-bit integer");
    plan.seed = s.get<std::uint64_t>();
  }
  if (is_stochastic(plan.kind) && !plan.seed)
    field_error("seed", std::string("required for stochastic kind '") + kind->name + "'");
  top.text("description", "");

  if (!top.has("ensemble")) throw ConfigError("config is missing the 'ensemble' block");
  plan.ensemble = parse_ensemble(doc.at("ensemble"));

  std::vector<std::string> blocks;
  for (const char* name : {"ple", "lifetime", "holeburn", "hole_decay", "echo", "afc", "afc_sweep", "fit"})
    if (top.has(name)) blocks.emplace_back(name);
  if (blocks.empty() || blocks.size() > 1 || blocks.front() != kind->block) {
    std::string found;
    for (const auto& b : blocks) found += (found.empty() ? "" : ", ") + b;
    throw ConfigError(std::string("kind '") + kind->name + "' requires exactly one kind block '" + kind->block +
                      "' (found: " + (found.empty() ? "none" : found) + ")");
  }
  Fields block(doc.at(kind->block), kind->block);
  switch (plan.kind) {
    case Kind::ple: plan.ple = parse_ple(block); break;
    case Kind::lifetime: plan.lifetime = parse_lifetime(block); break;
    case Kind::holeburn: parse_burn(block, plan.burn, true); break;
    case Kind::hole_decay: plan.decay = parse_decay(block); break;
    case Kind::echo2: plan.echo = parse_echo(block, plan.ensemble.ensemble, false); break;
    case Kind::echo3: plan.echo = parse_echo(block, plan.ensemble.ensemble, true); break;
    case Kind::afc: plan.afc = parse_afc(block); break;
    case Kind::afc_sweep: plan.sweep = parse_sweep(block); break;
    case Kind::fit: plan.fit = parse_fit(block, base_dir); break;
  }
  block.finish();
  top.finish();
  return plan;
}

// ---------------------------------------------------------------- execution

struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  json derived = json::object();

  void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
  void add_json(std::string name, const json& doc) { add(std::move(name), doc.dump(2) + "\n"); }
};

fit::Dataset dataset_from(const std::vector<double>& x, const std::vector<double>& y) {
  fit::Dataset d;
  d.x = x;
  d.y = y;
  return d;
}

void run_ple(const Plan& plan, Outputs& out) {
  const auto& e = plan.ensemble.ensemble;
  const auto& b = plan.ple;
  const FrequencyGrid grid(0.0, b.span_factor * e.inhomogeneous_fwhm, b.bins);
  const auto profile = optical_depth_profile(e, grid);
  const double peak = e.peak_optical_depth > 0.0 ? e.peak_optical_depth : 1.0;
  RandomStream rng(*plan.seed, 0);

  const double length = static_cast<double>(b.bins) /
                        (static_cast<double>(b.segments) * (1.0 - b.overlap) + b.overlap);
  const double step = length * (1.0 - b.overlap);
  std::vector<fit::Dataset> scans;
  io::CsvTable scan_csv({"segment", "frequency_hz", "counts"});
  for (std::size_t s = 0; s < b.segments; ++s) {
    const auto begin = static_cast<std::size_t>(std::floor(static_cast<double>(s) * step));
    const auto end = s + 1 == b.segments ? b.bins
                                         : std::min(b.bins, static_cast<std::size_t>(std::ceil(static_cast<double>(s) * step + length)));
    const double gain = b.gain_min + (b.gain_max - b.gain_min) * rng.uniform();
    fit::Dataset scan;
    scan.y_err.emplace();
    for (std::size_t i = begin; i < end; ++i) {
      const double mean = gain * b.peak_counts * profile.values[i] / peak + b.background_counts;
      const auto value = static_cast<double>(rng.poisson(mean));
      scan.x.push_back(grid.frequency(i));
      scan.y.push_back(value);
      scan.y_err->push_back(std::sqrt(std::max(value, 1.0)));
      scan_csv.add_row({static_cast<double>(s), e.center_frequency + grid.frequency(i), value});
    }
    scans.push_back(std::move(scan));
  }
  const auto stitched = fit::stitch_scans(scans);
  const auto result = fit::fit_lorentzian(stitched.merged);

  io::CsvTable merged({"frequency_hz", "value", "unit_tag"});
  for (std::size_t i = 0; i < stitched.merged.size(); ++i)
    merged.add_row_with_tag({e.center_frequency + stitched.merged.x[i], stitched.merged.y[i]},
                            std::string(to_string(UnitTag::normalized_counts)));
  json fit_doc = io::fit_result_json(result);
  fit_doc["stitch_gains"] = stitched.gains;
  fit_doc["frequency_reference_hz"] = e.center_frequency;
  out.add("ple_scans.csv", scan_csv.str());
  out.add("ple_stitched.csv", merged.str());
  out.add_json("ple_fit.json", fit_doc);
  out.derived["ple_fwhm_hz"] = result.value("fwhm");
  out.derived["ple_fwhm_err_hz"] = result.uncertainty("fwhm");
  out.derived["ple_center_hz"] = e.center_frequency + result.value("center");
  out.derived["ple_fit_converged"] = result.converged;
}

void run_lifetime(const Plan& plan, Outputs& out) {
  const auto& e = plan.ensemble.ensemble;
  const auto& b = plan.lifetime;
  RandomStream rng(*plan.seed, 0);
  const double dt = b.window / static_cast<double>(b.bins);
  io::CsvTable trace({"time_s", "counts"});
  fit::Dataset data;
  data.y_err.emplace();
  for (std::size_t i = 0; i < b.bins; ++i) {
    const double t = (static_cast<double>(i) + 0.5) * dt;
    const double mean = b.peak_counts * std::exp(-t / e.lifetime) + b.background_counts;
    const auto counts = static_cast<double>(rng.poisson(mean));
    trace.add_row({t, counts});
    if (t >= b.fit_start) {
      data.x.push_back(t);
      data.y.push_back(counts);
      data.y_err->push_back(std::sqrt(std::max(counts, 1.0)));
    }
  }
  const auto result = fit::fit_exponential(data);
  out.add("lifetime_trace.csv", trace.str());
  out.add_json("lifetime_fit.json", io::fit_result_json(result));
  const double t1 = result.value("tau");
  out.derived["lifetime_fit_s"] = t1;
  out.derived["lifetime_fit_err_s"] = result.uncertainty("tau");
  out.derived["lifetime_fit_converged"] = result.converged;
  if (t1 > 0.0)
    out.derived["implied_branching_ratio_fitted_lifetime"] =
        implied_branching_ratio(e.oscillator_strength, t1, plan.ensemble.wavelength, e.refractive_index,
                                plan.ensemble.local_field);
}

struct BurnSetup {
  FrequencyGrid probe;
  holeburn::PopulationState thermal;
};

BurnSetup burn_setup(const EmitterEnsemble& e, const BurnBlock& b) {
  const FrequencyGrid probe(0.0, b.span, b.bins);
  const auto classes = holeburn::class_grid_for(probe, e.hyperfine, e.homogeneous_fwhm(), b.oversampling);
  return {probe, holeburn::initialize_thermal(e, classes)};
}

holeburn::PopulationState burn_for(const BurnSetup& setup, const EmitterEnsemble& e, const BurnBlock& b,
                                   double duration) {
  const auto schedule = holeburn::BurnSchedule::monochromatic(b.burn_frequency, b.relative_power,
                                                              b.burn_laser_fwhm, duration, b.saturation_scale);
  return holeburn::burn(setup.thermal, e, schedule, std::min(b.time_step, duration));
}

void run_holeburn(const Plan& plan, Outputs& out) {
  const auto& e = plan.ensemble.ensemble;
  const auto& b = plan.burn;
  const auto setup = burn_setup(e, b);
  const auto burned = burn_for(setup, e, b, b.duration);
  const auto spectrum = holeburn::probe_absorption(burned, e, setup.probe, b.probe_laser_fwhm);

  io::CsvTable hole({"frequency_hz", "optical_depth"});
  fit::Dataset window;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double nu = setup.probe.frequency(i);
    hole.add_row({nu, spectrum.values[i]});
    if (std::abs(nu - b.burn_frequency) <= 0.5 * b.fit_span) {
      window.x.push_back(nu);
      window.y.push_back(spectrum.values[i]);
    }
  }
  const auto result = fit::fit_lorentzian(window);

  io::CsvTable depth({"duration_s", "hole_depth_rel", "transmission_burned", "transmission_unburned"});
  const double unburned = optical_depth_at_detuning(e, b.burn_frequency);
  double max_depth = 0.0;
  for (double duration : b.depth_durations) {
    const auto state = burn_for(setup, e, b, duration);
    const double d = holeburn::probe_optical_depth(state, e, b.burn_frequency, b.probe_laser_fwhm);
    const double rel = unburned > 0.0 ? 1.0 - d / unburned : 0.0;
    max_depth = std::max(max_depth, rel);
    depth.add_row({duration, rel, std::exp(-d), std::exp(-unburned)});
  }
  const double d_now = holeburn::probe_optical_depth(burned, e, b.burn_frequency, b.probe_laser_fwhm);
  json fit_doc = io::fit_result_json(result);
  fit_doc["frequency_reference_hz"] = e.center_frequency;
  out.add("hole_spectrum.csv", hole.str());
  out.add_json("hole_fit.json", fit_doc);
  out.add("hole_depth_vs_duration.csv", depth.str());
  out.derived["hole_fwhm_hz"] = result.value("fwhm");
  out.derived["hole_fwhm_err_hz"] = result.uncertainty("fwhm");
  out.derived["hole_fit_converged"] = result.converged;
  out.derived["hole_depth_rel"] = unburned > 0.0 ? 1.0 - d_now / unburned : 0.0;
  out.derived["hole_depth_max_rel"] = max_depth;
  out.derived["hole_fwhm_weak_limit_hz"] = 2.0 * e.homogeneous_fwhm() + b.burn_laser_fwhm + b.probe_laser_fwhm;
}

void run_hole_decay(const Plan& plan, Outputs& out) {
  const auto& e = plan.ensemble.ensemble;
  const auto& b = plan.decay;
  const auto setup = burn_setup(e, b.burn);
  const auto burned = burn_for(setup, e, b.burn, b.burn.duration);
  const holeburn::RelaxationMatrix matrix =
      b.rates ? holeburn::RelaxationMatrix{*b.rates} : holeburn::rate_matrix_from_timescales(b.tau_fast, b.tau_slow);
  const auto trace =
      holeburn::hole_depth_trace(burned, e, matrix, b.burn.burn_frequency, b.times, b.burn.probe_laser_fwhm);
  io::CsvTable csv({"time_s", "hole_depth_rel"});
  std::vector<double> x, y;
  for (const auto& [t, depth] : trace) {
    csv.add_row({t, depth});
    x.push_back(t);
    y.push_back(depth);
  }
  const auto result = fit::fit_biexponential(dataset_from(x, y));
  out.add("hole_decay.csv", csv.str());
  out.add_json("hole_decay_fit.json", io::fit_result_json(result));
  out.derived["hole_decay_tau_fast_s"] = result.value("tau1");
  out.derived["hole_decay_tau_fast_err_s"] = result.uncertainty("tau1");
  out.derived["hole_decay_tau_slow_s"] = result.value("tau2");
  out.derived["hole_decay_tau_slow_err_s"] = result.uncertainty("tau2");
  out.derived["hole_decay_fit_converged"] = result.converged;
  out.derived["hole_depth_initial_rel"] = trace.front().second;
}

echo::EchoConfig echo_template(const Plan& plan) {
  echo::EchoConfig cfg;
  cfg.emitter_count = plan.echo.emitters;
  cfg.seed = *plan.seed;
  cfg.pulse_duration = plan.echo.pulse_duration;
  cfg.dephasing = plan.echo.dephasing;
  cfg.frame_offset = plan.echo.frame_offset;
  return cfg;
}

void run_echo2(const Plan& plan, Outputs& out) {
  const auto& e = plan.ensemble.ensemble;
  const auto& b = plan.echo;
  auto cfg = echo_template(plan);
  const auto rows = echo::echo_decay_dataset(b.delays, cfg, e, false, b.replicates);
  const auto result = fit::fit_mims(echo::to_dataset(rows), b.fixed_x);
  io::CsvTable decay({"tau_s", "area", "stderr"});
  for (const auto& r : rows) decay.add_row({r.delay, r.area, r.stderr_area});
  cfg.delay = b.delays.front();
  const auto trace = echo::two_pulse_echo(cfg, e);
  out.add("echo_decay.csv", decay.str());
  out.add_json("echo_fit.json", io::fit_result_json(result));
  out.add("echo_trace.csv", io::trace_csv(trace.trace));
  const double tm = result.value("t_m");
  out.derived["echo_phase_memory_time_s"] = tm;
  out.derived["echo_phase_memory_time_err_s"] = result.uncertainty("t_m");
  out.derived["echo_tau_decay_s"] = tm / 4.0;
  out.derived["echo_mims_x"] = result.value("x");
  out.derived["echo_gamma_h_hz"] = tm > 0.0 ? homogeneous_linewidth(tm) : 0.0;
  out.derived["echo_fit_converged"] = result.converged;
}

void run_echo3(const Plan& plan, Outputs& out) {
  const auto& e = plan.ensemble.ensemble;
  const auto& b = plan.echo;
  auto cfg = echo_template(plan);
  io::CsvTable decay({"wait_s", "tau_s", "area", "stderr"});
  io::CsvTable widths({"wait_s", "gamma_eff_hz", "gamma_eff_err_hz", "gamma_model_hz"});
  json fits = json::array();
  std::vector<double> gammas, errors;
  for (double wait : b.waits) {
    cfg.wait = wait;
    const auto rows = echo::echo_decay_dataset(b.delays, cfg, e, true, b.replicates);
    for (const auto& r : rows) decay.add_row({wait, r.delay, r.area, r.stderr_area});
    const auto result = fit::fit_mims(echo::to_dataset(rows), b.fixed_x);
    const double tm = result.value("t_m");
    const double gamma = tm > 0.0 ? homogeneous_linewidth(tm) : 0.0;
    const double gamma_err = tm > 0.0 ? gamma * result.uncertainty("t_m") / tm : 0.0;
    const double model = b.dephasing.kind == echo::Dephasing::Kind::markovian
                             ? homogeneous_linewidth(b.dephasing.t2)
                             : echo::effective_linewidth(wait, b.dephasing.gamma0, b.dephasing.gamma_sd,
                                                         b.dephasing.jump_rate);
    widths.add_row({wait, gamma, gamma_err, model});
    json doc = io::fit_result_json(result);
    doc["wait_s"] = wait;
    fits.push_back(doc);
    gammas.push_back(gamma);
    errors.push_back(gamma_err);
  }
  out.add("stimulated_decay.csv", decay.str());
  out.add("stimulated_linewidth.csv", widths.str());
  out.add_json("stimulated_fits.json", fits);
  out.derived["stimulated_waits_s"] = b.waits;
  out.derived["stimulated_gamma_eff_hz"] = gammas;
  out.derived["stimulated_gamma_eff_err_hz"] = errors;
}

json echo_metrics_json(const std::vector<afc::EchoMetric>& echoes) {
  json arr = json::array();
  for (const auto& m : echoes)
    arr.push_back({{"order", m.order},
                   {"arrival_time_s", m.arrival_time},
                   {"efficiency", m.efficiency},
                   {"peak_ratio", m.peak_ratio}});
  return arr;
}

void run_afc(const Plan& plan, Outputs& out) {
  const auto& e = plan.ensemble.ensemble;
  const auto& b = plan.afc;
  const FrequencyGrid grid(0.0, b.span, b.bins);
  afc::StorageResult result{Spectrum(grid, std::vector<double>(b.bins, 0.0), UnitTag::optical_depth), {}, {}, 0.0};
  double spacing = 0.0;
  json metrics;
  if (b.pulse_train) {
    spacing = 1.0 / b.train.period;
    const FrequencyGrid probe(0.0, b.probe_span, b.probe_bins);
    const auto comb = afc::comb_from_pulse_train(b.train, e, probe);
    result = afc::retrieve_from_spectrum(afc::resample(comb, grid), spacing, b.pulse, b.echoes);
    metrics["mode"] = "pulse_train";
    metrics["pulse_train_duration_s"] = static_cast<double>(b.train.pulse_count) * b.train.period;
  } else {
    spacing = b.comb.tooth_spacing;
    result = afc::store_and_retrieve(b.comb, b.pulse, grid, b.echoes);
    metrics["mode"] = "spec";
    metrics["finesse"] = b.comb.finesse();
    metrics["analytic_efficiency"] = afc::analytic_efficiency(b.comb.peak_depth, b.comb.finesse());
    out.derived["afc_finesse"] = b.comb.finesse();
    out.derived["afc_analytic_efficiency"] = afc::analytic_efficiency(b.comb.peak_depth, b.comb.finesse());
  }
  const std::size_t stride = std::max<std::size_t>(1, b.bins / 16384);
  io::CsvTable comb_csv({"frequency_hz", "value", "unit_tag"});
  for (std::size_t i = 0; i < result.comb.size(); i += stride)
    comb_csv.add_row_with_tag({grid.frequency(i), result.comb.values[i]}, "optical_depth");
  metrics["tooth_spacing_hz"] = spacing;
  metrics["storage_time_s"] = 1.0 / spacing;
  metrics["echoes"] = echo_metrics_json(result.echoes);
  metrics["pre_input_fraction"] = result.pre_input_fraction;
  metrics["comb_csv_stride"] = stride;
  metrics["field_reference_hz"] = grid.frequency(b.bins / 2);
  out.add("afc_comb.csv", comb_csv.str());
  out.add("afc_output.csv", io::trace_csv(result.output));
  out.add_json("afc_metrics.json", metrics);
  out.derived["afc_efficiency_echo1"] = result.echoes.front().efficiency;
  out.derived["afc_arrival_time_echo1_s"] = result.echoes.front().arrival_time;
  out.derived["afc_storage_time_s"] = 1.0 / spacing;
  out.derived["afc_pre_input_fraction"] = result.pre_input_fraction;
}

void run_afc_sweep(const Plan& plan, Outputs& out) {
  const auto& b = plan.sweep;
  const FrequencyGrid grid(0.0, b.span, b.bins);
  const auto points = afc::efficiency_sweep(b.finesses, b.depths, b.comb, b.pulse, grid);
  io::CsvTable csv({"finesse", "optical_depth", "eta_numeric", "eta_analytic", "relative_deviation", "arrival_time_s"});
  double worst = 0.0;
  for (const auto& p : points) {
    const double dev = p.analytic_efficiency > 0.0 ? (p.numeric_efficiency - p.analytic_efficiency) / p.analytic_efficiency : 0.0;
    worst = std::max(worst, std::abs(dev));
    csv.add_row({p.finesse, p.optical_depth, p.numeric_efficiency, p.analytic_efficiency, dev, p.arrival_time});
  }
  out.add("afc_sweep.csv", csv.str());
  out.derived["afc_sweep_max_relative_deviation"] = worst;
  out.derived["afc_storage_time_s"] = 1.0 / b.comb.tooth_spacing;
}

void run_fit(const Plan& plan, Outputs& out) {
  const auto data = io::read_xy_csv(plan.fit.data);
  const auto result = fit::fit_by_name(plan.fit.model, data, plan.fit.fixed_x);
  out.add_json("fit_result.json", io::fit_result_json(result));
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    out.derived["fit_" + result.names[i]] = result.parameters[i];
    out.derived["fit_" + result.names[i] + "_err"] = result.uncertainties[i];
  }
  out.derived["fit_converged"] = result.converged;
}

}  // namespace

std::string_view to_string(Kind kind) { return info(kind).name; }

bool is_stochastic(Kind kind) {
  return kind == Kind::ple || kind == Kind::lifetime || kind == Kind::echo2 || kind == Kind::echo3;
}

std::string_view toolkit_version() { return REQMEM_VERSION; }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Scenario parse_config(const json& doc, const std::filesystem::path& base_dir,
                      std::optional<std::uint64_t> seed_override) {
  json effective = doc;
  if (!effective.is_object()) throw ConfigError("config must be a JSON object");
  if (seed_override) effective["seed"] = *seed_override;
  const Plan plan = build_plan(effective, base_dir);
  Scenario s;
  s.kind = plan.kind;
  s.config = std::move(effective);
  s.seed = plan.seed;
  s.base_dir = base_dir;
  return s;
}

Scenario load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + ex.what());
  }
  return parse_config(doc, path.parent_path(), seed_override);
}

std::vector<std::string> preset_names() { return {"fig1c", "fig1d", "fig2a", "fig2c", "fig3a", "fig3b"}; }

json preset_config(const std::string& name) {
  if (name == "fig1c")
    return {{"kind", "ple"},
            {"seed", 1},
            {"description", "Stitched PLE scans of the single-crystal line with a Lorentzian fit"},
            {"ensemble", {{"preset", "single_crystal"}}},
            {"ple", json::object()}};
  if (name == "fig1d")
    return {{"kind", "lifetime"},
            {"seed", 1},
            {"description", "Fluorescence decay after excitation, exponential fit from 30 us"},
            {"ensemble", json::object()},
            {"lifetime", json::object()}};
  if (name == "fig2a")
    return {{"kind", "holeburn"},
            {"description", "100 ms monochromatic burn probed over 20 MHz, Lorentzian hole fit"},
            {"ensemble", {{"peak_optical_depth", 1.5}}},
            {"holeburn", json::object()}};
  if (name == "fig2c")
    return {{"kind", "hole_decay"},
            {"description", "Hole depth after the burn relaxing with 1.9 s and 300 s timescales"},
            {"ensemble", {{"peak_optical_depth", 1.5}}},
            {"hole_decay", {{"bins", 2048}}}};
  if (name == "fig3a")
    return {{"kind", "echo2"},
            {"seed", 1},
            {"description", "Two-pulse echo decay for T2 = 2.4 us with a single-exponential Mims fit"},
            {"ensemble", json::object()},
            {"echo", json::object()}};
  if (name == "fig3b")
    return {{"kind", "afc"},
            {"description", "600 ns AFC with finesse 2.32 and d = 2 storing a 120 ns pulse"},
            {"ensemble", json::object()},
            {"afc", {{"comb", {{"storage_time_s", 600e-9}, {"finesse", 2.32}, {"peak_depth", 2.0}}}}}};
  throw ConfigError("unknown preset '" + name + "'");
}

RunOutput execute(const Scenario& scenario) {
  const Plan plan = build_plan(scenario.config, scenario.base_dir);
  Outputs out;
  const auto& e = plan.ensemble.ensemble;
  out.derived["ensemble_gamma_inh_hz"] = e.inhomogeneous_fwhm;
  out.derived["ensemble_gamma_h_hz"] = e.homogeneous_fwhm();
  out.derived["ensemble_t1_s"] = e.lifetime;
  out.derived["ensemble_t2_s"] = e.coherence_time;
  out.derived["ensemble_peak_optical_depth"] = e.peak_optical_depth;
  out.derived["oscillator_strength"] = e.oscillator_strength;
  out.derived["wavelength_m"] = plan.ensemble.wavelength;
  out.derived["refractive_index"] = e.refractive_index;
  out.derived["local_field_convention"] = std::string(to_string(plan.ensemble.local_field));
  out.derived["implied_branching_ratio"] =
      implied_branching_ratio(e.oscillator_strength, e.lifetime, plan.ensemble.wavelength, e.refractive_index,
                              plan.ensemble.local_field);

  switch (plan.kind) {
    case Kind::ple: run_ple(plan, out); break;
    case Kind::lifetime: run_lifetime(plan, out); break;
    case Kind::holeburn: run_holeburn(plan, out); break;
    case Kind::hole_decay: run_hole_decay(plan, out); break;
    case Kind::echo2: run_echo2(plan, out); break;
    case Kind::echo3: run_echo3(plan, out); break;
    case Kind::afc: run_afc(plan, out); break;
    case Kind::afc_sweep: run_afc_sweep(plan, out); break;
    case Kind::fit: run_fit(plan, out); break;
  }

  RunOutput result;
  result.artifacts = std::move(out.files);
  result.derived = out.derived;
  json names = json::array();
  for (const auto& [name, content] : result.artifacts) names.push_back(name);
  result.manifest = {{"toolkit_version", std::string(toolkit_version())},
                     {"kind", std::string(to_string(plan.kind))},
                     {"seed", plan.seed ? json(*plan.seed) : json(nullptr)},
                     {"config_hash", fnv1a_hex(scenario.config.dump())},
                     {"config", scenario.config},
                     {"artifacts", names},
                     {"derived", out.derived}};
  result.artifacts.emplace_back("manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

void write_outputs(const RunOutput& output, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  try {
    for (const auto& [name, content] : output.artifacts) {
      const auto path = out_dir / name;
      io::write_text(path, content);
      written.push_back(path);
    }
  } catch (...) {
    for (const auto& path : written) std::filesystem::remove(path, ec);
    throw;
  }
}

}  // namespace reqmem::scenario
