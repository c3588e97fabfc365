// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "json.hpp"

#include "reqmem/afc.hpp"
#include "reqmem/core.hpp"
#include "reqmem/echo.hpp"
#include "reqmem/fit.hpp"
#include "reqmem/holeburn.hpp"
#include "reqmem/parallel.hpp"
#include "reqmem/scenario.hpp"

namespace fs = std::filesystem;
using namespace reqmem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "!") + what;
  }
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

double rel_err(double value, double target) { return std::abs(value / target - 1.0); }

fit::Dataset from_pairs(const std::vector<std::pair<double, double>>& rows) {
  fit::Dataset d;
  for (const auto& [x, y] : rows) {
    d.x.push_back(x);
    d.y.push_back(y);
  }
  return d;
}

// ---------------------------------------------------------------- AFC

Outcome analytic_point() {
  Outcome o;
  const double eta = afc::analytic_efficiency(2.0, 2.32);
  o.require(std::abs(eta - 0.085) <= 0.002, fmt("eta(2, 2.32) = %.5f", eta));
  return o;
}

const FrequencyGrid kAfcGrid(0.0, 64e6, 1u << 18);

Outcome afc_sweep() {
  Outcome o;
  afc::CombSpec base;
  const afc::InputPulse pulse;
  double worst = 0.0;
  const auto points = afc::efficiency_sweep({2, 3, 5, 10}, {0.5, 1, 2, 3}, base, pulse, kAfcGrid);
  for (const auto& p : points) worst = std::max(worst, rel_err(p.numeric_efficiency, p.analytic_efficiency));
  o.require(points.size() == 16 && worst <= 0.15, fmt("worst efficiency deviation %.3f over 16 combs", worst));

  double worst_bins = 0.0;
  for (double storage : {300e-9, 400e-9, 500e-9, 600e-9, 700e-9, 800e-9}) {
    afc::CombSpec c;
    c.tooth_spacing = 1.0 / storage;
    c.tooth_fwhm = c.tooth_spacing / 3.0;
    const auto r = afc::store_and_retrieve(c, pulse, kAfcGrid, 1);
    worst_bins = std::max(worst_bins, std::abs(r.echoes.front().arrival_time - storage) / r.output.dt);
  }
  o.require(worst_bins <= 1.0, fmt("worst arrival offset %.2f bins for 300-800 ns", worst_bins));
  return o;
}

Outcome echo_train() {
  Outcome o;
  afc::CombSpec c;
  c.tooth_fwhm = c.tooth_spacing / 2.32;
  c.peak_depth = 0.5;
  const auto r = afc::store_and_retrieve(c, afc::InputPulse{}, kAfcGrid, 4);
  int decreasing = 0;
  for (std::size_t k = 0; k < r.echoes.size(); ++k) {
    const bool on_time = std::abs(r.echoes[k].arrival_time - (k + 1) / c.tooth_spacing) <= r.output.dt;
    const bool lower = k == 0 || r.echoes[k].efficiency < r.echoes[k - 1].efficiency;
    if (!(on_time && lower && r.echoes[k].efficiency > 0.0)) break;
    ++decreasing;
  }
  o.require(decreasing >= 3, fmt("%.0f echoes on time with strictly decreasing energy", decreasing));
  std::string energies;
  for (const auto& e : r.echoes) energies += fmt(" %.2e", e.efficiency);
  o.detail += " (" + energies.substr(1) + ")";
  return o;
}

// ---------------------------------------------------------------- echoes

echo::EchoConfig echo_config(std::size_t n) {
  echo::EchoConfig c;
  c.emitter_count = n;
  c.pulse_duration = 0.4e-6;
  c.seed = 1;
  return c;
}

std::vector<double> delays_us(double start, double stop, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back((start + (stop - start) * i / (count - 1)) * 1e-6);
  return out;
}

Outcome two_pulse_round_trip() {
  Outcome o;
  const EmitterEnsemble e;
  const auto rows = echo::echo_decay_dataset(delays_us(0.5, 2.0, 16), echo_config(100000), e, false, 1);
  const auto r = fit::fit_mims(echo::to_dataset(rows), 1.0);
  const double tau_decay = r.value("t_m") / 4.0;
  const double gamma = echo::linewidth_from_decay(tau_decay);
  o.require(r.converged, "converged");
  o.require(rel_err(tau_decay, 0.6e-6) <= 0.05, fmt("tau_decay = %.4f us", tau_decay * 1e6));
  o.require(rel_err(gamma, 133e3) <= 0.05, fmt("Gamma_h = %.1f kHz", gamma * 1e-3));
  return o;
}

struct LinewidthEstimate {
  double value = 0.0;
  double sigma = 0.0;
};

// Decay of the stimulated echo area with tau at fixed wait, read as a linewidth.
LinewidthEstimate stimulated_linewidth(const echo::EchoConfig& base, double wait) {
  const EmitterEnsemble e;
  echo::EchoConfig c = base;
  c.wait = wait;
  const auto rows = echo::echo_decay_dataset(delays_us(0.5, 2.0, 7), c, e, true, 1);
  const auto r = fit::fit_exponential(echo::to_dataset(rows));
  const double tau = r.value("tau");
  const double gamma = echo::linewidth_from_decay(tau);
  return {gamma, gamma * r.uncertainty("tau") / tau};
}

Outcome stimulated_echo() {
  Outcome o;
  const EmitterEnsemble e;
  echo::EchoConfig c = echo_config(100000);
  c.dephasing = echo::Dephasing::markovian(e.coherence_time);
  const auto zero = stimulated_linewidth(c, 0.0);
  c.seed = 2;
  const auto waited = stimulated_linewidth(c, 100e-6);
  const double sigma = std::hypot(zero.sigma, waited.sigma);
  o.require(std::abs(waited.value - zero.value) <= 3.0 * sigma,
            fmt("no diffusion: %.1f vs %.1f kHz (3 sigma = %.1f kHz)", waited.value * 1e-3, zero.value * 1e-3,
                3e-3 * sigma));

  const double gamma_sd = 200e3, rate = 1e4;
  c.dephasing = echo::Dephasing::sudden_jump(e.homogeneous_fwhm(), gamma_sd, rate);
  c.seed = 3;
  std::vector<LinewidthEstimate> series;
  const std::vector<double> waits{0.0, 30e-6, 100e-6, 300e-6};
  double worst_model = 0.0;
  bool monotone = true;
  std::string values;
  for (double w : waits) {
    series.push_back(stimulated_linewidth(c, w));
    const double model = echo::effective_linewidth(w, e.homogeneous_fwhm(), gamma_sd, rate);
    worst_model = std::max(worst_model, rel_err(series.back().value, model));
    if (series.size() > 1) {
      const auto& prev = series[series.size() - 2];
      monotone = monotone && series.back().value > prev.value - 2.0 * std::hypot(prev.sigma, series.back().sigma);
    }
    values += fmt(" %.0f", series.back().value * 1e-3);
  }
  o.require(monotone && series.back().value > series.front().value, "diffusion: monotone in T_w (" +
                                                                        values.substr(1) + " kHz)");
  o.require(worst_model <= 0.10, fmt("worst deviation from forward model %.3f", worst_model));
  return o;
}

// ---------------------------------------------------------------- hole burning

double fitted_fwhm(const Spectrum& s) {
  fit::Dataset d;
  d.x = s.grid.frequencies();
  d.y = s.values;
  return fit::fit_lorentzian(d).value("fwhm");
}

EmitterEnsemble burn_ensemble() {
  EmitterEnsemble e;
  e.peak_optical_depth = 1.5;
  return e;
}

Outcome hole_widths() {
  Outcome o;
  const auto e = burn_ensemble();
  const FrequencyGrid probe(0.0, 4e6, 1024);
  const auto thermal =
      holeburn::initialize_thermal(e, holeburn::class_grid_for(probe, e.hyperfine, e.homogeneous_fwhm()));
  const double gh = e.homogeneous_fwhm();
  using holeburn::BurnSchedule;

  const auto ideal = holeburn::burn(thermal, e, BurnSchedule::monochromatic(0.0, 1.0, 0.0, 0.01, 1.0), 0.01);
  const double w0 = fitted_fwhm(holeburn::probe_absorption(ideal, e, probe, 0.0));
  o.require(rel_err(w0, 2.0 * gh) <= 0.03, fmt("ideal %.1f kHz vs %.1f kHz", w0 * 1e-3, 2e-3 * gh));

  const auto laser = holeburn::burn(thermal, e, BurnSchedule::monochromatic(0.0, 1.0, 100e3, 0.01, 1.0), 0.01);
  const double w1 = fitted_fwhm(holeburn::probe_absorption(laser, e, probe, 100e3));
  o.require(rel_err(w1, 2.0 * gh + 200e3) <= 0.05,
            fmt("100 kHz lasers %.1f kHz vs %.1f kHz", w1 * 1e-3, (2.0 * gh + 200e3) * 1e-3));
  return o;
}

Outcome hole_decay() {
  Outcome o;
  const auto e = burn_ensemble();
  const FrequencyGrid probe(0.0, 4e6, 1024);
  const auto thermal =
      holeburn::initialize_thermal(e, holeburn::class_grid_for(probe, e.hyperfine, e.homogeneous_fwhm()));
  const auto burned =
      holeburn::burn(thermal, e, holeburn::BurnSchedule::monochromatic(0.0, 1.0, 100e3, 0.1, 300.0), 1e-4);
  std::vector<double> times;
  for (int i = 0; i < 40; ++i) times.push_back(0.05 * std::pow(3000.0 / 0.05, i / 39.0));
  const auto trace =
      holeburn::hole_depth_trace(burned, e, holeburn::rate_matrix_from_timescales(1.9, 300.0), 0.0, times, 100e3);
  const auto r = fit::fit_biexponential(from_pairs(trace));
  o.require(rel_err(r.value("tau1"), 1.9) <= 0.10, fmt("tau_fast = %.3f s", r.value("tau1")));
  o.require(rel_err(r.value("tau2"), 300.0) <= 0.10, fmt("tau_slow = %.1f s", r.value("tau2")));
  return o;
}

Outcome deep_burn() {
  Outcome o;
  const auto e = burn_ensemble();
  const FrequencyGrid probe(0.0, 20e6, 8192);
  const auto thermal =
      holeburn::initialize_thermal(e, holeburn::class_grid_for(probe, e.hyperfine, e.homogeneous_fwhm()));
  const auto burned =
      holeburn::burn(thermal, e, holeburn::BurnSchedule::monochromatic(0.0, 1.0, 100e3, 1.0, 300.0), 5e-5);
  const double depth = holeburn::hole_depth(burned, e, 0.0, 100e3);
  o.require(depth >= 0.88, fmt("hole depth %.3f after 1 s", depth));
  return o;
}

// ---------------------------------------------------------------- core and fit

Outcome line_profile() {
  Outcome o;
  EmitterEnsemble e;
  e.peak_optical_depth = 2.0;
  e.inhomogeneous_fwhm = 7.6e9;
  const double exact = optical_depth_at_detuning(e, 2e9);
  const auto grid = FrequencyGrid::with_bin_width(0.0, 1e6, 8001);
  const double gridded = optical_depth_profile(e, grid).at(2e9);
  o.require(std::abs(exact - 1.57) <= 0.005, fmt("d(2 GHz) = %.4f", exact));
  o.require(std::abs(gridded - exact) <= 1e-6, fmt("on a 1 MHz grid %.4f", gridded));
  return o;
}

fit::Dataset generate(const fit::Model& m, const std::vector<double>& p, std::vector<double> x) {
  fit::Dataset d;
  d.x = std::move(x);
  for (double xi : d.x) d.y.push_back(m.evaluate(xi, p));
  return d;
}

std::vector<double> linear_axis(double lo, double hi, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(lo + (hi - lo) * i / (n - 1));
  return x;
}

std::vector<double> log_axis(double lo, double hi, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return x;
}

void relative_noise(fit::Dataset& d, double fraction, std::uint64_t seed) {
  RandomStream rng(seed, 0);
  for (auto& y : d.y) y *= 1.0 + fraction * rng.normal();
}

double jacobian_mismatch(const fit::Model& m, std::vector<double> p, const std::vector<double>& x) {
  const Eigen::MatrixXd engine = fit::finite_difference_jacobian(m, p, x);
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = 1e-3 * m.step_scale(p, k);
    const double orig = p[k];
    auto at = [&](double offset, double xi) {
      p[k] = orig + offset;
      const double v = m.evaluate(xi, p);
      p[k] = orig;
      return v;
    };
    Eigen::VectorXd oracle(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
      oracle(static_cast<Eigen::Index>(i)) =
          (-at(2 * h, x[i]) + 8 * at(h, x[i]) - 8 * at(-h, x[i]) + at(-2 * h, x[i])) / (12 * h);
    const double scale = oracle.cwiseAbs().maxCoeff();
    worst = std::max(worst, (engine.col(static_cast<Eigen::Index>(k)) - oracle).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

Outcome fit_oracles() {
  Outcome o;
  const auto lor = fit::lorentzian_model();
  {
    auto d = generate(lor, {0.3, 2.0, 1.0, 0.1}, linear_axis(-10, 10, 401));
    relative_noise(d, 0.01, 1);
    const double w = fit::fit_lorentzian(d).value("fwhm");
    o.require(rel_err(w, 2.0) <= 0.02, fmt("lorentzian 1%% noise %.4f", w / 2.0));
  }
  {
    auto d = generate(lor, {0.0, 2.2e9, 1.0, 0.0}, linear_axis(-11e9, 11e9, 401));
    relative_noise(d, 0.02, 2);
    const double w = fit::fit_lorentzian(d).value("fwhm");
    o.require(rel_err(w, 2.2e9) <= 0.02, fmt("2.2 GHz line %.4f GHz", w * 1e-9));
  }
  {
    auto d = generate(lor, {0.0, 644e3, -0.8, 1.5}, linear_axis(-3e6, 3e6, 601));
    relative_noise(d, 0.002, 3);
    const double w = fit::fit_lorentzian(d).value("fwhm");
    o.require(rel_err(w, 644e3) <= 0.01, fmt("644 kHz hole %.1f kHz", w * 1e-3));
  }
  {
    // Photon counting: Poisson noise on ~10^4 counts at the start of the decay.
    auto d = generate(fit::exponential_model(), {1e4, 1.5e-3, 20.0}, linear_axis(30e-6, 10e-3, 400));
    RandomStream rng(4, 0);
    for (auto& y : d.y) y = static_cast<double>(rng.poisson(y));
    const double t1 = fit::fit_exponential(d).value("tau");
    o.require(rel_err(t1, 1.5e-3) <= 0.01, fmt("T1 %.4f ms", t1 * 1e3));
  }
  {
    auto d = generate(fit::biexponential_model(), {0.5, 1.9, 0.5, 300.0, 0.0}, log_axis(0.05, 3000.0, 400));
    relative_noise(d, 0.05, 5);
    const auto r = fit::fit_biexponential(d);
    o.require(rel_err(r.value("tau1"), 1.9) <= 0.10 && rel_err(r.value("tau2"), 300.0) <= 0.10,
              fmt("biexponential %.3f s, %.1f s", r.value("tau1"), r.value("tau2")));
  }
  const auto mims = fit::mims_model();
  {
    auto d = generate(mims, {1.0, 2.4e-6, 1.0}, linear_axis(0.5e-6, 2e-6, 16));
    relative_noise(d, 0.01, 6);
    const double tm = fit::fit_mims(d, 1.0).value("t_m");
    o.require(rel_err(tm, 2.4e-6) <= 0.02, fmt("Mims x = 1: T_M %.4f us", tm * 1e6));
  }
  {
    auto d = generate(mims, {1.0, 2.4e-6, 1.8}, linear_axis(0.2e-6, 1.2e-6, 30));
    relative_noise(d, 0.01, 7);
    const double x = fit::fit_mims(d).value("x");
    o.require(rel_err(x, 1.8) <= 0.05, fmt("Mims free x %.3f", x));
  }

  double worst = 0.0;
  RandomStream rng(8, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const double u = rng.uniform();
    worst = std::max(worst, jacobian_mismatch(lor, {u - 0.5, 1.0 + u, 2.0 - u, 0.1 * u}, linear_axis(-5, 5, 41)));
    worst = std::max(worst, jacobian_mismatch(fit::exponential_model(), {1.0 + u, 2.0 + u, u}, linear_axis(0, 10, 41)));
    worst = std::max(worst, jacobian_mismatch(fit::biexponential_model(), {1.0, 1.0 + u, 0.5, 20.0 + u, 0.1},
                                              log_axis(0.01, 100, 41)));
    worst = std::max(worst, jacobian_mismatch(mims, {1.0, 2.0 + u, 1.0 + u}, linear_axis(0.1, 2.0, 41)));
  }
  o.require(worst <= 1e-4, fmt("worst Jacobian mismatch %.1e", worst));

  std::vector<fit::Dataset> scans;
  const std::vector<double> gains{1.0, 1.7, 0.6, 2.3};
  for (int s = 0; s < 4; ++s) {
    auto d = generate(lor, {0.0, 2.0, 1.0, 0.2}, linear_axis(-6.0 + 3.0 * s, -2.0 + 3.0 * s, 41));
    for (auto& y : d.y) y *= gains[s];
    scans.push_back(d);
  }
  const auto st = fit::stitch_scans(scans);
  double gain_err = 0.0;
  for (int s = 1; s < 4; ++s) gain_err = std::max(gain_err, std::abs(st.gains[s] * gains[s] - 1.0));
  o.require(gain_err <= 1e-6, fmt("stitch gain error %.1e", gain_err));
  return o;
}

// ---------------------------------------------------------------- CLI based

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("reqmem_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int sim(const std::string& args) {
  const std::string cmd = std::string("\"") + REQMEM_SIM_PATH + "\" " + args + " >/dev/null 2>\"" +
                          (scratch() / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome branching_ratio() {
  Outcome o;
  const double lambda = 579.914e-9, n = 1.5, t1 = 1.5e-3, f = 7.4e-9;
  double worst = 0.0;
  for (auto conv : {LocalFieldCorrection::none, LocalFieldCorrection::virtual_cavity, LocalFieldCorrection::real_cavity}) {
    for (double beta : {1e-3, 0.0066, 0.5, 1.0}) {
      const double back = implied_branching_ratio(reqmem::oscillator_strength(t1, beta, lambda, n, conv), t1, lambda, n, conv);
      worst = std::max(worst, rel_err(back, beta));
    }
  }
  o.require(worst <= 1e-12, fmt("round trip %.1e", worst));

  const fs::path out = scratch() / "fig1d";
  if (sim("run --preset fig1d --out \"" + out.string() + "\"") != 0) {
    o.require(false, "fig1d run failed");
    return o;
  }
  const auto derived = nlohmann::json::parse(slurp(out / "manifest.json"))["derived"];
  const double beta = derived.value("implied_branching_ratio", -1.0);
  const std::string conv = derived.value("local_field_convention", "");
  const double lib = implied_branching_ratio(f, t1, lambda, n, parse_local_field(conv));
  o.require(beta > 0.0 && beta < 1.0 && beta == lib, fmt("beta = %.5f", beta) + " (" + conv + ")");
  return o;
}

Outcome determinism() {
  Outcome o;
  for (const auto& name : scenario::preset_names()) {
    const fs::path a = scratch() / (name + "_t1"), b = scratch() / (name + "_t4");
    if (sim("run --preset " + name + " --threads 1 --out \"" + a.string() + "\"") != 0 ||
        sim("run --preset " + name + " --threads 4 --out \"" + b.string() + "\"") != 0) {
      o.require(false, name + " run failed");
      continue;
    }
    std::size_t files = 0;
    bool same = true;
    for (const auto& entry : fs::directory_iterator(a)) {
      ++files;
      const fs::path other = b / entry.path().filename();
      same = same && fs::exists(other) && slurp(entry.path()) == slurp(other);
    }
    same = same && files == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), fs::directory_iterator{}));
    o.require(same, name + fmt(" %.0f files", static_cast<double>(files)));
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"analytic AFC efficiency", analytic_point},
      {"numeric vs analytic AFC", afc_sweep},
      {"AFC echo train", echo_train},
      {"two-pulse echo round trip", two_pulse_round_trip},
      {"stimulated echo", stimulated_echo},
      {"hole width limits", hole_widths},
      {"hole decay round trip", hole_decay},
      {"deep burn depth", deep_burn},
      {"line profile", line_profile},
      {"fit engine oracles", fit_oracles},
      {"oscillator strength", branching_ratio},
      {"determinism across thread counts", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s [%zu] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  fs::remove_all(scratch());
  return failures == 0 ? 0 : 1;
}
