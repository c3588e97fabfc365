#include "reqmem/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "reqmem/errors.hpp"

namespace reqmem::fit {

namespace {

constexpr double kStepFraction = 6.0e-6;  // ~cbrt(machine epsilon)

double nonzero(double v) { return v != 0.0 && std::isfinite(v) ? std::abs(v) : 1.0; }

std::vector<double> weights_of(const Dataset& data) {
  std::vector<double> w(data.size(), 1.0);
  if (data.y_err)
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / ((*data.y_err)[i] * (*data.y_err)[i]);
  return w;
}

// sqrt(w) (y - f)
Eigen::VectorXd weighted_residuals(const Model& model, std::span<const double> params,
                                   const Dataset& data, const std::vector<double>& w) {
  Eigen::VectorXd r(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    r(i) = std::sqrt(w[i]) * (data.y[i] - model.evaluate(data.x[i], params));
  return r;
}

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  bool ok = false;
};

LineFit linear_regression(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit out;
  const std::size_t n = x.size();
  if (n < 2) return out;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) return out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  out.ok = true;
  return out;
}

// Regression of log(sign * (y - baseline)) on x over points where that is positive
// and above `floor_fraction` of the first usable value.
LineFit log_linear(const Dataset& data, std::size_t begin, std::size_t end, double baseline,
                   double sign, double floor_fraction) {
  std::vector<double> xs, ys;
  double reference = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double v = sign * (data.y[i] - baseline);
    if (v > reference) reference = v;
  }
  for (std::size_t i = begin; i < end; ++i) {
    const double v = sign * (data.y[i] - baseline);
    if (v > floor_fraction * reference && v > 0.0) {
      xs.push_back(data.x[i]);
      ys.push_back(std::log(v));
    }
  }
  if (xs.size() < 2) return {};
  return linear_regression(xs, ys);
}

double tail_mean(const Dataset& data, double fraction) {
  const std::size_t n = data.size();
  const std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * n));
  double sum = 0.0;
  for (std::size_t i = n - count; i < n; ++i) sum += data.y[i];
  return sum / static_cast<double>(count);
}

void permute_pair(FitResult& r, std::size_t a, std::size_t b) {
  std::swap(r.parameters[a], r.parameters[b]);
  std::swap(r.uncertainties[a], r.uncertainties[b]);
  r.covariance.row(a).swap(r.covariance.row(b));
  r.covariance.col(a).swap(r.covariance.col(b));
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

void Dataset::validate(std::size_t parameter_count) const {
  if (y.size() != x.size()) throw InvalidParameter("dataset: x and y lengths differ");
  if (y_err && y_err->size() != x.size())
    throw InvalidParameter("dataset: y_err length differs from x");
  if (x.size() < parameter_count + 1)
    throw InvalidParameter("dataset: need at least " + std::to_string(parameter_count + 1) +
                           " points, got " + std::to_string(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw InvalidParameter("dataset: non-finite value at row " + std::to_string(i));
    if (i > 0 && !(x[i] > x[i - 1]))
      throw InvalidParameter("dataset: x not strictly increasing at row " + std::to_string(i));
    if (y_err && !((*y_err)[i] > 0.0))
      throw InvalidParameter("dataset: y_err must be positive (row " + std::to_string(i) + ")");
  }
}

double FitResult::value(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return parameters[i];
  throw InvalidParameter("FitResult: no parameter '" + name + "'");
}

double FitResult::uncertainty(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return uncertainties[i];
  throw InvalidParameter("FitResult: no parameter '" + name + "'");
}

Eigen::MatrixXd finite_difference_jacobian(const Model& model, std::span<const double> params,
                                           std::span<const double> x) {
  const std::size_t p = params.size();
  Eigen::MatrixXd jac(x.size(), p);
  std::vector<double> work(params.begin(), params.end());
  for (std::size_t j = 0; j < p; ++j) {
    const double h = kStepFraction * nonzero(model.step_scale(params, j));
    const double original = work[j];
    work[j] = original + h;
    const double hp = work[j] - original;  // exactly representable step
    std::vector<double> plus(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) plus[i] = model.evaluate(x[i], work);
    work[j] = original - hp;
    for (std::size_t i = 0; i < x.size(); ++i)
      jac(i, j) = (plus[i] - model.evaluate(x[i], work)) / (2.0 * hp);
    work[j] = original;
  }
  return jac;
}

FitResult nls_fit(const Model& model, std::vector<double> initial, const Dataset& data,
                  const FitOptions& options) {
  const std::size_t p = model.parameter_count();
  if (initial.size() != p)
    throw InvalidParameter("nls_fit: expected " + std::to_string(p) + " initial parameters");
  for (double v : initial)
    if (!std::isfinite(v)) throw InvalidParameter("nls_fit: initial parameters must be finite");
  std::vector<bool> fixed = options.fixed;
  fixed.resize(p, false);
  std::vector<std::size_t> free;
  for (std::size_t j = 0; j < p; ++j)
    if (!fixed[j]) free.push_back(j);
  data.validate(free.size());

  const auto w = weights_of(data);
  const Eigen::VectorXd sqrt_w = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size()).cwiseSqrt();
  const std::size_t nf = free.size();

  std::vector<double> params = std::move(initial);
  Eigen::VectorXd r = weighted_residuals(model, params, data, w);
  double ssr = r.squaredNorm();
  if (!std::isfinite(ssr)) throw InvalidParameter("nls_fit: model undefined at initial parameters");

  auto jacobian_free = [&](const std::vector<double>& at) {
    const Eigen::MatrixXd full = finite_difference_jacobian(model, at, data.x);
    Eigen::MatrixXd a(data.size(), nf);
    for (std::size_t k = 0; k < nf; ++k) a.col(k) = sqrt_w.cwiseProduct(full.col(free[k]));
    return a;
  };
  auto gradient_measure = [&](const Eigen::MatrixXd& a, const Eigen::VectorXd& res) {
    const double rn = res.norm();
    if (rn == 0.0) return 0.0;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      const double cn = a.col(k).norm();
      if (cn == 0.0) continue;
      worst = std::max(worst, std::abs(a.col(k).dot(res)) / (cn * rn));
    }
    return worst;
  };

  double lambda = options.initial_damping;
  int iterations = 0;
  bool converged = false;
  bool solved_once = false;
  bool stalled = false;
  Eigen::MatrixXd a = jacobian_free(params);
  double grad = gradient_measure(a, r);

  while (iterations < options.max_iterations) {
    if (grad < options.tolerance) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd normal = a.transpose() * a;
    const Eigen::VectorXd rhs = a.transpose() * r;
    const double diag_floor = 1e-12 * std::max(normal.diagonal().maxCoeff(), 1e-300);
    bool accepted = false;
    while (iterations < options.max_iterations) {
      ++iterations;
      Eigen::MatrixXd damped = normal;
      for (std::size_t k = 0; k < nf; ++k)
        damped(k, k) += lambda * std::max(normal(k, k), diag_floor);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      Eigen::VectorXd delta;
      if (ldlt.info() == Eigen::Success) delta = ldlt.solve(rhs);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        lambda *= options.damping_increase;
        continue;
      }
      solved_once = true;
      std::vector<double> trial = params;
      for (std::size_t k = 0; k < nf; ++k) trial[free[k]] += delta(k);
      const Eigen::VectorXd r_trial = weighted_residuals(model, trial, data, w);
      const double ssr_trial = r_trial.squaredNorm();
      if (std::isfinite(ssr_trial) && ssr_trial < ssr) {
        params = std::move(trial);
        r = r_trial;
        ssr = ssr_trial;
        lambda = std::max(lambda * options.damping_decrease, 1e-15);
        accepted = true;
        break;
      }
      lambda *= options.damping_increase;
      if (lambda > 1e16) {
        stalled = true;
        break;
      }
    }
    if (!accepted) break;
    a = jacobian_free(params);
    grad = gradient_measure(a, r);
  }
  if (!converged && grad < options.tolerance) converged = true;
  // Zero-residual fixed point: the cosine measure is rounding noise there.
  double data_norm = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) data_norm += w[i] * data.y[i] * data.y[i];
  if (!converged && ssr <= 1e-20 * data_norm) converged = true;
  if (!solved_once && !converged)
    throw NumericError("nls_fit: normal equations singular for model '" + model.name + "'");

  FitResult result;
  result.model = model.name;
  result.names = model.parameter_names;
  result.parameters = params;
  result.iterations = iterations;
  result.converged = converged;
  result.gradient_norm = grad;
  result.residual_norm = std::sqrt(ssr);
  const double dof = static_cast<double>(data.size()) - static_cast<double>(nf);
  result.reduced_chi_square = dof > 0.0 ? ssr / dof : 0.0;
  result.covariance = Eigen::MatrixXd::Zero(p, p);
  result.uncertainties.assign(p, 0.0);
  if (nf > 0) {
    // Column scaling keeps the rank decision independent of parameter units.
    Eigen::VectorXd scale(nf);
    for (std::size_t k = 0; k < nf; ++k) {
      const double cn = a.col(static_cast<Eigen::Index>(k)).norm();
      scale(static_cast<Eigen::Index>(k)) = cn > 0.0 ? 1.0 / cn : 0.0;
    }
    const Eigen::MatrixXd scaled = a * scale.asDiagonal();
    const Eigen::MatrixXd inverse = scale.asDiagonal() *
                                    (scaled.transpose() * scaled).completeOrthogonalDecomposition().pseudoInverse() *
                                    scale.asDiagonal();
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t j = 0; j < nf; ++j)
        result.covariance(free[i], free[j]) = inverse(i, j) * result.reduced_chi_square;
    for (std::size_t i = 0; i < p; ++i)
      result.uncertainties[i] = std::sqrt(std::max(result.covariance(i, i), 0.0));
  }
  if (stalled && !converged) result.warnings.push_back("damping exhausted before convergence");
  if (!converged && iterations >= options.max_iterations)
    result.warnings.push_back("iteration limit reached");
  return result;
}

Model lorentzian_model() {
  Model m;
  m.name = "lorentzian";
  m.parameter_names = {"center", "fwhm", "amplitude", "offset"};
  m.evaluate = [](double x, std::span<const double> p) {
    const double u = 2.0 * (x - p[0]) / p[1];
    return p[3] + p[2] / (1.0 + u * u);
  };
  m.step_scale = [](std::span<const double> p, std::size_t i) {
    switch (i) {
      case 0:
      case 1: return nonzero(p[1]);
      case 2: return nonzero(p[2]);
      default: return nonzero(std::max(std::abs(p[3]), std::abs(p[2])));
    }
  };
  return m;
}

Model exponential_model() {
  Model m;
  m.name = "exponential";
  m.parameter_names = {"amplitude", "tau", "offset"};
  m.evaluate = [](double x, std::span<const double> p) { return p[0] * std::exp(-x / p[1]) + p[2]; };
  m.step_scale = [](std::span<const double> p, std::size_t i) {
    if (i == 1) return nonzero(p[1]);
    return nonzero(std::max(std::abs(p[0]), std::abs(p[2])));
  };
  return m;
}

Model biexponential_model() {
  Model m;
  m.name = "biexponential";
  m.parameter_names = {"a1", "tau1", "a2", "tau2", "offset"};
  m.evaluate = [](double x, std::span<const double> p) {
    return p[0] * std::exp(-x / p[1]) + p[2] * std::exp(-x / p[3]) + p[4];
  };
  m.step_scale = [](std::span<const double> p, std::size_t i) {
    if (i == 1 || i == 3) return nonzero(p[i]);
    return nonzero(std::max({std::abs(p[0]), std::abs(p[2]), std::abs(p[4])}));
  };
  return m;
}

Model mims_model() {
  Model m;
  m.name = "mims";
  m.parameter_names = {"i0", "t_m", "x"};
  m.evaluate = [](double tau, std::span<const double> p) {
    if (!(p[1] > 0.0) || !(p[2] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return p[0] * std::exp(-std::pow(4.0 * tau / p[1], p[2]));
  };
  m.step_scale = [](std::span<const double> p, std::size_t i) { return nonzero(p[i]); };
  return m;
}

std::vector<double> lorentzian_initial_guess(const Dataset& data) {
  const std::size_t n = data.size();
  const std::size_t edge = std::max<std::size_t>(1, n / 20);
  double offset = 0.0;
  for (std::size_t i = 0; i < edge; ++i) offset += data.y[i] + data.y[n - 1 - i];
  offset /= static_cast<double>(2 * edge);
  std::size_t peak = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(data.y[i] - offset) > std::abs(data.y[peak] - offset)) peak = i;
  const double amplitude = data.y[peak] - offset;
  const double half = 0.5 * std::abs(amplitude);
  auto crossing = [&](int direction) -> std::optional<double> {
    std::size_t i = peak;
    while (true) {
      if ((direction < 0 && i == 0) || (direction > 0 && i + 1 >= n)) return std::nullopt;
      const std::size_t j = direction < 0 ? i - 1 : i + 1;
      const double vi = std::abs(data.y[i] - offset);
      const double vj = std::abs(data.y[j] - offset);
      if (vj <= half) {
        const double frac = vi == vj ? 0.0 : (vi - half) / (vi - vj);
        return data.x[i] + frac * (data.x[j] - data.x[i]);
      }
      i = j;
    }
  };
  const auto left = crossing(-1);
  const auto right = crossing(+1);
  double fwhm;
  if (left && right) fwhm = *right - *left;
  else if (left) fwhm = 2.0 * (data.x[peak] - *left);
  else if (right) fwhm = 2.0 * (*right - data.x[peak]);
  else fwhm = 0.5 * (data.x.back() - data.x.front());
  if (!(fwhm > 0.0)) fwhm = data.x[std::min(peak + 1, n - 1)] - data.x[peak > 0 ? peak - 1 : 0];
  return {data.x[peak], fwhm, amplitude, offset};
}

std::vector<double> exponential_initial_guess(const Dataset& data) {
  double baseline = tail_mean(data, 0.1);
  const double sign = data.y.front() >= baseline ? 1.0 : -1.0;
  LineFit line = log_linear(data, 0, data.size(), baseline, sign, 0.05);
  if (!line.ok || line.slope >= 0.0) {
    baseline = 0.0;
    line = log_linear(data, 0, data.size(), baseline, sign, 0.0);
  }
  const double span = data.x.back() - data.x.front();
  if (!line.ok || line.slope >= 0.0) return {data.y.front() - baseline, span, baseline};
  const double tau = -1.0 / line.slope;
  return {sign * std::exp(line.intercept), tau, baseline};
}

std::vector<double> biexponential_initial_guess(const Dataset& data) {
  const std::size_t n = data.size();
  const double baseline = tail_mean(data, 0.05);
  const double sign = data.y.front() >= baseline ? 1.0 : -1.0;
  const std::size_t split = n / 2;
  const double span = data.x.back() - data.x.front();
  LineFit slow = log_linear(data, split, n - std::max<std::size_t>(1, n / 20), baseline, sign, 0.0);
  double a2 = 0.5 * (data.y.front() - baseline), tau2 = span / 2.0;
  if (slow.ok && slow.slope < 0.0) {
    tau2 = -1.0 / slow.slope;
    a2 = sign * std::exp(slow.intercept);
  }
  Dataset early;
  for (std::size_t i = 0; i < split; ++i) {
    early.x.push_back(data.x[i]);
    early.y.push_back(data.y[i] - a2 * std::exp(-data.x[i] / tau2));
  }
  LineFit fast = log_linear(early, 0, early.size(), baseline, sign, 0.0);
  double a1 = 0.5 * (data.y.front() - baseline), tau1 = tau2 / 10.0;
  if (fast.ok && fast.slope < 0.0 && -1.0 / fast.slope < tau2) {
    tau1 = -1.0 / fast.slope;
    a1 = sign * std::exp(fast.intercept);
  }
  return {a1, tau1, a2, tau2, baseline};
}

std::vector<double> mims_initial_guess(const Dataset& data, std::optional<double> fixed_x) {
  const double span = std::max(data.x.back(), data.x.back() - data.x.front());
  const LineFit line = log_linear(data, 0, data.size(), 0.0, 1.0, 0.0);
  double i0 = data.y.front();
  double t_m = 100.0 * 4.0 * span;
  if (line.ok && line.slope < 0.0) {
    i0 = std::exp(line.intercept);
    t_m = -4.0 / line.slope;  // single-exponential reading, x = 1
  }
  return {i0, t_m, fixed_x.value_or(1.0)};
}

FitResult fit_lorentzian(const Dataset& data, const FitOptions& options) {
  const Model model = lorentzian_model();
  data.validate(model.parameter_count());
  const auto init = lorentzian_initial_guess(data);
  if (init[2] == 0.0) {
    FitResult flat;
    flat.model = model.name;
    flat.names = model.parameter_names;
    flat.parameters = {0.5 * (data.x.front() + data.x.back()), data.x.back() - data.x.front(), 0.0,
                       init[3]};
    flat.uncertainties.assign(4, 0.0);
    flat.covariance = Eigen::MatrixXd::Zero(4, 4);
    flat.converged = false;
    flat.warnings.push_back("flat data: no line present");
    return flat;
  }
  FitResult r = nls_fit(model, init, data, options);
  r.parameters[1] = std::abs(r.parameters[1]);
  double min_spacing = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < data.size(); ++i)
    min_spacing = std::min(min_spacing, data.x[i] - data.x[i - 1]);
  if (r.parameters[1] < 2.0 * min_spacing) {
    r.converged = false;
    r.warnings.push_back("fitted width below sampling resolution: no resolved line");
  }
  if (std::abs(r.parameters[2]) < 3.0 * r.uncertainties[2]) {
    r.converged = false;
    r.warnings.push_back("line amplitude not significant");
  }
  return r;
}

FitResult fit_exponential(const Dataset& data, const FitOptions& options) {
  const Model model = exponential_model();
  data.validate(model.parameter_count());
  FitResult r = nls_fit(model, exponential_initial_guess(data), data, options);
  if (!(r.parameters[1] > 0.0)) r.warnings.push_back("non-positive decay constant");
  return r;
}

FitResult fit_biexponential(const Dataset& data, const FitOptions& options) {
  const Model model = biexponential_model();
  data.validate(model.parameter_count());
  FitResult r = nls_fit(model, biexponential_initial_guess(data), data, options);
  if (r.parameters[1] > r.parameters[3]) {
    permute_pair(r, 0, 2);
    permute_pair(r, 1, 3);
  }
  const double tau1 = r.parameters[1], tau2 = r.parameters[3];
  if (!(tau1 > 0.0) || !(tau2 > 0.0)) {
    r.warnings.push_back("degenerate biexponential: non-positive timescale");
  } else if (tau2 / tau1 <= 3.0) {
    r.warnings.push_back("degenerate biexponential: tau2/tau1 = " + format_number(tau2 / tau1) +
                         " <= 3");
  }
  const double total = std::abs(r.parameters[0]) + std::abs(r.parameters[2]);
  for (std::size_t k : {std::size_t{0}, std::size_t{2}}) {
    if (!(std::abs(r.parameters[k]) > 2.0 * r.uncertainties[k]) ||
        !(std::abs(r.parameters[k]) > 1e-3 * total)) {
      r.warnings.push_back("degenerate biexponential: amplitude " + r.names[k] +
                           " not significant");
      break;
    }
  }
  if (!r.converged) r.warnings.push_back("degenerate biexponential: fit did not converge");
  return r;
}

FitResult fit_mims(const Dataset& data, std::optional<double> fixed_x, const FitOptions& options) {
  const Model model = mims_model();
  FitOptions opts = options;
  opts.fixed.assign(3, false);
  if (fixed_x) {
    if (!(*fixed_x > 0.0)) throw InvalidParameter("fit_mims: fixed x must be positive");
    opts.fixed[2] = true;
  }
  data.validate(fixed_x ? 2 : 3);
  FitResult r = nls_fit(model, mims_initial_guess(data, fixed_x), data, opts);
  const double t_m = r.parameters[1];
  if (t_m > 100.0 * data.x.back() || r.uncertainties[1] > std::abs(t_m))
    r.warnings.push_back("no significant decay: phase memory time unconstrained");
  return r;
}

FitResult fit_by_name(const std::string& model_name, const Dataset& data,
                      std::optional<double> fixed_x) {
  if (model_name == "lorentzian") return fit_lorentzian(data);
  if (model_name == "exponential") return fit_exponential(data);
  if (model_name == "biexponential") return fit_biexponential(data);
  if (model_name == "mims") return fit_mims(data, fixed_x);
  throw InvalidParameter("unknown model '" + model_name +
                         "' (expected lorentzian, exponential, biexponential, mims)");
}

StitchResult stitch_scans(const std::vector<Dataset>& scans) {
  const std::size_t s = scans.size();
  if (s == 0) throw InvalidParameter("stitch_scans: no scans");
  for (const auto& scan : scans) scan.validate(1);

  struct Row {
    std::size_t a, b;
    double ya, yb;
  };
  std::vector<Row> rows;
  std::vector<std::size_t> parent(s);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  auto interpolate = [](const Dataset& d, double x) {
    const auto it = std::lower_bound(d.x.begin(), d.x.end(), x);
    const auto j = static_cast<std::size_t>(it - d.x.begin());
    if (j < d.size() && d.x[j] == x) return d.y[j];
    const double t = (x - d.x[j - 1]) / (d.x[j] - d.x[j - 1]);
    return d.y[j - 1] + t * (d.y[j] - d.y[j - 1]);
  };
  for (std::size_t a = 0; a < s; ++a) {
    for (std::size_t b = a + 1; b < s; ++b) {
      const double lo = std::max(scans[a].x.front(), scans[b].x.front());
      const double hi = std::min(scans[a].x.back(), scans[b].x.back());
      if (!(hi > lo)) continue;
      auto inside = [&](const Dataset& d) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d.size(); ++i)
          if (d.x[i] >= lo && d.x[i] <= hi) idx.push_back(i);
        return idx;
      };
      const auto in_a = inside(scans[a]);
      const auto in_b = inside(scans[b]);
      if (in_a.size() < 3 || in_b.size() < 3) continue;
      for (std::size_t i : in_a) rows.push_back({a, b, scans[a].y[i], interpolate(scans[b], scans[a].x[i])});
      for (std::size_t i : in_b) rows.push_back({a, b, interpolate(scans[a], scans[b].x[i]), scans[b].y[i]});
      parent[find(a)] = find(b);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t v = 0; v < s; ++v) components[find(v)].push_back(v);
  if (components.size() > 1) {
    std::ostringstream msg;
    msg << "stitch_scans: overlap graph is disconnected; components:";
    for (const auto& [root, members] : components) {
      msg << " {";
      for (std::size_t k = 0; k < members.size(); ++k) msg << (k ? "," : "") << members[k];
      msg << "}";
    }
    throw ConfigError(msg.str());
  }

  std::vector<double> gains(s, 1.0);
  if (s > 1) {
    // Rows: g_a y_a - g_b y_b = 0 with g_0 = 1 moved to the right-hand side. Each
    // row is divided by its magnitude so that bright overlaps cannot outvote the
    // rows tying the free scans to scan 0 (which would shrink every free gain).
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows.size(), s - 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& row = rows[k];
      const double norm = std::hypot(row.ya, row.yb);
      if (!(norm > 0.0)) continue;
      if (row.a == 0) rhs(k) -= row.ya / norm;
      else design(k, row.a - 1) += row.ya / norm;
      if (row.b == 0) rhs(k) += row.yb / norm;
      else design(k, row.b - 1) -= row.yb / norm;
    }
    const Eigen::VectorXd g = design.colPivHouseholderQr().solve(rhs);
    for (std::size_t k = 1; k < s; ++k) gains[k] = g(k - 1);
  }

  struct Point {
    double x, y, err;
  };
  const bool have_errors =
      std::all_of(scans.begin(), scans.end(), [](const Dataset& d) { return d.y_err.has_value(); });
  std::vector<Point> points;
  for (std::size_t k = 0; k < s; ++k)
    for (std::size_t i = 0; i < scans[k].size(); ++i)
      points.push_back({scans[k].x[i], gains[k] * scans[k].y[i],
                        have_errors ? std::abs(gains[k]) * (*scans[k].y_err)[i] : 0.0});
  std::stable_sort(points.begin(), points.end(),
                   [](const Point& l, const Point& r) { return l.x < r.x; });

  StitchResult out;
  out.gains = gains;
  std::vector<double> errs;
  for (std::size_t i = 0; i < points.size();) {
    std::size_t j = i;
    double sy = 0.0, se2 = 0.0;
    while (j < points.size() && points[j].x == points[i].x) {
      sy += points[j].y;
      se2 += points[j].err * points[j].err;
      ++j;
    }
    const double count = static_cast<double>(j - i);
    out.merged.x.push_back(points[i].x);
    out.merged.y.push_back(sy / count);
    errs.push_back(std::sqrt(se2) / count);
    i = j;
  }
  if (have_errors) out.merged.y_err = std::move(errs);
  return out;
}

}  // namespace reqmem::fit
