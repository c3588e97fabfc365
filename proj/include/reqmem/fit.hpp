#pragma once

// Damped Gauss-Newton least squares and the line/decay models used throughout
// the toolkit.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace reqmem::fit {

struct Dataset {
  std::vector<double> x;
  std::vector<double> y;
  std::optional<std::vector<double>> y_err;

  std::size_t size() const { return x.size(); }
  /// Checks equal lengths, strictly increasing x, positive errors and enough
  /// points for `parameter_count` parameters.
  void validate(std::size_t parameter_count) const;
};

struct Model {
  std::string name;
  std::vector<std::string> parameter_names;
  std::function<double(double x, std::span<const double> p)> evaluate;
  /// Characteristic magnitude of parameter i at p, used to size difference steps.
  std::function<double(std::span<const double> p, std::size_t i)> step_scale;

  std::size_t parameter_count() const { return parameter_names.size(); }
};

struct FitOptions {
  int max_iterations = 200;
  /// Convergence threshold on the largest cosine between the residual vector and a
  /// Jacobian column.
  double tolerance = 1e-7;
  double initial_damping = 1e-3;
  double damping_increase = 10.0;
  double damping_decrease = 0.1;
  /// Parameters held at their initial value.
  std::vector<bool> fixed;
};

struct FitResult {
  std::string model;
  std::vector<std::string> names;
  std::vector<double> parameters;
  /// sqrt(diag(covariance)); zero for fixed parameters.
  std::vector<double> uncertainties;
  /// (J^T W J)^-1 scaled by the reduced chi-square.
  Eigen::MatrixXd covariance;
  double residual_norm = 0.0;
  double reduced_chi_square = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;

  double value(const std::string& name) const;
  double uncertainty(const std::string& name) const;
};

/// Central-difference Jacobian, rows = data points, columns = parameters.
Eigen::MatrixXd finite_difference_jacobian(const Model& model, std::span<const double> params,
                                           std::span<const double> x);

/// Levenberg-Marquardt style damped Gauss-Newton with multiplicative damping.
/// Returns converged = false with the best parameters seen when the iteration
/// budget runs out; throws NumericError if the normal equations never became
/// solvable.
FitResult nls_fit(const Model& model, std::vector<double> initial, const Dataset& data,
                  const FitOptions& options = {});

// Models. Parameter order is the order listed.
Model lorentzian_model();      // center, fwhm, amplitude (peak height above offset), offset
Model exponential_model();     // amplitude, tau, offset
Model biexponential_model();   // a1, tau1, a2, tau2, offset
Model mims_model();            // i0, t_m, x : i0 exp(-(4 tau / t_m)^x)

std::vector<double> lorentzian_initial_guess(const Dataset& data);
std::vector<double> exponential_initial_guess(const Dataset& data);
std::vector<double> biexponential_initial_guess(const Dataset& data);
std::vector<double> mims_initial_guess(const Dataset& data, std::optional<double> fixed_x);

FitResult fit_lorentzian(const Dataset& data, const FitOptions& options = {});
FitResult fit_exponential(const Dataset& data, const FitOptions& options = {});
/// Reports tau1 < tau2; warns when tau2 / tau1 <= 3 or a component is not significant.
FitResult fit_biexponential(const Dataset& data, const FitOptions& options = {});
FitResult fit_mims(const Dataset& data, std::optional<double> fixed_x = std::nullopt,
                   const FitOptions& options = {});

/// Fits by model name: lorentzian, exponential, biexponential, mims.
FitResult fit_by_name(const std::string& model_name, const Dataset& data,
                      std::optional<double> fixed_x = std::nullopt);

struct StitchResult {
  Dataset merged;
  std::vector<double> gains;  // gains[0] == 1
};

/// Solves per-scan multiplicative gains from overlap regions (first scan fixed)
/// and merges the rescaled scans, averaging coincident x values. Throws
/// ConfigError if the overlap graph is disconnected.
StitchResult stitch_scans(const std::vector<Dataset>& scans);

}  // namespace reqmem::fit
