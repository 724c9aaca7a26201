#pragma once

#include <string>
#include <vector>

#include "dbmt/covariance.hpp"
#include "dbmt/error.hpp"
#include "dbmt/field.hpp"

namespace dbmt {

/// Binned semivariogram estimate of one channel. Only non-empty bins are kept.
struct EmpiricalVariogram {
  /// Mean pair distance within each bin.
  std::vector<double> lags;
  std::vector<double> gamma;
  std::vector<double> counts;

  std::size_t size() const { return lags.size(); }
};

/// One estimate per channel: γ̂(h) = mean of (x_{s'} − x_s)² / 2 over pixel pairs
/// whose distance (pixel centers on the unit square) falls in the bin.
std::vector<EmpiricalVariogram> empirical_variogram(const Field& image, int n_bins = 16,
                                                    double max_lag = 0.5);

struct VariogramFitOptions {
  double min_length_scale = 1e-3;
  double max_length_scale = 10.0;
  int grid_length_scales = 25;
  int grid_variances = 9;
  int max_iterations = 4000;
  /// Simplex size (in log-parameter units) at which the search stops.
  double tolerance = 1e-10;
};

struct VariogramFit {
  Kernel kernel;
  double objective = 0.0;
  /// Length-scale pinned at the lower search bound (flat, white-noise-like variogram).
  bool at_lower_bound = false;
  int iterations = 0;
};

/// Cressie weighted least-squares objective Σ N(h) (γ̂(h) − γ(h))² / γ(h)².
double wls_objective(const EmpiricalVariogram& emp, const Kernel& kernel);

/// Grid-seeded Nelder–Mead over (log σ², log θ).
VariogramFit fit_variogram_wls(const EmpiricalVariogram& emp, Kernel::Family family,
                               const VariogramFitOptions& options = {});

/// Thrown when the local search exhausts its iteration cap; carries the best point.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, VariogramFit best)
      : NumericalError(what), best_(std::move(best)) {}
  const VariogramFit& best() const { return best_; }

 private:
  VariogramFit best_;
};

}  // namespace dbmt
