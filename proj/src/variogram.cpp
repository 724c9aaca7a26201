#include "dbmt/variogram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace dbmt {

std::vector<EmpiricalVariogram> empirical_variogram(const Field& image, int n_bins,
                                                    double max_lag) {
  const auto [h, w, nc] = image.shape;
  if (h < 2 || w < 2) throw DomainError("variogram: image must be at least 2x2");
  if (n_bins < 1) throw DomainError("variogram: n_bins must be >= 1");
  if (!(max_lag > 0.0)) throw DomainError("variogram: max_lag must be > 0");

  const double bin_width = max_lag / n_bins;
  std::vector<EmpiricalVariogram> out(static_cast<std::size_t>(nc));
  std::vector<double> sums(static_cast<std::size_t>(n_bins * nc));
  std::vector<double> counts(static_cast<std::size_t>(n_bins));
  std::vector<double> dist_sums(static_cast<std::size_t>(n_bins));

  // Each unordered pixel pair once: lags with di > 0, or di == 0 and dj > 0.
  for (Eigen::Index di = 0; di < h; ++di) {
    for (Eigen::Index dj = -(w - 1); dj < w; ++dj) {
      if (di == 0 && dj <= 0) continue;
      const double dy = static_cast<double>(di) / static_cast<double>(h);
      const double dx = static_cast<double>(dj) / static_cast<double>(w);
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (dist > max_lag) continue;
      const int bin = std::min(static_cast<int>(dist / bin_width), n_bins - 1);
      const Eigen::Index j0 = std::max<Eigen::Index>(0, -dj);
      const Eigen::Index j1 = std::min(w, w - dj);
      const double pairs = static_cast<double>((h - di) * (j1 - j0));
      counts[bin] += pairs;
      dist_sums[bin] += pairs * dist;
      for (Eigen::Index c = 0; c < nc; ++c) {
        double s = 0.0;
        for (Eigen::Index i = 0; i + di < h; ++i) {
          for (Eigen::Index j = j0; j < j1; ++j) {
            const double d = image.at(i + di, j + dj, c) - image.at(i, j, c);
            s += d * d;
          }
        }
        sums[static_cast<std::size_t>(bin * nc + c)] += 0.5 * s;
      }
    }
  }

  for (Eigen::Index c = 0; c < nc; ++c) {
    auto& emp = out[static_cast<std::size_t>(c)];
    for (int b = 0; b < n_bins; ++b) {
      if (counts[b] < 1.0) continue;
      emp.lags.push_back(dist_sums[b] / counts[b]);
      emp.gamma.push_back(sums[static_cast<std::size_t>(b * nc + c)] / counts[b]);
      emp.counts.push_back(counts[b]);
    }
  }
  return out;
}

double wls_objective(const EmpiricalVariogram& emp, const Kernel& kernel) {
  double f = 0.0;
  for (std::size_t k = 0; k < emp.size(); ++k) {
    const double model = kernel.semivariogram(emp.lags[k]);
    if (!(model > 0.0)) return std::numeric_limits<double>::infinity();
    const double r = emp.gamma[k] - model;
    f += emp.counts[k] * r * r / (model * model);
  }
  return f;
}

namespace {

struct SearchBox {
  Kernel::Family family;
  const EmpiricalVariogram* emp;
  double lo[2];
  double hi[2];

  /// Parameters are (log σ², log θ), clamped into the box.
  Kernel kernel_at(double log_var, double log_len) const {
    const double a = std::clamp(log_var, lo[0], hi[0]);
    const double b = std::clamp(log_len, lo[1], hi[1]);
    Kernel k;
    k.family = family;
    k.variance = std::exp(a);
    k.length_scale = std::exp(b);
    return k;
  }
  /// Outside the box the clamped objective is flat, so a quadratic wall pulls the
  /// simplex back; otherwise a flat variogram never lets it contract.
  double objective(double log_var, double log_len) const {
    const double da = log_var - std::clamp(log_var, lo[0], hi[0]);
    const double db = log_len - std::clamp(log_len, lo[1], hi[1]);
    return wls_objective(*emp, kernel_at(log_var, log_len)) + da * da + db * db;
  }
};

double gsl_objective(const gsl_vector* x, void* params) {
  const auto* box = static_cast<const SearchBox*>(params);
  return box->objective(gsl_vector_get(x, 0), gsl_vector_get(x, 1));
}

struct MinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

}  // namespace

VariogramFit fit_variogram_wls(const EmpiricalVariogram& emp, Kernel::Family family,
                               const VariogramFitOptions& options) {
  if (family == Kernel::Family::WhiteNoise)
    throw DomainError("variogram fit: family must be exponential or rbf");
  if (emp.size() < 3) throw DomainError("variogram fit: need at least 3 retained bins");
  const double scale = *std::max_element(emp.gamma.begin(), emp.gamma.end());
  if (!(scale > 0.0)) throw DomainError("variogram fit: empirical variogram is identically zero");

  static const bool handler_off = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)handler_off;

  SearchBox box{family,
                &emp,
                {std::log(scale) - std::log(1e4), std::log(options.min_length_scale)},
                {std::log(scale) + std::log(1e4), std::log(options.max_length_scale)}};

  // Seeding grid: θ log-spaced over the box, σ² at powers of two around the sill scale.
  double best_f = std::numeric_limits<double>::infinity();
  double seed[2] = {std::log(scale), box.lo[1]};
  const int nv = std::max(options.grid_variances, 1);
  const int nl = std::max(options.grid_length_scales, 2);
  for (int iv = 0; iv < nv; ++iv) {
    const double lv = std::log(scale) + std::log(2.0) * (iv - (nv - 1) / 2.0);
    for (int il = 0; il < nl; ++il) {
      const double ll = box.lo[1] + (box.hi[1] - box.lo[1]) * il / (nl - 1.0);
      const double f = box.objective(lv, ll);
      if (f < best_f) {
        best_f = f;
        seed[0] = lv;
        seed[1] = ll;
      }
    }
  }

  gsl_multimin_function fn{&gsl_objective, 2, &box};
  std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(2));
  std::unique_ptr<gsl_vector, VectorDeleter> step(gsl_vector_alloc(2));
  gsl_vector_set(x.get(), 0, seed[0]);
  gsl_vector_set(x.get(), 1, seed[1]);
  gsl_vector_set_all(step.get(), 0.25);
  std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> nm(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2));
  gsl_multimin_fminimizer_set(nm.get(), &fn, x.get(), step.get());

  VariogramFit fit;
  bool converged = false;
  int iter = 0;
  // A flat valley (θ far below every lag) never shrinks the simplex; treat a long
  // stall of the best value as convergence too.
  double best_seen = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (gsl_multimin_fminimizer_iterate(nm.get()) != GSL_SUCCESS) break;
    const double size = gsl_multimin_fminimizer_size(nm.get());
    if (gsl_multimin_test_size(size, options.tolerance) == GSL_SUCCESS) {
      converged = true;
      break;
    }
    const double f = gsl_multimin_fminimizer_minimum(nm.get());
    if (f < best_seen - 1e-14 * (1.0 + std::abs(best_seen))) {
      best_seen = f;
      stalled = 0;
    } else if (++stalled >= 400) {
      converged = true;
      break;
    }
  }
  const gsl_vector* xm = gsl_multimin_fminimizer_x(nm.get());
  fit.kernel = box.kernel_at(gsl_vector_get(xm, 0), gsl_vector_get(xm, 1));
  fit.objective = wls_objective(emp, fit.kernel);
  fit.iterations = iter + 1;

  // A variogram flat at the resolved lags is matched at least as well at the lower bound.
  Kernel pinned = fit.kernel;
  pinned.length_scale = options.min_length_scale;
  const double pinned_f = wls_objective(emp, pinned);
  if (pinned_f <= fit.objective) {
    fit.kernel = pinned;
    fit.objective = pinned_f;
  }
  fit.at_lower_bound = fit.kernel.length_scale <= options.min_length_scale * 1.01;

  if (!converged) {
    throw FitError("variogram fit did not converge within " +
                       std::to_string(options.max_iterations) + " iterations",
                   fit);
  }
  return fit;
}

}  // namespace dbmt
