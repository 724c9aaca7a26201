#pragma once

#include <cmath>
#include <functional>

#include "dbmt/covariance.hpp"
#include "dbmt/random.hpp"
#include "dbmt/sde_core.hpp"

namespace dbmt::testing {

inline Matrix random_spd(Eigen::Index d, Rng& rng) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = rng.gaussian();
  return a * a.transpose() / static_cast<double>(d) + 0.5 * Matrix::Identity(d, d);
}

inline Vector random_vector(Eigen::Index d, Rng& rng, double scale = 1.0) {
  return scale * rng.gaussian_vector(d);
}

/// Central differences of f at x, step h.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-5) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// The three β families at moderate parameters.
inline std::vector<BetaSchedule> all_schedules() {
  return {BetaSchedule::constant(1.3), BetaSchedule::linear_vp(0.1, 20.0),
          BetaSchedule::geometric_ve(0.01, 5.0)};
}

/// Dense-Γ specs: BM and OU (both signs of α) under each β family.
inline std::vector<SdeSpec> dense_specs(Eigen::Index d, Rng& rng, double tau = 1.0) {
  std::vector<SdeSpec> out;
  const auto gamma = CovarianceOperator::dense(random_spd(d, rng));
  for (const auto& s : all_schedules()) {
    out.push_back(SdeSpec::brownian(s, gamma, tau));
    out.push_back(SdeSpec::ornstein_uhlenbeck(-0.5, s, gamma, tau));
    out.push_back(SdeSpec::ornstein_uhlenbeck(0.5, s, gamma, tau));
  }
  return out;
}

}  // namespace dbmt::testing
