#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dbmt/random.hpp"
#include "dbmt/types.hpp"

namespace dbmt {

/// Stationary isotropic covariance function k(‖s − s'‖) on the unit square.
struct Kernel {
  enum class Family { WhiteNoise, Exponential, Rbf };

  Family family = Family::WhiteNoise;
  double variance = 1.0;
  /// Length-scale in unit-domain coordinates; unused by WhiteNoise.
  double length_scale = 1.0;

  static Kernel white_noise(double variance);
  static Kernel exponential(double variance, double length_scale);
  static Kernel rbf(double variance, double length_scale);

  double operator()(double distance) const;
  /// γ(h) = k(0) − k(h), the semivariogram of the field at lag h > 0.
  double semivariogram(double h) const;
};

std::string to_string(Kernel::Family family);
Kernel::Family kernel_family_from_string(const std::string& name);

/// Diagnostics recorded while building a spectral operator.
struct SpectrumReport {
  double max_eigenvalue = 0.0;
  double min_eigenvalue = 0.0;
  /// Eigenvalues in (−tol, 0) set to zero.
  std::size_t clipped_small = 0;
  /// Eigenvalues ≤ −tol set to zero (truncation mode only).
  std::size_t truncated = 0;
  int doublings = 0;
  Eigen::Index embedding_rows = 0;
  Eigen::Index embedding_cols = 0;
  /// Frobenius norm of (realized − target) covariance, nonzero only after clipping.
  double covariance_error = 0.0;
  std::vector<std::string> warnings;
};

/// Grid shape of a spatial operator; values are stored row-major, channel-last:
/// element (i, j, c) lives at index (i * width + j) * channels + c.
struct GridShape {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Eigen::Index channels = 0;
  Eigen::Index size() const { return height * width * channels; }
};

namespace detail {
struct FieldCache;
class CovarianceImpl;
}  // namespace detail

/// The spatial covariance Γ: apply, inverse-apply, log-determinant and
/// Γ^{1/2}-sampling. Immutable after construction and cheap to copy.
class CovarianceOperator {
 public:
  enum class Backing { Identity, Dense, CirculantTorus, CirculantPlane };

  CovarianceOperator();  // identity of dimension 1

  static CovarianceOperator identity(Eigen::Index dim);
  /// Throws NumericalError if `cov` is not symmetric positive definite.
  static CovarianceOperator dense(const Matrix& cov);

  Eigen::Index dim() const;
  Backing backing() const;
  bool is_identity() const { return backing() == Backing::Identity; }
  /// Grid shape for circulant backings; {dim, 1, 1} otherwise.
  GridShape shape() const;

  Vector apply(const Vector& x) const;
  Vector solve(const Vector& x) const;
  double logdet() const;
  double trace_inverse() const;
  /// One draw of Γ^{1/2}ξ, ξ standard normal. The spare CEM field is discarded;
  /// use CovarianceSampler to keep it.
  Vector sqrt_sample(Rng& rng) const;

  /// Dense Γ obtained by applying the operator to every basis vector.
  Matrix materialize() const;

  const SpectrumReport& report() const;

  /// Backing-specific access used by CovarianceSampler.
  const detail::CovarianceImpl& impl() const { return *impl_; }

 private:
  explicit CovarianceOperator(std::shared_ptr<const detail::CovarianceImpl> impl);
  std::shared_ptr<const detail::CovarianceImpl> impl_;

  friend CovarianceOperator build_torus_operator(const Kernel&, Eigen::Index, Eigen::Index,
                                                 Eigen::Index, bool);
  friend CovarianceOperator embed_plane_operator(const Kernel&, Eigen::Index, Eigen::Index,
                                                 Eigen::Index, int, bool);
};

/// Block-circulant Γ of independent channels on the H×W torus.
CovarianceOperator build_torus_operator(const Kernel& kernel, Eigen::Index height,
                                        Eigen::Index width, Eigen::Index channels,
                                        bool allow_truncation = false);

/// Exact plane covariance on the H×W patch through circulant embedding.
/// Sampling only: apply/solve/logdet throw UnsupportedError.
CovarianceOperator embed_plane_operator(const Kernel& kernel, Eigen::Index height,
                                        Eigen::Index width, Eigen::Index channels,
                                        int max_doublings, bool allow_truncation);

/// Dense kernel matrix on the H×W grid (torus or plane distance), channel-last.
Matrix dense_kernel_matrix(const Kernel& kernel, Eigen::Index height, Eigen::Index width,
                           Eigen::Index channels, bool torus);

/// Stateful sampler: keeps the second field that a complex CEM draw yields.
/// One instance per thread.
class CovarianceSampler {
 public:
  explicit CovarianceSampler(CovarianceOperator op);
  ~CovarianceSampler();
  CovarianceSampler(CovarianceSampler&&) noexcept;
  CovarianceSampler& operator=(CovarianceSampler&&) noexcept;

  Vector sample(Rng& rng);
  const CovarianceOperator& op() const { return op_; }

 private:
  CovarianceOperator op_;
  std::unique_ptr<detail::FieldCache> cache_;
};

}  // namespace dbmt
