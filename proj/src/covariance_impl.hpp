#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "dbmt/covariance.hpp"
#include "fft.hpp"

namespace dbmt::detail {

/// Spare single-channel field left over from a complex CEM draw.
struct FieldCache {
  std::vector<double> field;
  bool valid = false;
};

class CovarianceImpl {
 public:
  virtual ~CovarianceImpl() = default;

  virtual CovarianceOperator::Backing backing() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual GridShape shape() const { return {dim(), 1, 1}; }
  virtual Vector apply(const Vector& x) const = 0;
  virtual Vector solve(const Vector& x) const = 0;
  virtual double logdet() const = 0;
  virtual double trace_inverse() const = 0;
  /// `cache` may be null, in which case spare fields are dropped.
  virtual Vector sample(Rng& rng, FieldCache* cache) const = 0;

  const SpectrumReport& report() const { return report_; }

 protected:
  SpectrumReport report_;
};

class IdentityCovariance final : public CovarianceImpl {
 public:
  explicit IdentityCovariance(Eigen::Index dim) : dim_(dim) {}
  CovarianceOperator::Backing backing() const override {
    return CovarianceOperator::Backing::Identity;
  }
  Eigen::Index dim() const override { return dim_; }
  Vector apply(const Vector& x) const override { return x; }
  Vector solve(const Vector& x) const override { return x; }
  double logdet() const override { return 0.0; }
  double trace_inverse() const override { return static_cast<double>(dim_); }
  Vector sample(Rng& rng, FieldCache*) const override { return rng.gaussian_vector(dim_); }

 private:
  Eigen::Index dim_;
};

class DenseCovariance final : public CovarianceImpl {
 public:
  explicit DenseCovariance(const Matrix& cov);
  CovarianceOperator::Backing backing() const override {
    return CovarianceOperator::Backing::Dense;
  }
  Eigen::Index dim() const override { return cov_.rows(); }
  Vector apply(const Vector& x) const override { return cov_ * x; }
  Vector solve(const Vector& x) const override { return llt_.solve(x); }
  double logdet() const override { return logdet_; }
  double trace_inverse() const override { return trace_inverse_; }
  Vector sample(Rng& rng, FieldCache*) const override;

 private:
  Matrix cov_;
  Eigen::LLT<Matrix> llt_;
  double logdet_ = 0.0;
  double trace_inverse_ = 0.0;
};

/// Block-circulant covariance on an embedding grid of rows×cols per channel,
/// observed on the leading height×width window. When the window equals the
/// embedding grid (torus) apply/solve/logdet are exact.
class CirculantCovariance final : public CovarianceImpl {
 public:
  CirculantCovariance(GridShape window, Eigen::Index rows, Eigen::Index cols,
                      std::vector<double> spectrum, SpectrumReport report);

  CovarianceOperator::Backing backing() const override;
  Eigen::Index dim() const override { return window_.size(); }
  GridShape shape() const override { return window_; }
  Vector apply(const Vector& x) const override;
  Vector solve(const Vector& x) const override;
  double logdet() const override;
  double trace_inverse() const override;
  Vector sample(Rng& rng, FieldCache* cache) const override;

  bool is_torus() const { return rows_ == window_.height && cols_ == window_.width; }
  const std::vector<double>& spectrum() const { return spectrum_; }

 private:
  void require_torus(const char* what) const;
  void require_positive(const char* what) const;
  /// Multiplies every channel's spectrum by `factor(eigenvalue)`.
  template <class F>
  Vector spectral_map(const Vector& x, F factor) const;
  /// Fills `first` and `second` with two independent window fields.
  void draw_pair(Rng& rng, std::vector<double>& first, std::vector<double>& second) const;

  GridShape window_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  std::vector<double> spectrum_;
  std::vector<double> sample_scale_;
  std::unique_ptr<Fft2d> fft_;
};

}  // namespace dbmt::detail
