#include "dbmt/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "covariance_impl.hpp"
#include "dbmt/error.hpp"

namespace dbmt {

// ---------------------------------------------------------------------------
// Kernel

Kernel Kernel::white_noise(double variance) {
  if (!(variance > 0.0)) throw DomainError("kernel variance must be > 0");
  return {Family::WhiteNoise, variance, 1.0};
}

Kernel Kernel::exponential(double variance, double length_scale) {
  if (!(variance > 0.0) || !(length_scale > 0.0))
    throw DomainError("kernel variance and length-scale must be > 0");
  return {Family::Exponential, variance, length_scale};
}

Kernel Kernel::rbf(double variance, double length_scale) {
  if (!(variance > 0.0) || !(length_scale > 0.0))
    throw DomainError("kernel variance and length-scale must be > 0");
  return {Family::Rbf, variance, length_scale};
}

double Kernel::operator()(double distance) const {
  switch (family) {
    case Family::WhiteNoise:
      return distance <= 0.0 ? variance : 0.0;
    case Family::Exponential:
      return variance * std::exp(-distance / length_scale);
    case Family::Rbf:
      return variance * std::exp(-distance * distance / (2.0 * length_scale * length_scale));
  }
  return 0.0;
}

double Kernel::semivariogram(double h) const {
  if (h <= 0.0) return 0.0;
  return variance - (*this)(h);
}

std::string to_string(Kernel::Family family) {
  switch (family) {
    case Kernel::Family::WhiteNoise: return "white_noise";
    case Kernel::Family::Exponential: return "exponential";
    case Kernel::Family::Rbf: return "rbf";
  }
  return "unknown";
}

Kernel::Family kernel_family_from_string(const std::string& name) {
  if (name == "white_noise" || name == "white") return Kernel::Family::WhiteNoise;
  if (name == "exponential" || name == "exp") return Kernel::Family::Exponential;
  if (name == "rbf") return Kernel::Family::Rbf;
  throw ConfigError("unknown kernel family '" + name + "'");
}

namespace detail {

// ---------------------------------------------------------------------------
// Dense

DenseCovariance::DenseCovariance(const Matrix& cov) : cov_(cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0)
    throw ConfigError("dense covariance must be a non-empty square matrix");
  const double scale = cov.cwiseAbs().maxCoeff();
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericalError("dense covariance is not symmetric");
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success)
    throw NumericalError("dense covariance is not positive definite (Cholesky failed)");
  const Matrix& l = llt_.matrixLLT();
  logdet_ = 2.0 * l.diagonal().array().log().sum();
  trace_inverse_ = llt_.solve(Matrix::Identity(cov.rows(), cov.cols())).trace();
}

Vector DenseCovariance::sample(Rng& rng, FieldCache*) const {
  return llt_.matrixL() * rng.gaussian_vector(cov_.rows());
}

// ---------------------------------------------------------------------------
// Circulant

CirculantCovariance::CirculantCovariance(GridShape window, Eigen::Index rows, Eigen::Index cols,
                                         std::vector<double> spectrum, SpectrumReport report)
    : window_(window),
      rows_(rows),
      cols_(cols),
      spectrum_(std::move(spectrum)),
      fft_(std::make_unique<Fft2d>(rows, cols)) {
  report_ = std::move(report);
  const double m = static_cast<double>(rows_ * cols_);
  sample_scale_.resize(spectrum_.size());
  for (std::size_t k = 0; k < spectrum_.size(); ++k)
    sample_scale_[k] = std::sqrt(std::max(spectrum_[k], 0.0) / m);
}

CovarianceOperator::Backing CirculantCovariance::backing() const {
  return is_torus() ? CovarianceOperator::Backing::CirculantTorus
                    : CovarianceOperator::Backing::CirculantPlane;
}

void CirculantCovariance::require_torus(const char* what) const {
  if (!is_torus())
    throw UnsupportedError(std::string(what) +
                           " is only exact on the torus; plane-embedded operators sample only");
}

void CirculantCovariance::require_positive(const char* what) const {
  if (*std::min_element(spectrum_.begin(), spectrum_.end()) <= 0.0)
    throw SingularOperatorError(std::string(what) + ": spectrum has zero eigenvalues");
}

template <class F>
Vector CirculantCovariance::spectral_map(const Vector& x, F factor) const {
  if (x.size() != dim()) throw ConfigError("covariance operator: vector length mismatch");
  const Eigen::Index m = rows_ * cols_;
  const Eigen::Index nc = window_.channels;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(m));
  Vector out(x.size());
  for (Eigen::Index c = 0; c < nc; ++c) {
    for (Eigen::Index p = 0; p < m; ++p) buf[p] = x[p * nc + c];
    fft_->forward(buf.data());
    for (Eigen::Index p = 0; p < m; ++p) buf[p] *= factor(spectrum_[p]);
    fft_->backward(buf.data());
    for (Eigen::Index p = 0; p < m; ++p) out[p * nc + c] = buf[p].real() / static_cast<double>(m);
  }
  return out;
}

Vector CirculantCovariance::apply(const Vector& x) const {
  require_torus("apply");
  return spectral_map(x, [](double lam) { return lam; });
}

Vector CirculantCovariance::solve(const Vector& x) const {
  require_torus("solve");
  require_positive("solve");
  return spectral_map(x, [](double lam) { return 1.0 / lam; });
}

double CirculantCovariance::logdet() const {
  require_torus("logdet");
  require_positive("logdet");
  double s = 0.0;
  for (double lam : spectrum_) s += std::log(lam);
  return static_cast<double>(window_.channels) * s;
}

double CirculantCovariance::trace_inverse() const {
  require_torus("trace_inverse");
  require_positive("trace_inverse");
  double s = 0.0;
  for (double lam : spectrum_) s += 1.0 / lam;
  return static_cast<double>(window_.channels) * s;
}

void CirculantCovariance::draw_pair(Rng& rng, std::vector<double>& first,
                                    std::vector<double>& second) const {
  const Eigen::Index m = rows_ * cols_;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(m));
  for (Eigen::Index p = 0; p < m; ++p) {
    const double re = rng.gaussian();
    const double im = rng.gaussian();
    buf[p] = sample_scale_[p] * std::complex<double>(re, im);
  }
  fft_->forward(buf.data());
  const Eigen::Index h = window_.height;
  const Eigen::Index w = window_.width;
  first.resize(static_cast<std::size_t>(h * w));
  second.resize(static_cast<std::size_t>(h * w));
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      const auto& z = buf[i * cols_ + j];
      first[i * w + j] = z.real();
      second[i * w + j] = z.imag();
    }
  }
}

Vector CirculantCovariance::sample(Rng& rng, FieldCache* cache) const {
  const Eigen::Index nc = window_.channels;
  const Eigen::Index pixels = window_.height * window_.width;
  Vector out(dim());
  std::vector<double> first;
  std::vector<double> second;
  for (Eigen::Index c = 0; c < nc; ++c) {
    const std::vector<double>* field = nullptr;
    if (cache != nullptr && cache->valid) {
      first.swap(cache->field);
      cache->valid = false;
      field = &first;
    } else {
      draw_pair(rng, first, second);
      if (cache != nullptr) {
        cache->field = second;
        cache->valid = true;
      }
      field = &first;
    }
    for (Eigen::Index p = 0; p < pixels; ++p) out[p * nc + c] = (*field)[p];
  }
  return out;
}

namespace {

double axis_lag(Eigen::Index index, Eigen::Index period) {
  return static_cast<double>(std::min(index, period - index));
}

/// Base row of the rows×cols block circulant whose lags are scaled by the
/// pixel spacing 1/height, 1/width.
std::vector<double> circulant_base_row(const Kernel& kernel, Eigen::Index rows,
                                       Eigen::Index cols, Eigen::Index height,
                                       Eigen::Index width) {
  std::vector<double> base(static_cast<std::size_t>(rows * cols));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double dy = axis_lag(i, rows) / static_cast<double>(height);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double dx = axis_lag(j, cols) / static_cast<double>(width);
      base[i * cols + j] = kernel(std::sqrt(dx * dx + dy * dy));
    }
  }
  return base;
}

std::vector<double> real_spectrum(const std::vector<double>& base, const Fft2d& fft) {
  std::vector<std::complex<double>> buf(base.begin(), base.end());
  fft.forward(buf.data());
  std::vector<double> lam(buf.size());
  for (std::size_t k = 0; k < buf.size(); ++k) lam[k] = buf[k].real();
  return lam;
}

std::vector<double> base_row_from_spectrum(const std::vector<double>& lam, const Fft2d& fft) {
  std::vector<std::complex<double>> buf(lam.begin(), lam.end());
  fft.backward(buf.data());
  std::vector<double> base(buf.size());
  const double m = static_cast<double>(buf.size());
  for (std::size_t k = 0; k < buf.size(); ++k) base[k] = buf[k].real() / m;
  return base;
}

std::size_t count_negative(const std::vector<double>& lam, double tol) {
  return static_cast<std::size_t>(
      std::count_if(lam.begin(), lam.end(), [tol](double v) { return v <= -tol; }));
}

/// Clips the spectrum in place and fills the report's counters.
void clip_spectrum(std::vector<double>& lam, double tol, SpectrumReport& report) {
  for (double& v : lam) {
    if (v < 0.0) {
      if (v > -tol) {
        ++report.clipped_small;
      } else {
        ++report.truncated;
      }
      v = 0.0;
    }
  }
  if (report.clipped_small > 0) {
    std::ostringstream msg;
    msg << report.clipped_small << " eigenvalue(s) within tolerance below zero clipped to 0";
    report.warnings.push_back(msg.str());
  }
  if (report.truncated > 0) {
    std::ostringstream msg;
    msg << report.truncated << " negative eigenvalue(s) truncated to 0; covariance is approximate";
    report.warnings.push_back(msg.str());
  }
}

/// Smallest n' >= n whose only prime factors are 2, 3, 5 and 7 (fast FFT lengths).
Eigen::Index smooth_fft_size(Eigen::Index n) {
  for (Eigen::Index m = n;; ++m) {
    Eigen::Index r = m;
    for (Eigen::Index p : {2, 3, 5, 7})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

void validate_grid(Eigen::Index height, Eigen::Index width, Eigen::Index channels) {
  if (height < 2 || width < 2) throw DomainError("grid must be at least 2x2");
  if (channels < 1) throw DomainError("channel count must be >= 1");
}

}  // namespace
}  // namespace detail

// ---------------------------------------------------------------------------
// CovarianceOperator

CovarianceOperator::CovarianceOperator()
    : impl_(std::make_shared<detail::IdentityCovariance>(1)) {}

CovarianceOperator::CovarianceOperator(std::shared_ptr<const detail::CovarianceImpl> impl)
    : impl_(std::move(impl)) {}

CovarianceOperator CovarianceOperator::identity(Eigen::Index dim) {
  if (dim < 1) throw DomainError("covariance dimension must be >= 1");
  return CovarianceOperator(std::make_shared<detail::IdentityCovariance>(dim));
}

CovarianceOperator CovarianceOperator::dense(const Matrix& cov) {
  return CovarianceOperator(std::make_shared<detail::DenseCovariance>(cov));
}

Eigen::Index CovarianceOperator::dim() const { return impl_->dim(); }
CovarianceOperator::Backing CovarianceOperator::backing() const { return impl_->backing(); }
GridShape CovarianceOperator::shape() const { return impl_->shape(); }

Vector CovarianceOperator::apply(const Vector& x) const {
  if (x.size() != dim()) throw ConfigError("covariance apply: vector length mismatch");
  return impl_->apply(x);
}

Vector CovarianceOperator::solve(const Vector& x) const {
  if (x.size() != dim()) throw ConfigError("covariance solve: vector length mismatch");
  return impl_->solve(x);
}

double CovarianceOperator::logdet() const { return impl_->logdet(); }
double CovarianceOperator::trace_inverse() const { return impl_->trace_inverse(); }
Vector CovarianceOperator::sqrt_sample(Rng& rng) const { return impl_->sample(rng, nullptr); }
const SpectrumReport& CovarianceOperator::report() const { return impl_->report(); }

Matrix CovarianceOperator::materialize() const {
  const Eigen::Index n = dim();
  Matrix out(n, n);
  Vector e = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e[i] = 1.0;
    out.col(i) = apply(e);
    e[i] = 0.0;
  }
  return out;
}

CovarianceOperator build_torus_operator(const Kernel& kernel, Eigen::Index height,
                                        Eigen::Index width, Eigen::Index channels,
                                        bool allow_truncation) {
  detail::validate_grid(height, width, channels);
  detail::Fft2d fft(height, width);
  const auto base = detail::circulant_base_row(kernel, height, width, height, width);
  auto lam = detail::real_spectrum(base, fft);

  SpectrumReport report;
  report.embedding_rows = height;
  report.embedding_cols = width;
  report.max_eigenvalue = *std::max_element(lam.begin(), lam.end());
  report.min_eigenvalue = *std::min_element(lam.begin(), lam.end());
  if (!(report.max_eigenvalue > 0.0)) throw EmbeddingError("torus spectrum is not positive");
  const double tol = 1e-10 * report.max_eigenvalue;
  if (detail::count_negative(lam, tol) > 0 && !allow_truncation) {
    std::ostringstream msg;
    msg << "torus covariance is not positive semi-definite (min eigenvalue "
        << report.min_eigenvalue << "); enable truncation to clip";
    throw EmbeddingError(msg.str());
  }
  detail::clip_spectrum(lam, tol, report);
  if (report.clipped_small + report.truncated > 0) {
    const auto clipped_base = detail::base_row_from_spectrum(lam, fft);
    double sq = 0.0;
    for (std::size_t k = 0; k < base.size(); ++k) {
      const double d = clipped_base[k] - base[k];
      sq += d * d;
    }
    // Every lag appears once per row of an M×M circulant.
    report.covariance_error =
        std::sqrt(sq * static_cast<double>(height * width * channels));
  }
  GridShape window{height, width, channels};
  return CovarianceOperator(std::make_shared<detail::CirculantCovariance>(
      window, height, width, std::move(lam), std::move(report)));
}

CovarianceOperator embed_plane_operator(const Kernel& kernel, Eigen::Index height,
                                        Eigen::Index width, Eigen::Index channels,
                                        int max_doublings, bool allow_truncation) {
  detail::validate_grid(height, width, channels);
  if (max_doublings < 0) throw DomainError("max_doublings must be >= 0");

  // Minimal embedding 2H-2, padded up to an FFT-friendly length (254 = 2*127 is slow).
  Eigen::Index rows = detail::smooth_fft_size(2 * height - 2);
  Eigen::Index cols = detail::smooth_fft_size(2 * width - 2);
  for (int doubling = 0;; ++doubling, rows *= 2, cols *= 2) {
    auto fft = std::make_unique<detail::Fft2d>(rows, cols);
    const auto base = detail::circulant_base_row(kernel, rows, cols, height, width);
    auto lam = detail::real_spectrum(base, *fft);
    SpectrumReport report;
    report.doublings = doubling;
    report.embedding_rows = rows;
    report.embedding_cols = cols;
    report.max_eigenvalue = *std::max_element(lam.begin(), lam.end());
    report.min_eigenvalue = *std::min_element(lam.begin(), lam.end());
    if (!(report.max_eigenvalue > 0.0)) throw EmbeddingError("embedding spectrum is not positive");
    const double tol = 1e-10 * report.max_eigenvalue;
    const bool negative = detail::count_negative(lam, tol) > 0;
    if (negative && doubling < max_doublings) continue;
    if (negative && !allow_truncation) {
      std::ostringstream msg;
      msg << "circulant embedding still has negative eigenvalues (min " << report.min_eigenvalue
          << ") after " << doubling << " doubling(s); enable truncation or allow more doublings";
      throw EmbeddingError(msg.str());
    }
    detail::clip_spectrum(lam, tol, report);
    if (report.clipped_small + report.truncated > 0) {
      // Window covariance between pixels at lag (di, dj) is base[di mod rows, dj mod cols];
      // a lag occurs (H − |di|)(W − |dj|) times within the window.
      const auto clipped_base = detail::base_row_from_spectrum(lam, *fft);
      double sq = 0.0;
      for (Eigen::Index di = -(height - 1); di <= height - 1; ++di) {
        const Eigen::Index r = (di + rows) % rows;
        for (Eigen::Index dj = -(width - 1); dj <= width - 1; ++dj) {
          const Eigen::Index c = (dj + cols) % cols;
          const double d = clipped_base[r * cols + c] - base[r * cols + c];
          const double mult = static_cast<double>((height - std::abs(di)) * (width - std::abs(dj)));
          sq += mult * d * d;
        }
      }
      report.covariance_error = std::sqrt(sq * static_cast<double>(channels));
    }
    GridShape window{height, width, channels};
    return CovarianceOperator(std::make_shared<detail::CirculantCovariance>(
        window, rows, cols, std::move(lam), std::move(report)));
  }
}

Matrix dense_kernel_matrix(const Kernel& kernel, Eigen::Index height, Eigen::Index width,
                           Eigen::Index channels, bool torus) {
  const Eigen::Index pixels = height * width;
  Matrix out = Matrix::Zero(pixels * channels, pixels * channels);
  auto axis = [torus](Eigen::Index a, Eigen::Index b, Eigen::Index n) {
    double d = std::abs(static_cast<double>(a - b)) / static_cast<double>(n);
    return torus ? std::min(d, 1.0 - d) : d;
  };
  for (Eigen::Index p = 0; p < pixels; ++p) {
    for (Eigen::Index q = 0; q < pixels; ++q) {
      const double dy = axis(p / width, q / width, height);
      const double dx = axis(p % width, q % width, width);
      const double k = kernel(std::sqrt(dx * dx + dy * dy));
      for (Eigen::Index c = 0; c < channels; ++c) out(p * channels + c, q * channels + c) = k;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CovarianceSampler

CovarianceSampler::CovarianceSampler(CovarianceOperator op)
    : op_(std::move(op)), cache_(std::make_unique<detail::FieldCache>()) {}
CovarianceSampler::~CovarianceSampler() = default;
CovarianceSampler::CovarianceSampler(CovarianceSampler&&) noexcept = default;
CovarianceSampler& CovarianceSampler::operator=(CovarianceSampler&&) noexcept = default;

Vector CovarianceSampler::sample(Rng& rng) { return op_.impl().sample(rng, cache_.get()); }

}  // namespace dbmt
