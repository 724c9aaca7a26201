#pragma once

#include <complex>
#include <fftw3.h>

#include <Eigen/Core>

namespace dbmt::detail {

/// In-place 2D complex DFT plans of a fixed rows×cols shape (unnormalized both ways).
/// Plans are created with FFTW_UNALIGNED so any std::complex buffer may be used.
class Fft2d {
 public:
  Fft2d(Eigen::Index rows, Eigen::Index cols);
  ~Fft2d();
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  void forward(std::complex<double>* data) const;
  void backward(std::complex<double>* data) const;

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  Eigen::Index size() const { return rows_ * cols_; }

 private:
  Eigen::Index rows_;
  Eigen::Index cols_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace dbmt::detail
