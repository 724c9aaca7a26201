#include "fft.hpp"

#include <mutex>
#include <vector>

namespace dbmt::detail {

namespace {
// FFTW's planner is not reentrant; execution with new-array functions is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Fft2d::Fft2d(Eigen::Index rows, Eigen::Index cols) : rows_(rows), cols_(cols) {
  std::vector<std::complex<double>> scratch(static_cast<std::size_t>(rows * cols));
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  std::lock_guard lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  forward_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf,
                              FFTW_FORWARD, flags);
  backward_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf,
                               FFTW_BACKWARD, flags);
}

Fft2d::~Fft2d() {
  std::lock_guard lock(planner_mutex());
  if (forward_) fftw_destroy_plan(forward_);
  if (backward_) fftw_destroy_plan(backward_);
}

void Fft2d::forward(std::complex<double>* data) const {
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(forward_, buf, buf);
}

void Fft2d::backward(std::complex<double>* data) const {
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(backward_, buf, buf);
}

}  // namespace dbmt::detail
