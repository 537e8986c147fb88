#include "remix/fft.hpp"

#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace remix {

namespace {
// The FFTW planner is not thread safe; executing plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: size must be >= 2");
  std::lock_guard<std::mutex> lock(planner_mutex());
  std::vector<double> td(n);
  std::vector<fftw_complex> fd(n / 2 + 1);
  // FFTW_UNALIGNED so the plan can run on any caller-provided buffer.
  plan_fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), td.data(), fd.data(),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  plan_inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), fd.data(), td.data(),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!plan_fwd_ || !plan_inv_) throw std::runtime_error("RealFft: planning failed");
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
}

void RealFft::forward(const double* in, std::complex<double>* out) const {
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_fwd_), const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

void RealFft::inverse(const std::complex<double>* in, double* out) const {
  // c2r destroys its input, so run on a scratch copy.
  std::vector<std::complex<double>> scratch(in, in + bins());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_inv_),
                       reinterpret_cast<fftw_complex*>(scratch.data()), out);
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] *= scale;
}

std::vector<std::complex<double>> RealFft::forward(const std::vector<double>& in) const {
  if (in.size() != n_) throw std::invalid_argument("RealFft::forward: length mismatch");
  std::vector<std::complex<double>> out(bins());
  forward(in.data(), out.data());
  return out;
}

std::vector<double> RealFft::inverse(const std::vector<std::complex<double>>& in) const {
  if (in.size() != bins()) throw std::invalid_argument("RealFft::inverse: length mismatch");
  std::vector<double> out(n_);
  inverse(in.data(), out.data());
  return out;
}

}  // namespace remix
