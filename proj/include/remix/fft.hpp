#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace remix {

// Real-to-complex FFT of a fixed size n (and its inverse), backed by FFTW.
// Plans are created once per instance; execution is thread safe, so one
// instance can serve many threads concurrently.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // time (n reals) -> spectrum (n/2+1 bins), unnormalized forward transform
  void forward(const double* in, std::complex<double>* out) const;
  // spectrum -> time, scaled by 1/n so forward+inverse round-trips
  void inverse(const std::complex<double>* in, double* out) const;

  std::vector<std::complex<double>> forward(const std::vector<double>& in) const;
  std::vector<double> inverse(const std::vector<std::complex<double>>& in) const;

 private:
  std::size_t n_;
  void* plan_fwd_;
  void* plan_inv_;
};

}  // namespace remix
