#include "remix/reference.hpp"

#include <cmath>

namespace remix::reference {

FreqFilter design_normal_equations(const SceneSpec& scene, const RemixSpec& spec) {
  spec.validate(scene);
  const int num_bins = scene.grid.num_bins();
  const int num_mics = scene.num_mics();

  FreqFilter out;
  out.grid = scene.grid;
  out.ref_left = scene.geometry.ref_left;
  out.ref_right = scene.geometry.ref_right;
  out.taps.resize(static_cast<std::size_t>(num_bins));

  for (int f = 0; f < num_bins; ++f) {
    MatrixXcd mixture = MatrixXcd::Zero(num_mics, num_mics);
    MatrixXcd numerator = MatrixXcd::Zero(2, num_mics);
    for (int n = 0; n < scene.num_channels(); ++n) {
      const double lambda = spec.weights[static_cast<std::size_t>(n)];
      const MatrixXcd psd = channel_psd_at(scene.channels[static_cast<std::size_t>(n)], f);
      mixture += lambda * psd;
      numerator += lambda *
                   spec.responses[static_cast<std::size_t>(n)].matrix_at(
                       f, num_mics, out.ref_left, out.ref_right) *
                   psd;
    }
    Eigen::FullPivLU<MatrixXcd> lu(mixture.transpose());
    if (!lu.isInvertible())
      throw NumericalError("normal equations are singular", f);
    out.taps[static_cast<std::size_t>(f)] = lu.solve(numerator.transpose()).transpose();
  }
  return out;
}

MultichannelSignal convolve_direct(const FirFilter& fir, const MultichannelSignal& x) {
  if (x.channels() != fir.num_mics())
    throw ConfigError("signal channel count does not match the filter");
  const Eigen::Index signal_len = x.length();
  const int tap_len = fir.num_taps();
  MultichannelSignal out;
  out.sample_rate_hz = x.sample_rate_hz;
  out.samples.setZero(2, signal_len + tap_len - 1);
  for (int row = 0; row < 2; ++row) {
    const MatrixXd& taps = row == 0 ? fir.left : fir.right;
    for (int m = 0; m < fir.num_mics(); ++m) {
      for (Eigen::Index t = 0; t < out.samples.cols(); ++t) {
        double acc = 0.0;
        const int l_lo = static_cast<int>(std::max<Eigen::Index>(0, t - signal_len + 1));
        const int l_hi = static_cast<int>(std::min<Eigen::Index>(tap_len - 1, t));
        for (int l = l_lo; l <= l_hi; ++l) acc += taps(m, l) * x.samples(m, t - l);
        out.samples(row, t) += acc;
      }
    }
  }
  return out;
}

std::vector<Complex> dft_direct(const std::vector<double>& x, int n) {
  if (x.size() > static_cast<std::size_t>(n))
    throw ConfigError("dft_direct: signal longer than the transform");
  std::vector<Complex> out(static_cast<std::size_t>(n / 2 + 1), Complex(0, 0));
  for (int k = 0; k <= n / 2; ++k) {
    Complex acc(0, 0);
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double phase = -2.0 * kPi * k * static_cast<double>(t) / n;
      acc += x[t] * Complex(std::cos(phase), std::sin(phase));
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

ErrorSpectra weighted_error_psd_serial(const SceneSpec& scene, const RemixSpec& spec,
                                       const FreqFilter& filter) {
  spec.validate(scene);
  const int num_bins = scene.grid.num_bins();
  const int num_mics = scene.num_mics();
  ErrorSpectra out;
  out.grid = scene.grid;
  out.weighted_total.resize(static_cast<std::size_t>(num_bins));
  out.left.resize(static_cast<std::size_t>(num_bins));
  out.right.resize(static_cast<std::size_t>(num_bins));
  for (int f = 0; f < num_bins; ++f) {
    Eigen::Matrix2cd err = Eigen::Matrix2cd::Zero();
    const MatrixXcd& w = filter.taps[static_cast<std::size_t>(f)];
    for (int n = 0; n < scene.num_channels(); ++n) {
      const MatrixXcd diff = spec.responses[static_cast<std::size_t>(n)].matrix_at(
                                 f, num_mics, filter.ref_left, filter.ref_right) -
                             w;
      err += spec.weights[static_cast<std::size_t>(n)] *
             (diff * channel_psd_at(scene.channels[static_cast<std::size_t>(n)], f) * diff.adjoint());
    }
    out.weighted_total[static_cast<std::size_t>(f)] = err;
    out.left[static_cast<std::size_t>(f)] = err(0, 0).real();
    out.right[static_cast<std::size_t>(f)] = err(1, 1).real();
  }
  return out;
}

}  // namespace remix::reference
