#include "remix/design.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include "remix/fft.hpp"
#include "remix/wav.hpp"

namespace remix {

DesiredResponse DesiredResponse::diotic(std::vector<double> per_bin_gain) {
  DesiredResponse r;
  r.form = ResponseForm::Diotic;
  r.gain = std::move(per_bin_gain);
  return r;
}

DesiredResponse DesiredResponse::diotic_flat(double gain, const FrequencyGrid& grid) {
  return diotic(std::vector<double>(static_cast<std::size_t>(grid.num_bins()), gain));
}

DesiredResponse DesiredResponse::general(std::vector<MatrixXcd> per_bin_matrix) {
  DesiredResponse r;
  r.form = ResponseForm::General;
  r.matrix = std::move(per_bin_matrix);
  return r;
}

MatrixXcd DesiredResponse::matrix_at(int bin, int num_mics, int ref_left, int ref_right) const {
  if (form == ResponseForm::General) return matrix[static_cast<std::size_t>(bin)];
  MatrixXcd g = MatrixXcd::Zero(2, num_mics);
  g(0, ref_left) = gain[static_cast<std::size_t>(bin)];
  g(1, ref_right) = gain[static_cast<std::size_t>(bin)];
  return g;
}

void RemixSpec::validate(const SceneSpec& scene) const {
  const auto n = static_cast<std::size_t>(scene.num_channels());
  if (responses.size() != n || weights.size() != n)
    throw ConfigError("remix spec needs one response and one weight per scene channel");
  for (double w : weights)
    if (!(w > 0.0)) throw ConfigError("distortion weights must be strictly positive");
  const auto num_bins = static_cast<std::size_t>(scene.grid.num_bins());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = responses[i];
    if (r.form == ResponseForm::Diotic) {
      if (r.gain.size() != num_bins)
        throw ConfigError("diotic gain length must match grid bins");
      for (double g : r.gain)
        if (!std::isfinite(g)) throw ConfigError("diotic gains must be finite");
    } else {
      if (r.matrix.size() != num_bins)
        throw ConfigError("general response length must match grid bins");
      for (const auto& m : r.matrix)
        if (m.rows() != 2 || m.cols() != scene.num_mics())
          throw ConfigError("general response must be 2 x M per bin");
    }
  }
}

FreqFilter design_msdw_mwf(const SceneSpec& scene, const RemixSpec& spec) {
  spec.validate(scene);
  const int num_bins = scene.grid.num_bins();
  const int num_mics = scene.num_mics();
  const int num_channels = scene.num_channels();

  FreqFilter out;
  out.grid = scene.grid;
  out.ref_left = scene.geometry.ref_left;
  out.ref_right = scene.geometry.ref_right;
  out.taps.resize(static_cast<std::size_t>(num_bins));

  std::vector<char> loaded(static_cast<std::size_t>(num_bins), 0);
  std::atomic<long> bad_bin{num_bins};

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_bins; ++f) {
    MatrixXcd mixture = MatrixXcd::Zero(num_mics, num_mics);
    MatrixXcd numerator = MatrixXcd::Zero(2, num_mics);
    for (int n = 0; n < num_channels; ++n) {
      const double lambda = spec.weights[static_cast<std::size_t>(n)];
      const MatrixXcd psd = channel_psd_at(scene.channels[static_cast<std::size_t>(n)], f);
      mixture += lambda * psd;
      numerator += lambda *
                   spec.responses[static_cast<std::size_t>(n)].matrix_at(
                       f, num_mics, out.ref_left, out.ref_right) *
                   psd;
    }

    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(mixture, Eigen::EigenvaluesOnly);
    const double eig_min = es.eigenvalues().minCoeff();
    const double eig_max = es.eigenvalues().maxCoeff();
    if (eig_min <= 0.0 || eig_max > 1e12 * eig_min) {
      mixture += 1e-10 * std::abs(mixture.trace().real()) *
                 MatrixXcd::Identity(num_mics, num_mics);
      loaded[static_cast<std::size_t>(f)] = 1;
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es2(mixture, Eigen::EigenvaluesOnly);
      if (es2.eigenvalues().minCoeff() <= 0.0) {
        long seen = bad_bin.load();
        while (f < seen && !bad_bin.compare_exchange_weak(seen, f)) {
        }
        continue;
      }
    }

    // W * Rbar = numerator; Rbar Hermitian, so solve Rbar W^H = numerator^H.
    Eigen::LDLT<MatrixXcd> ldlt(mixture);
    out.taps[static_cast<std::size_t>(f)] = ldlt.solve(numerator.adjoint()).adjoint();
  }

  if (bad_bin.load() < num_bins)
    throw NumericalError("weighted mixture PSD is singular even after diagonal loading",
                         bad_bin.load());
  for (int f = 0; f < num_bins; ++f)
    if (loaded[static_cast<std::size_t>(f)]) out.loaded_bins.push_back(f);
  return out;
}

FirFilter to_causal_fir(const FreqFilter& filter, double delay_ms, double length_ms) {
  if (delay_ms < 0.0) throw ConfigError("delay_ms must be nonnegative");
  if (length_ms <= delay_ms) throw ConfigError("length_ms must exceed delay_ms");
  const double fs = filter.grid.sample_rate_hz;
  const int nfft = filter.grid.nfft;
  const int delay = static_cast<int>(std::lround(delay_ms * fs / 1000.0));
  const int length = static_cast<int>(std::lround(length_ms * fs / 1000.0));
  if (length > nfft)
    throw ConfigError("grid nfft (" + std::to_string(nfft) + ") too small for " +
                      std::to_string(length) + " taps");
  if (delay >= length) throw ConfigError("delay must be shorter than the tap length");
  if (filter.num_bins() != nfft / 2 + 1) throw ConfigError("filter does not match its grid");

  const int num_mics = filter.num_mics();
  RealFft fft(static_cast<std::size_t>(nfft));

  FirFilter fir;
  fir.left.resize(num_mics, length);
  fir.right.resize(num_mics, length);
  fir.delay_samples = delay;
  fir.sample_rate_hz = fs;

  const int taper_len = std::max(1, static_cast<int>(std::lround(0.1 * length)));
  std::vector<Complex> spectrum(static_cast<std::size_t>(nfft / 2 + 1));
  std::vector<double> impulse(static_cast<std::size_t>(nfft));
  for (int row = 0; row < 2; ++row) {
    MatrixXd& taps = row == 0 ? fir.left : fir.right;
    for (int m = 0; m < num_mics; ++m) {
      for (int f = 0; f <= nfft / 2; ++f)
        spectrum[static_cast<std::size_t>(f)] = filter.taps[static_cast<std::size_t>(f)](row, m);
      // real impulse response needs real DC and Nyquist bins
      spectrum.front() = spectrum.front().real();
      spectrum.back() = spectrum.back().real();
      fft.inverse(spectrum.data(), impulse.data());
      for (int i = 0; i < length; ++i) {
        const int src = ((i - delay) % nfft + nfft) % nfft;
        double tap = impulse[static_cast<std::size_t>(src)];
        if (i >= length - taper_len) {
          const double u = static_cast<double>(i - (length - taper_len)) / taper_len;
          tap *= 0.5 * (1.0 + std::cos(kPi * u));
        }
        taps(m, i) = tap;
      }
    }
  }
  return fir;
}

FreqFilter realized_response(const FirFilter& fir, const FrequencyGrid& grid, int ref_left,
                             int ref_right) {
  const int nfft = grid.nfft;
  const int length = fir.num_taps();
  if (length > nfft) throw ConfigError("grid nfft too small for the FIR length");
  const int num_mics = fir.num_mics();
  RealFft fft(static_cast<std::size_t>(nfft));

  FreqFilter out;
  out.grid = grid;
  out.ref_left = ref_left;
  out.ref_right = ref_right;
  out.taps.assign(static_cast<std::size_t>(grid.num_bins()), MatrixXcd::Zero(2, num_mics));

  std::vector<double> padded(static_cast<std::size_t>(nfft));
  std::vector<Complex> spectrum(static_cast<std::size_t>(nfft / 2 + 1));
  for (int row = 0; row < 2; ++row) {
    const MatrixXd& taps = row == 0 ? fir.left : fir.right;
    for (int m = 0; m < num_mics; ++m) {
      std::fill(padded.begin(), padded.end(), 0.0);
      for (int i = 0; i < length; ++i) padded[static_cast<std::size_t>(i)] = taps(m, i);
      fft.forward(padded.data(), spectrum.data());
      for (int f = 0; f <= nfft / 2; ++f) {
        // undo the bulk delay so the result is comparable to the design
        const double phase = 2.0 * kPi * f * fir.delay_samples / nfft;
        out.taps[static_cast<std::size_t>(f)](row, m) =
            spectrum[static_cast<std::size_t>(f)] * Complex(std::cos(phase), std::sin(phase));
      }
    }
  }
  return out;
}

void export_fir(const FirFilter& fir, const std::string& base_path) {
  WavData wav;
  wav.sample_rate_hz = fir.sample_rate_hz;
  wav.format = WavFormat::Float32;
  wav.samples = fir.left;
  write_wav(base_path + "_left.wav", wav);
  wav.samples = fir.right;
  write_wav(base_path + "_right.wav", wav);

  std::ofstream meta(base_path + ".meta", std::ios::trunc);
  if (!meta) throw ConfigError("cannot write sidecar: " + base_path + ".meta");
  meta << "delay_samples=" << fir.delay_samples << "\n"
       << "sample_rate_hz=" << fir.sample_rate_hz << "\n"
       << "num_mics=" << fir.num_mics() << "\n"
       << "num_taps=" << fir.num_taps() << "\n";
}

FirFilter import_fir(const std::string& base_path) {
  WavData left = read_wav(base_path + "_left.wav");
  WavData right = read_wav(base_path + "_right.wav");
  if (left.channels() != right.channels() || left.frames() != right.frames())
    throw ConfigError("FIR WAV pair shapes do not match: " + base_path);

  std::ifstream meta(base_path + ".meta");
  if (!meta) throw ConfigError("cannot read sidecar: " + base_path + ".meta");
  FirFilter fir;
  fir.left = left.samples;
  fir.right = right.samples;
  fir.sample_rate_hz = left.sample_rate_hz;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "delay_samples") fir.delay_samples = std::stoi(value);
    if (key == "sample_rate_hz") fir.sample_rate_hz = std::stod(value);
  }
  if (fir.delay_samples < 0 || fir.delay_samples >= fir.num_taps())
    throw ConfigError("sidecar delay out of range: " + base_path);
  return fir;
}

}  // namespace remix
