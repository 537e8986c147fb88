#include "remix/signals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "remix/analysis.hpp"
#include "remix/fft.hpp"
#include "remix/rng.hpp"

namespace remix {

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// y (R x T+L-1) += linear convolution of x (C x T) with taps (R entries of
// C x L each), overlap-add with a single uniform partition.
void ola_filter(const MatrixXd& x, const std::vector<const MatrixXd*>& taps, MatrixXd& y) {
  const auto num_inputs = static_cast<int>(x.rows());
  const auto signal_len = static_cast<std::size_t>(x.cols());
  const auto num_rows = static_cast<int>(taps.size());
  const auto tap_len = static_cast<std::size_t>(taps[0]->cols());
  const std::size_t fft_len = next_pow2(std::max<std::size_t>(2 * tap_len, 256));
  const std::size_t block_len = fft_len - tap_len + 1;
  const std::size_t out_len = signal_len + tap_len - 1;
  const std::size_t num_bins = fft_len / 2 + 1;

  RealFft fft(fft_len);

  // tap spectra, [row][input]
  std::vector<std::vector<std::vector<Complex>>> tap_spec(static_cast<std::size_t>(num_rows));
  {
    std::vector<double> padded(fft_len, 0.0);
    for (int r = 0; r < num_rows; ++r) {
      tap_spec[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(num_inputs));
      for (int c = 0; c < num_inputs; ++c) {
        std::fill(padded.begin(), padded.end(), 0.0);
        for (std::size_t l = 0; l < tap_len; ++l) padded[l] = (*taps[static_cast<std::size_t>(r)])(c, static_cast<Eigen::Index>(l));
        tap_spec[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = fft.forward(padded);
      }
    }
  }

  y.setZero(num_rows, static_cast<Eigen::Index>(out_len));
  std::vector<std::vector<Complex>> block_spec(static_cast<std::size_t>(num_inputs),
                                               std::vector<Complex>(num_bins));
  std::vector<Complex> acc(num_bins);
  std::vector<double> seg(fft_len);

  for (std::size_t start = 0; start < signal_len; start += block_len) {
    const std::size_t len = std::min(block_len, signal_len - start);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < num_inputs; ++c) {
      std::vector<double> local(fft_len, 0.0);
      for (std::size_t t = 0; t < len; ++t)
        local[t] = x(c, static_cast<Eigen::Index>(start + t));
      fft.forward(local.data(), block_spec[static_cast<std::size_t>(c)].data());
    }
    for (int r = 0; r < num_rows; ++r) {
      std::fill(acc.begin(), acc.end(), Complex(0, 0));
      for (int c = 0; c < num_inputs; ++c) {
        const auto& hs = tap_spec[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        const auto& xs = block_spec[static_cast<std::size_t>(c)];
        for (std::size_t f = 0; f < num_bins; ++f) acc[f] += hs[f] * xs[f];
      }
      fft.inverse(acc.data(), seg.data());
      const std::size_t copy_len = std::min(fft_len, out_len - start);
      for (std::size_t t = 0; t < copy_len; ++t)
        y(r, static_cast<Eigen::Index>(start + t)) += seg[t];
    }
  }
}

std::vector<double> sqrt_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * kPi * i / n));
  return w;
}

// Constant-overlap-add level of w^2 at the given hop; throws if not constant.
double cola_constant(const std::vector<double>& window, int hop) {
  const int n = static_cast<int>(window.size());
  if (hop <= 0 || hop > n) throw ConfigError("stft hop must be in [1, window_len]");
  std::vector<double> sum(static_cast<std::size_t>(hop), 0.0);
  for (int i = 0; i < n; ++i)
    sum[static_cast<std::size_t>(i % hop)] += window[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
  const double c = sum[0];
  for (double v : sum)
    if (std::abs(v - c) > 1e-10 * std::max(1.0, c))
      throw ConfigError("window/hop pair does not satisfy constant overlap-add");
  return c;
}

void append_value(std::string& row, double v) {
  char buf[40];
  if (std::isfinite(v))
    std::snprintf(buf, sizeof(buf), "%.12g", v);
  else
    std::snprintf(buf, sizeof(buf), "nan");
  row += buf;
}

}  // namespace

MultichannelSignal synth_speech_shaped_noise(double duration_s, std::uint64_t seed,
                                             const FrequencyGrid& grid) {
  if (duration_s < 0.0) throw ConfigError("duration must be nonnegative");
  MultichannelSignal out;
  out.sample_rate_hz = grid.sample_rate_hz;
  if (duration_s == 0.0) {
    out.samples.resize(1, 0);
    return out;
  }
  const auto blocks = static_cast<std::size_t>(
      std::ceil(duration_s * grid.sample_rate_hz / grid.nfft));
  const std::size_t len = std::max<std::size_t>(1, blocks) * static_cast<std::size_t>(grid.nfft);

  GaussianRng rng(seed);
  std::vector<double> noise(len);
  for (auto& v : noise) v = rng();

  RealFft fft(len);
  auto spectrum = fft.forward(noise);
  const double fs = grid.sample_rate_hz;
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const double f_hz = static_cast<double>(k) * fs / static_cast<double>(len);
    spectrum[k] *= std::sqrt(speech_shaped_psd(f_hz) * fs);
  }
  spectrum.front() = spectrum.front().real();
  spectrum.back() = spectrum.back().real();
  const auto shaped = fft.inverse(spectrum);

  out.samples.resize(1, static_cast<Eigen::Index>(len));
  for (std::size_t t = 0; t < len; ++t) out.samples(0, static_cast<Eigen::Index>(t)) = shaped[t];
  return out;
}

RenderResult render_images(const SceneSpec& scene,
                           const std::vector<MultichannelSignal>& dry_signals,
                           std::uint64_t seed) {
  const int num_mics = scene.num_mics();
  const int nfft = scene.grid.nfft;

  int num_rank1 = 0;
  for (const auto& ch : scene.channels)
    if (ch.kind == ChannelKind::Rank1) ++num_rank1;
  if (static_cast<int>(dry_signals.size()) != num_rank1)
    throw ConfigError("need one dry signal per Rank1 channel");

  Eigen::Index len = 0;
  for (const auto& s : dry_signals) {
    if (s.channels() != 1) throw ConfigError("dry signals must be single-channel");
    if (s.sample_rate_hz != scene.grid.sample_rate_hz)
      throw ConfigError("dry signal sample rate does not match the scene grid");
    if (len == 0) len = s.length();
    if (s.length() != len) throw ConfigError("dry signals must share one length");
  }
  if (len < nfft)
    throw ConfigError("signal shorter than the impulse response (nfft) cannot be rendered");

  RealFft fft(static_cast<std::size_t>(nfft));
  RenderResult result;
  result.mixture.sample_rate_hz = scene.grid.sample_rate_hz;
  result.mixture.samples.setZero(num_mics, len);

  std::size_t dry_index = 0;
  for (int n = 0; n < scene.num_channels(); ++n) {
    const auto& ch = scene.channels[static_cast<std::size_t>(n)];
    MultichannelSignal image;
    image.sample_rate_hz = scene.grid.sample_rate_hz;

    if (ch.kind == ChannelKind::Rank1) {
      const auto& dry = dry_signals[dry_index++];
      // per-mic impulse responses from the grid ATF
      MatrixXd taps(num_mics, nfft);
      std::vector<Complex> spec(static_cast<std::size_t>(nfft / 2 + 1));
      std::vector<double> impulse(static_cast<std::size_t>(nfft));
      for (int m = 0; m < num_mics; ++m) {
        for (int f = 0; f <= nfft / 2; ++f)
          spec[static_cast<std::size_t>(f)] = ch.atf[static_cast<std::size_t>(f)](m);
        spec.front() = spec.front().real();
        spec.back() = spec.back().real();
        fft.inverse(spec.data(), impulse.data());
        for (int l = 0; l < nfft; ++l) taps(m, l) = impulse[static_cast<std::size_t>(l)];
      }
      std::vector<const MatrixXd*> rows(static_cast<std::size_t>(num_mics));
      std::vector<MatrixXd> row_taps(static_cast<std::size_t>(num_mics));
      for (int m = 0; m < num_mics; ++m) {
        row_taps[static_cast<std::size_t>(m)] = taps.row(m);
        rows[static_cast<std::size_t>(m)] = &row_taps[static_cast<std::size_t>(m)];
      }
      MatrixXd filtered;
      ola_filter(dry.samples, rows, filtered);
      image.samples = filtered.leftCols(len);
    } else {
      // Seeded streams mixed by the per-bin eigenfactor of the PSD.
      const auto num_full_bins = static_cast<std::size_t>(len) / 2 + 1;
      MatrixXcd mixed(num_mics, static_cast<Eigen::Index>(num_full_bins));
      RealFft long_fft(static_cast<std::size_t>(len));
      MatrixXcd streams(num_mics, static_cast<Eigen::Index>(num_full_bins));
      {
        std::vector<double> noise(static_cast<std::size_t>(len));
        std::vector<Complex> spec(num_full_bins);
        for (int m = 0; m < num_mics; ++m) {
          GaussianRng rng(seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(n) * 64 + m + 1)));
          for (auto& v : noise) v = rng();
          long_fft.forward(noise.data(), spec.data());
          for (std::size_t k = 0; k < num_full_bins; ++k)
            streams(m, static_cast<Eigen::Index>(k)) = spec[k];
        }
      }

      const double fs = scene.grid.sample_rate_hz;
      const double bin_db = fs / static_cast<double>(len);
      const double grid_df = fs / scene.grid.nfft;
#pragma omp parallel for schedule(static)
      for (long k = 0; k < static_cast<long>(num_full_bins); ++k) {
        const double f_hz = static_cast<double>(k) * bin_db;
        const double pos = f_hz / grid_df;
        const int lo = std::min(scene.grid.num_bins() - 1, static_cast<int>(pos));
        const int hi = std::min(scene.grid.num_bins() - 1, lo + 1);
        const double t = std::clamp(pos - lo, 0.0, 1.0);
        const MatrixXcd psd =
            (1.0 - t) * ch.psd[static_cast<std::size_t>(lo)] + t * ch.psd[static_cast<std::size_t>(hi)];
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(psd);
        VectorXd scaled = es.eigenvalues().cwiseMax(0.0) * fs;
        const MatrixXcd factor = es.eigenvectors() * scaled.cwiseSqrt().asDiagonal();
        mixed.col(static_cast<Eigen::Index>(k)) = factor * streams.col(static_cast<Eigen::Index>(k));
      }
      // real time series needs real DC/Nyquist bins
      for (int m = 0; m < num_mics; ++m) {
        mixed(m, 0) = mixed(m, 0).real();
        mixed(m, static_cast<Eigen::Index>(num_full_bins - 1)) =
            mixed(m, static_cast<Eigen::Index>(num_full_bins - 1)).real();
      }

      image.samples.resize(num_mics, len);
      std::vector<Complex> spec(num_full_bins);
      std::vector<double> series(static_cast<std::size_t>(len));
      for (int m = 0; m < num_mics; ++m) {
        for (std::size_t k = 0; k < num_full_bins; ++k) spec[k] = mixed(m, static_cast<Eigen::Index>(k));
        long_fft.inverse(spec.data(), series.data());
        for (Eigen::Index t = 0; t < len; ++t) image.samples(m, t) = series[static_cast<std::size_t>(t)];
      }
    }

    result.mixture.samples += image.samples;
    result.images.push_back(std::move(image));
  }
  return result;
}

MultichannelSignal apply_fir(const FirFilter& fir, const MultichannelSignal& x) {
  if (x.channels() != fir.num_mics())
    throw ConfigError("signal channel count does not match the filter");
  MultichannelSignal out;
  out.sample_rate_hz = x.sample_rate_hz;
  const std::vector<const MatrixXd*> rows = {&fir.left, &fir.right};
  ola_filter(x.samples, rows, out.samples);
  return out;
}

StftTensor stft(const MultichannelSignal& signal, const StftParams& params) {
  const int win_len = params.window_len;
  const int hop = params.hop;
  if (win_len < 4 || win_len % 2 != 0) throw ConfigError("stft window must be even and >= 4");
  const std::vector<double> window = sqrt_hann(win_len);
  cola_constant(window, hop);  // reject non-COLA configurations

  const Eigen::Index len = signal.length();
  if (len < win_len) throw ConfigError("signal shorter than one stft window");
  const int num_frames = static_cast<int>((len - win_len) / hop) + 1;
  const int num_bins = win_len / 2 + 1;

  RealFft fft(static_cast<std::size_t>(win_len));
  StftTensor tensor;
  tensor.params = params;
  tensor.sample_rate_hz = signal.sample_rate_hz;
  tensor.signal_length = len;
  tensor.data.assign(static_cast<std::size_t>(signal.channels()),
                     MatrixXcd(num_bins, num_frames));

  for (int c = 0; c < signal.channels(); ++c) {
    MatrixXcd& frames = tensor.data[static_cast<std::size_t>(c)];
#pragma omp parallel for schedule(static)
    for (int k = 0; k < num_frames; ++k) {
      std::vector<double> buf(static_cast<std::size_t>(win_len));
      std::vector<Complex> spec(static_cast<std::size_t>(num_bins));
      for (int i = 0; i < win_len; ++i)
        buf[static_cast<std::size_t>(i)] =
            signal.samples(c, static_cast<Eigen::Index>(k) * hop + i) * window[static_cast<std::size_t>(i)];
      fft.forward(buf.data(), spec.data());
      for (int f = 0; f < num_bins; ++f) frames(f, k) = spec[static_cast<std::size_t>(f)];
    }
  }
  return tensor;
}

MultichannelSignal istft(const StftTensor& tensor) {
  const int win_len = tensor.params.window_len;
  const int hop = tensor.params.hop;
  const std::vector<double> window = sqrt_hann(win_len);
  const double cola = cola_constant(window, hop);

  MultichannelSignal out;
  out.sample_rate_hz = tensor.sample_rate_hz;
  out.samples.setZero(tensor.channels(), tensor.signal_length);

  RealFft fft(static_cast<std::size_t>(win_len));
  std::vector<Complex> spec(static_cast<std::size_t>(win_len / 2 + 1));
  std::vector<double> buf(static_cast<std::size_t>(win_len));
  for (int c = 0; c < tensor.channels(); ++c) {
    const MatrixXcd& frames = tensor.data[static_cast<std::size_t>(c)];
    for (int k = 0; k < tensor.num_frames(); ++k) {
      for (int f = 0; f < tensor.num_bins(); ++f) spec[static_cast<std::size_t>(f)] = frames(f, k);
      fft.inverse(spec.data(), buf.data());
      for (int i = 0; i < win_len; ++i) {
        const Eigen::Index t = static_cast<Eigen::Index>(k) * hop + i;
        if (t < out.samples.cols())
          out.samples(c, t) += buf[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)] / cola;
      }
    }
  }
  return out;
}

EmpiricalItf empirical_itf(const std::vector<MultichannelSignal>& images_in,
                           const std::vector<MultichannelSignal>& images_out,
                           const MicArrayGeometry& geometry, const StftParams& params) {
  geometry.validate();
  if (images_in.size() != images_out.size())
    throw ConfigError("need matching per-source input and output image lists");

  EmpiricalItf result;
  const int edge = (params.window_len + params.hop - 1) / params.hop - 1;

  for (std::size_t s = 0; s < images_in.size(); ++s) {
    if (images_out[s].channels() != 2)
      throw ConfigError("output images must be binaural (2 channels)");

    MultichannelSignal refs;
    refs.sample_rate_hz = images_in[s].sample_rate_hz;
    refs.samples.resize(2, images_in[s].length());
    refs.samples.row(0) = images_in[s].samples.row(geometry.ref_left);
    refs.samples.row(1) = images_in[s].samples.row(geometry.ref_right);

    const StftTensor in_t = stft(refs, params);
    const StftTensor out_t = stft(images_out[s], params);

    if (result.freqs_hz.empty()) {
      result.freqs_hz.resize(static_cast<std::size_t>(in_t.num_bins()));
      for (int f = 0; f < in_t.num_bins(); ++f)
        result.freqs_hz[static_cast<std::size_t>(f)] = in_t.bin_hz(f);
    }

    auto estimate = [&](const StftTensor& t) {
      std::vector<Complex> itf_f(static_cast<std::size_t>(t.num_bins()), undefined_cue());
      const int first = std::min(edge, t.num_frames());
      const int last = std::max(first, t.num_frames() - edge);
      for (int f = 0; f < t.num_bins(); ++f) {
        Complex cross(0, 0);
        double auto_left = 0.0;
        for (int k = first; k < last; ++k) {
          const Complex xl = t.data[0](f, k);
          const Complex xr = t.data[1](f, k);
          cross += xl * std::conj(xr);
          auto_left += std::norm(xl);
        }
        if (auto_left > 0.0) itf_f[static_cast<std::size_t>(f)] = cross / auto_left;
      }
      return itf_f;
    };

    result.itf_in.push_back(estimate(in_t));
    result.itf_out.push_back(estimate(out_t));
  }
  return result;
}

void write_empirical_csv(const std::string& path, const EmpiricalItf& itfs,
                         const std::vector<std::string>& source_labels) {
  if (source_labels.size() != itfs.itf_in.size())
    throw ConfigError("one label per source required");
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw ConfigError("cannot write CSV: " + path);
  file << cue_csv_header() << "\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t s = 0; s < itfs.itf_in.size(); ++s) {
    for (std::size_t f = 0; f < itfs.freqs_hz.size(); ++f) {
      const Complex in = itfs.itf_in[s][f];
      const Complex out = itfs.itf_out[s][f];
      double ild = nan, ipd = nan;
      Complex delta = undefined_cue();
      if (cue_defined(in) && cue_defined(out) && in != Complex(0, 0)) {
        const Complex ratio = out / in;
        if (ratio != Complex(0, 0)) {
          delta = std::log(ratio);
          ild = nepers_to_db(delta.real());
          ipd = delta.imag();
        }
      }
      std::string row;
      append_value(row, itfs.freqs_hz[f]);
      row += ",";
      row += source_labels[s];
      row += ",";
      append_value(row, ild);
      row += ",";
      append_value(row, ipd);
      row += ",";
      append_value(row, delta.real());
      row += ",";
      append_value(row, delta.imag());
      row += ",empirical";
      file << row << "\n";
    }
  }
}

}  // namespace remix
