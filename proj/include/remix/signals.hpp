#pragma once

#include <cstdint>
#include <vector>

#include "remix/design.hpp"
#include "remix/scene.hpp"
#include "remix/types.hpp"

namespace remix {

struct MultichannelSignal {
  MatrixXd samples;  // rows = channels, cols = time
  double sample_rate_hz = 0.0;

  int channels() const { return static_cast<int>(samples.rows()); }
  Eigen::Index length() const { return samples.cols(); }
};

struct StftParams {
  int window_len = 512;
  int hop = 256;
};

// STFT frames of a multichannel signal; data[c](bin, frame). The analysis
// window is a square-root periodic Hann, which with the chosen hop must
// satisfy constant overlap-add.
struct StftTensor {
  std::vector<MatrixXcd> data;
  StftParams params;
  double sample_rate_hz = 0.0;
  Eigen::Index signal_length = 0;

  int channels() const { return static_cast<int>(data.size()); }
  int num_bins() const { return data.empty() ? 0 : static_cast<int>(data[0].rows()); }
  int num_frames() const { return data.empty() ? 0 : static_cast<int>(data[0].cols()); }
  double bin_hz(int f) const { return f * sample_rate_hz / params.window_len; }
};

// Seeded white noise shaped by the long-term speech spectrum. Nonzero
// durations are rounded up to a whole number of nfft blocks so grid bins
// line up with the synthesis spectrum.
MultichannelSignal synth_speech_shaped_noise(double duration_s, std::uint64_t seed,
                                             const FrequencyGrid& grid);

struct RenderResult {
  std::vector<MultichannelSignal> images;  // one M-channel image per scene channel
  MultichannelSignal mixture;              // exact sample-wise sum of the images
};

// Renders each channel's microphone image. Rank1 channels convolve their dry
// signal (given in scene-channel order, Rank1 channels only) with the inverse
// transform of the ATF; FullRank channels are synthesized from seeded noise
// streams mixed by a per-bin eigenfactorization of their PSD.
RenderResult render_images(const SceneSpec& scene,
                           const std::vector<MultichannelSignal>& dry_signals,
                           std::uint64_t seed = 0);

// Overlap-add FIR filtering; output is 2 x (T + L - 1).
MultichannelSignal apply_fir(const FirFilter& fir, const MultichannelSignal& x);

StftTensor stft(const MultichannelSignal& signal, const StftParams& params);
MultichannelSignal istft(const StftTensor& tensor);

// Interaural transfer functions measured from STFT sample cross-correlations:
// ITF[f] = sum_k X_left conj(X_right) / sum_k |X_left|^2, frames with
// incomplete overlap excluded. Note this estimator is the conjugate of the
// analytic right/left ratio; the pairing below keeps input and output on
// the same convention so level errors match and phase errors are negated.
struct EmpiricalItf {
  std::vector<double> freqs_hz;
  // indexed [source][bin]; NaN where the denominator vanished
  std::vector<std::vector<Complex>> itf_in;
  std::vector<std::vector<Complex>> itf_out;
};

EmpiricalItf empirical_itf(const std::vector<MultichannelSignal>& images_in,
                           const std::vector<MultichannelSignal>& images_out,
                           const MicArrayGeometry& geometry, const StftParams& params);

void write_empirical_csv(const std::string& path, const EmpiricalItf& itfs,
                         const std::vector<std::string>& source_labels);

}  // namespace remix
