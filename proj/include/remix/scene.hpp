#pragma once

#include <array>
#include <string>
#include <vector>

#include "remix/types.hpp"

namespace remix {

// One-sided frequency grid of an even-length DFT: bins 0..nfft/2.
// bins[f] is the angular frequency 2*pi*f*fs/nfft in rad/s.
struct FrequencyGrid {
  double sample_rate_hz = 0.0;
  int nfft = 0;
  std::vector<double> bins;

  int num_bins() const { return static_cast<int>(bins.size()); }
  double hz(int f) const { return bins[static_cast<std::size_t>(f)] / (2.0 * kPi); }
};

FrequencyGrid make_frequency_grid(double sample_rate_hz, int nfft);

struct MicArrayGeometry {
  std::vector<std::array<double, 3>> positions;  // meters, head center at origin
  int ref_left = 0;   // microphone in/near the left ear
  int ref_right = 1;  // microphone in/near the right ear

  int num_mics() const { return static_cast<int>(positions.size()); }
  void validate() const;
};

// Schematic wearable presets. Mic 0 is the left ear canal, mic 1 the right.
// earpiece4: two mics per ear, 1.5 cm apart along the head surface.
// head8:     ring of eight mics around the head.
// body16:    head ring plus eight chest/back mics.
MicArrayGeometry array_preset(const std::string& name);

enum class ChannelKind { Rank1, FullRank };

// A group of sounds sharing one desired response. Rank1 channels carry an
// acoustic transfer function and a dry source spectrum; FullRank channels
// carry explicit per-bin PSD matrices.
struct SourceChannel {
  ChannelKind kind = ChannelKind::Rank1;
  std::vector<VectorXcd> atf;    // Rank1: per-bin M-vector
  std::vector<double> dry_psd;   // Rank1: per-bin nonnegative source PSD
  std::vector<MatrixXcd> psd;    // FullRank: per-bin M x M Hermitian PSD
  std::string label;

  void validate(const FrequencyGrid& grid, int num_mics) const;
};

struct SceneSpec {
  MicArrayGeometry geometry;
  FrequencyGrid grid;
  std::vector<SourceChannel> channels;
  double sound_speed_mps = 343.0;

  int num_mics() const { return geometry.num_mics(); }
  int num_channels() const { return static_cast<int>(channels.size()); }
  void validate() const;
};

// Far-field spherical-head transfer function: Woodworth path delay (arc
// travel around the sphere for shadowed head mics), common 1/distance gain,
// and a one-pole/one-zero shadow filter with corner at sound_speed/head_radius.
// Azimuth is measured from straight ahead, positive toward the left ear.
std::vector<VectorXcd> synth_head_atf(const MicArrayGeometry& geometry, double azimuth_rad,
                                      double distance_m, const FrequencyGrid& grid,
                                      double head_radius_m, double sound_speed_mps = 343.0);

// Spherically isotropic diffuse field: PSD_ij = level * sinc(Omega*d_ij/c),
// with 1e-10 diagonal loading so the matrix is strictly positive definite.
SourceChannel diffuse_noise_channel(const MicArrayGeometry& geometry, const FrequencyGrid& grid,
                                    const std::vector<double>& level_psd,
                                    double sound_speed_mps = 343.0);

// Per-bin PSD of a channel: Rank1 expands R_s * A * A^H, FullRank returns the
// stored matrices.
std::vector<MatrixXcd> channel_psd(const SourceChannel& channel, const FrequencyGrid& grid);
MatrixXcd channel_psd_at(const SourceChannel& channel, int bin);

// Lambda-weighted sum of channel PSDs. Throws NumericalError naming the bin
// if the result is not positive definite there.
std::vector<MatrixXcd> weighted_mixture_psd(const SceneSpec& scene,
                                            const std::vector<double>& weights);

// Long-term-average speech shape: flat below 500 Hz, -6 dB/octave above.
double speech_shaped_psd(double freq_hz);
std::vector<double> speech_shaped_psd(const FrequencyGrid& grid);

// Reads one M-channel impulse response per file and samples its transfer
// function on the grid via zero-padded FFT. dry_psd defaults to the
// speech shape; pass per-source spectra to override.
std::vector<SourceChannel> load_impulse_responses(
    const std::vector<std::string>& paths, const MicArrayGeometry& geometry,
    const FrequencyGrid& grid, const std::vector<std::vector<double>>& dry_psd = {});

}  // namespace remix
