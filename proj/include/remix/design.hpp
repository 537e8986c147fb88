#pragma once

#include <string>
#include <vector>

#include "remix/scene.hpp"
#include "remix/types.hpp"

namespace remix {

enum class ResponseForm { Diotic, General };

// Desired processing for one source channel. Diotic responses apply the same
// real gain to both reference microphones; General responses are arbitrary
// per-bin 2 x M matrices.
struct DesiredResponse {
  ResponseForm form = ResponseForm::Diotic;
  std::vector<double> gain;         // Diotic: per-bin real gain
  std::vector<MatrixXcd> matrix;    // General: per-bin 2 x M

  static DesiredResponse diotic(std::vector<double> per_bin_gain);
  static DesiredResponse diotic_flat(double gain, const FrequencyGrid& grid);
  static DesiredResponse general(std::vector<MatrixXcd> per_bin_matrix);

  // Expands to the 2 x M response matrix at one bin (Diotic: gain * [e1 e2]^T).
  MatrixXcd matrix_at(int bin, int num_mics, int ref_left, int ref_right) const;
};

struct RemixSpec {
  std::vector<DesiredResponse> responses;  // one per scene channel
  std::vector<double> weights;             // distortion weights, > 0

  void validate(const SceneSpec& scene) const;
};

// Noncausal frequency-domain filter W on the grid, 2 x M per bin.
struct FreqFilter {
  std::vector<MatrixXcd> taps;
  FrequencyGrid grid;
  int ref_left = 0;
  int ref_right = 1;
  std::vector<int> loaded_bins;  // bins that needed diagonal loading

  int num_bins() const { return static_cast<int>(taps.size()); }
  int num_mics() const { return taps.empty() ? 0 : static_cast<int>(taps[0].cols()); }
};

// Causal FIR realization: per-ear M x L real tap matrices with a declared
// bulk delay. Tap index 0 is time 0.
struct FirFilter {
  MatrixXd left;   // M x L
  MatrixXd right;  // M x L
  int delay_samples = 0;
  double sample_rate_hz = 0.0;

  int num_mics() const { return static_cast<int>(left.rows()); }
  int num_taps() const { return static_cast<int>(left.cols()); }
};

// Weighted remixing filter: per bin W = (sum_n lambda_n G_n R_cn) Rbar_x^{-1},
// computed with a pivoted Hermitian solve. Bins whose mixture PSD has a
// condition number above 1e12 get 1e-10*trace diagonal loading and are
// recorded in loaded_bins instead of failing.
FreqFilter design_msdw_mwf(const SceneSpec& scene, const RemixSpec& spec);

// Frequency-sampling realization: conjugate-symmetric extension, inverse DFT,
// circular shift by round(delay_ms*fs/1000), truncation to round(length_ms*fs/1000)
// taps, raised-cosine taper over the final 10%.
FirFilter to_causal_fir(const FreqFilter& filter, double delay_ms, double length_ms);

// DFT of the taps on the grid with the bulk delay removed, directly
// comparable to the design target.
FreqFilter realized_response(const FirFilter& fir, const FrequencyGrid& grid,
                             int ref_left = 0, int ref_right = 1);

// WAVE-pair serialization: <base>_left.wav / <base>_right.wav (32-bit float,
// M channels, L frames) plus <base>.meta with delay and rate. Round-trips
// bit-exactly.
void export_fir(const FirFilter& fir, const std::string& base_path);
FirFilter import_fir(const std::string& base_path);

}  // namespace remix
