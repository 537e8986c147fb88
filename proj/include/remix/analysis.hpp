#pragma once

#include <string>
#include <vector>

#include "remix/design.hpp"
#include "remix/scene.hpp"
#include "remix/types.hpp"

namespace remix {

// Weighted error spectral density and its per-ear diagonal.
struct ErrorSpectra {
  FrequencyGrid grid;
  std::vector<Eigen::Matrix2cd> weighted_total;  // per-bin 2 x 2 Hermitian
  std::vector<double> left;
  std::vector<double> right;
};

// Per-source interaural cue distortion. Undefined bins (nulled source,
// vanishing reference, zero desired gain) are marked NaN and excluded from
// band averages.
struct CueReport {
  FrequencyGrid grid;
  int ref_left = 0;
  int ref_right = 1;
  std::vector<int> channel_index;          // scene channel per row
  std::vector<std::string> source_labels;
  // indexed [source][bin]
  std::vector<std::vector<Complex>> itf_in;
  std::vector<std::vector<Complex>> itf_out;
  std::vector<std::vector<double>> ild_err_db;
  std::vector<std::vector<double>> ipd_err_rad;
  std::vector<std::vector<Complex>> delta_exact;
  std::vector<std::vector<Complex>> delta_first_order;
  std::vector<std::vector<Complex>> delta_rank1;

  int num_sources() const { return static_cast<int>(source_labels.size()); }
};

struct BandSummary {
  double mean_abs_ild_db = 0.0;
  double mean_abs_ipd_rad = 0.0;
  int bins_used = 0;
  int bins_excluded = 0;
};

inline bool cue_defined(Complex v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); }
inline bool cue_defined(double v) { return std::isfinite(v); }
inline Complex undefined_cue() {
  return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
}

// Weighted error PSD evaluated directly from the filter (any W):
// sum_n lambda_n (G_n - W) R_cn (G_n - W)^H.
ErrorSpectra weighted_error_psd_direct(const SceneSpec& scene, const RemixSpec& spec,
                                       const FreqFilter& filter);

// Closed form for the optimal filter, in source pairs, without building W.
// Requires Diotic responses with real gains; refuses General responses
// (use weighted_error_psd_direct for those).
ErrorSpectra weighted_error_psd_pairwise(const SceneSpec& scene, const RemixSpec& spec);

// Interaural transfer function of a microphone-domain vector: the
// right-reference entry over the left-reference entry. Throws
// UndefinedItfError when either reference entry is zero (no finite
// level/phase difference exists).
Complex itf(const VectorXcd& vec, const MicArrayGeometry& geometry);

// ITF of the filter output W*vec at one bin, with a relative null guard:
// reference outputs below 1e-12 * |W| * |vec| count as suppressed.
Complex output_itf(const FreqFilter& filter, int bin, const VectorXcd& vec);

// Exact logarithmic ITF error of the MSDW-MWF for Rank1 channel n; per-bin,
// NaN where undefined (zero desired gain or vanishing references). The real
// part is the ILD error in nepers, the imaginary part the IPD error.
std::vector<Complex> itf_error_exact(const SceneSpec& scene, const RemixSpec& spec, int channel);

// First-order (ln(1+u) ~ u) approximation of the same error.
std::vector<Complex> itf_error_first_order(const SceneSpec& scene, const RemixSpec& spec,
                                           int channel);

// Rank-1 approximation: couples channels through A_m^H Rbar^-1 A_n and the
// interaural mismatch of their transfer functions. Non-Rank1 channels are
// assumed negligible and skipped.
std::vector<Complex> itf_error_rank1(const SceneSpec& scene, const RemixSpec& spec, int channel);

// Assembles measured-ratio cue errors (from itf/output_itf of the given
// filter) together with the three closed-form error columns for every Rank1
// channel.
CueReport cue_report(const SceneSpec& scene, const RemixSpec& spec, const FreqFilter& filter);

// Arithmetic mean of |ILD err| and |IPD err| over defined bins with
// lo_hz <= f <= hi_hz, aggregated across all sources in the report.
BandSummary band_mean(const CueReport& report, double lo_hz, double hi_hz);
BandSummary band_mean_source(const CueReport& report, int source, double lo_hz, double hi_hz);

// Third-octave band centers covering the grid (base 1 kHz) with per-band
// aggregate means.
std::vector<std::pair<double, BandSummary>> third_octave_summary(const CueReport& report);

// nepers -> dB conversion for the real part of a logarithmic ITF error.
inline double nepers_to_db(double nepers) { return nepers * 20.0 / std::log(10.0); }

// Two-sided power integral of a one-sided per-Hz spectrum on the grid.
double integrate_psd(const FrequencyGrid& grid, const std::vector<double>& one_sided);

// CSV serialization (schema: frequency_hz,source,ild_err_db,ipd_err_rad,
// delta_itf_re,delta_itf_im,variant). Undefined values are written as nan.
void write_cue_csv(const std::string& path, const CueReport& report);
void write_error_spectra_csv(const std::string& path, const ErrorSpectra& spectra);
std::string cue_csv_header();
std::string error_spectra_csv_header();

}  // namespace remix
