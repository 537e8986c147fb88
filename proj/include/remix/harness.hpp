#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remix/analysis.hpp"
#include "remix/design.hpp"
#include "remix/scene.hpp"
#include "remix/signals.hpp"
#include "remix/types.hpp"

namespace remix {

struct ExperimentConfig {
  // scene
  std::string scene_source = "synthetic";  // "synthetic" or "ir" (impulse-response files)
  std::vector<std::string> ir_files;
  std::string array = "earpiece4";  // earpiece4 | head8 | body16
  std::vector<double> source_azimuths_deg = {-90.0, -45.0, 0.0, 45.0, 90.0};
  double source_distance_m = 1.5;
  double head_radius_m = 0.0875;
  double noise_psd_scale = 0.1;  // diffuse level relative to one source's dry PSD

  // remix responses
  std::string preset = "mild";  // mild | aggressive | beamformer | custom
  std::vector<double> custom_gains;
  std::vector<double> lambda;  // empty -> all 1

  // grids and filter realization
  double sample_rate_hz = 16000.0;
  int nfft = 1024;
  double delay_ms = 16.0;
  double length_ms = 256.0;

  // empirical measurement
  std::uint64_t seed = 1;
  double duration_s = 60.0;
  int stft_window = 512;
  int stft_hop = 256;

  // reporting
  double band_lo_hz = 1000.0;
  double band_hi_hz = 8000.0;
  std::string out_dir = "out";
  bool run_empirical = false;
};

ExperimentConfig load_config(const std::string& path);

// Named desired-response presets for the 5-speech + 1-noise scene layout.
// mild: speech gains 1.0 0.8 0.7 0.6 0.5, noise 0.1 (20 dB attenuation).
// aggressive: 1.0 0.4 0.3 0.2 0.1, noise 0.1.
// beamformer: first source 1, everything else 0.
RemixSpec preset_remix(const std::string& name, int num_channels, const FrequencyGrid& grid);
std::vector<double> preset_gains(const std::string& name, int num_channels);

// Synthetic scene: directional speech-shaped sources around the listener
// plus a diffuse noise channel.
SceneSpec build_scene(const ExperimentConfig& config);
RemixSpec build_remix_spec(const ExperimentConfig& config, const SceneSpec& scene);

struct ExperimentResult {
  SceneSpec scene;
  RemixSpec spec;
  FreqFilter filter;
  FirFilter fir;
  CueReport cues;
  ErrorSpectra spectra;
  BandSummary band;
  // filled when the empirical pipeline runs
  bool empirical_ran = false;
  double empirical_error_power = 0.0;
  double predicted_error_power = 0.0;
  std::vector<std::string> artifacts;
};

// Full pipeline: design, analyze, realize, serialize. Artifacts land in
// config.out_dir: filter WAV pair + sidecar, cue_report.csv,
// error_spectra.csv, empirical.csv (optional), manifest.json. Files are
// written atomically (temp + rename) and depend only on the config and seed.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Per-bin cue errors averaged over the directional sources, one series per
// remix preset (fig3) or per array size with aggressive responses (fig4).
// Returns the CSV path.
std::string scenario_fig3(const std::string& out_dir);
std::string scenario_fig4(const std::string& out_dir);
std::string fig_csv_header();

// Condensed internal consistency check; returns true when every check holds.
bool selftest(std::ostream& log);

}  // namespace remix
