#include "remix/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "remix/reference.hpp"

namespace remix {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp, std::ios::trunc | std::ios::binary);
    if (!file) throw ConfigError("cannot write: " + tmp);
    file << content;
  }
  fs::rename(tmp, path);
}

void finalize_artifact(const std::string& tmp, const std::string& path) { fs::rename(tmp, path); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::vector<double> preset_gains(const std::string& name, int num_channels) {
  if (name == "mild" || name == "aggressive" || name == "beamformer") {
    if (num_channels != 6)
      throw ConfigError("preset '" + name + "' expects 6 channels (5 speech + noise), got " +
                        std::to_string(num_channels));
  }
  if (name == "mild") return {1.0, 0.8, 0.7, 0.6, 0.5, 0.1};
  if (name == "aggressive") return {1.0, 0.4, 0.3, 0.2, 0.1, 0.1};
  if (name == "beamformer") return {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  throw ConfigError("unknown remix preset: " + name);
}

RemixSpec preset_remix(const std::string& name, int num_channels, const FrequencyGrid& grid) {
  const std::vector<double> gains = preset_gains(name, num_channels);
  RemixSpec spec;
  for (double g : gains) spec.responses.push_back(DesiredResponse::diotic_flat(g, grid));
  spec.weights.assign(gains.size(), 1.0);
  return spec;
}

SceneSpec build_scene(const ExperimentConfig& config) {
  SceneSpec scene;
  scene.geometry = array_preset(config.array);
  scene.grid = make_frequency_grid(config.sample_rate_hz, config.nfft);

  if (config.scene_source == "synthetic") {
    for (double az_deg : config.source_azimuths_deg) {
      SourceChannel ch;
      ch.kind = ChannelKind::Rank1;
      ch.atf = synth_head_atf(scene.geometry, az_deg * kPi / 180.0, config.source_distance_m,
                              scene.grid, config.head_radius_m, scene.sound_speed_mps);
      ch.dry_psd = speech_shaped_psd(scene.grid);
      ch.label = "az" + std::to_string(static_cast<int>(std::lround(az_deg)));
      scene.channels.push_back(std::move(ch));
    }
  } else if (config.scene_source == "ir") {
    if (config.ir_files.empty()) throw ConfigError("scene_source 'ir' needs ir_files");
    auto loaded = load_impulse_responses(config.ir_files, scene.geometry, scene.grid);
    for (auto& ch : loaded) scene.channels.push_back(std::move(ch));
  } else {
    throw ConfigError("unknown scene_source: " + config.scene_source);
  }

  // Mean source gain at the array is ~1/distance; scale the diffuse level so
  // noise_psd_scale is relative to a source image at the microphones.
  const double image_scale = 1.0 / (config.source_distance_m * config.source_distance_m);
  std::vector<double> level = speech_shaped_psd(scene.grid);
  for (auto& v : level) v *= config.noise_psd_scale * image_scale;
  scene.channels.push_back(
      diffuse_noise_channel(scene.geometry, scene.grid, level, scene.sound_speed_mps));
  return scene;
}

RemixSpec build_remix_spec(const ExperimentConfig& config, const SceneSpec& scene) {
  const int n = scene.num_channels();
  RemixSpec spec;
  if (config.preset == "custom") {
    if (static_cast<int>(config.custom_gains.size()) != n)
      throw ConfigError("custom preset needs one gain per channel (" + std::to_string(n) + ")");
    for (double g : config.custom_gains)
      spec.responses.push_back(DesiredResponse::diotic_flat(g, scene.grid));
    spec.weights.assign(static_cast<std::size_t>(n), 1.0);
  } else {
    spec = preset_remix(config.preset, n, scene.grid);
  }
  if (!config.lambda.empty()) {
    if (static_cast<int>(config.lambda.size()) != n)
      throw ConfigError("lambda needs one weight per channel (" + std::to_string(n) + ")");
    spec.weights = config.lambda;
  }
  return spec;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    file >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }

  static const std::set<std::string> known = {
      "scene_source", "ir_files",   "array",        "source_azimuths_deg",
      "source_distance_m", "head_radius_m", "noise_psd_scale", "preset",
      "custom_gains", "lambda",     "sample_rate_hz", "nfft",
      "delay_ms",     "length_ms",  "seed",         "duration_s",
      "stft_window",  "stft_hop",   "band_lo_hz",   "band_hi_hz",
      "out_dir",      "run_empirical"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) throw ConfigError("unknown config key: " + key);
  }

  ExperimentConfig c;
  try {
    if (j.contains("scene_source")) c.scene_source = j["scene_source"].get<std::string>();
    if (j.contains("ir_files")) c.ir_files = j["ir_files"].get<std::vector<std::string>>();
    if (j.contains("array")) c.array = j["array"].get<std::string>();
    if (j.contains("source_azimuths_deg"))
      c.source_azimuths_deg = j["source_azimuths_deg"].get<std::vector<double>>();
    if (j.contains("source_distance_m")) c.source_distance_m = j["source_distance_m"].get<double>();
    if (j.contains("head_radius_m")) c.head_radius_m = j["head_radius_m"].get<double>();
    if (j.contains("noise_psd_scale")) c.noise_psd_scale = j["noise_psd_scale"].get<double>();
    if (j.contains("preset")) c.preset = j["preset"].get<std::string>();
    if (j.contains("custom_gains")) c.custom_gains = j["custom_gains"].get<std::vector<double>>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<std::vector<double>>();
    if (j.contains("sample_rate_hz")) c.sample_rate_hz = j["sample_rate_hz"].get<double>();
    if (j.contains("nfft")) c.nfft = j["nfft"].get<int>();
    if (j.contains("delay_ms")) c.delay_ms = j["delay_ms"].get<double>();
    if (j.contains("length_ms")) c.length_ms = j["length_ms"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("duration_s")) c.duration_s = j["duration_s"].get<double>();
    if (j.contains("stft_window")) c.stft_window = j["stft_window"].get<int>();
    if (j.contains("stft_hop")) c.stft_hop = j["stft_hop"].get<int>();
    if (j.contains("band_lo_hz")) c.band_lo_hz = j["band_lo_hz"].get<double>();
    if (j.contains("band_hi_hz")) c.band_hi_hz = j["band_hi_hz"].get<double>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("run_empirical")) c.run_empirical = j["run_empirical"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError("config value error in " + path + ": " + e.what());
  }
  return c;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  std::string stage = "scene";
  try {
    result.scene = build_scene(config);
    result.scene.validate();
    result.spec = build_remix_spec(config, result.scene);

    stage = "design";
    result.filter = design_msdw_mwf(result.scene, result.spec);

    // Desk-scale fallback: shrink the FIR when fs*length exceeds nfft.
    double delay_ms = config.delay_ms;
    double length_ms = config.length_ms;
    bool fir_scaled = false;
    if (length_ms * config.sample_rate_hz / 1000.0 > config.nfft) {
      delay_ms = 8.0;
      length_ms = 64.0;
      fir_scaled = true;
    }
    stage = "fir";
    result.fir = to_causal_fir(result.filter, delay_ms, length_ms);

    stage = "analysis";
    result.cues = cue_report(result.scene, result.spec, result.filter);
    const bool diotic_spec =
        std::all_of(result.spec.responses.begin(), result.spec.responses.end(),
                    [](const DesiredResponse& r) { return r.form == ResponseForm::Diotic; });
    result.spectra = diotic_spec ? weighted_error_psd_pairwise(result.scene, result.spec)
                                 : weighted_error_psd_direct(result.scene, result.spec, result.filter);
    result.band = band_mean(result.cues, config.band_lo_hz, config.band_hi_hz);

    stage = "serialize";
    fs::create_directories(config.out_dir);
    const std::string base = (fs::path(config.out_dir) / "filter").string();
    export_fir(result.fir, base + ".tmp");
    finalize_artifact(base + ".tmp_left.wav", base + "_left.wav");
    finalize_artifact(base + ".tmp_right.wav", base + "_right.wav");
    finalize_artifact(base + ".tmp.meta", base + ".meta");
    result.artifacts = {base + "_left.wav", base + "_right.wav", base + ".meta"};

    const std::string cue_path = (fs::path(config.out_dir) / "cue_report.csv").string();
    write_cue_csv(cue_path + ".tmp", result.cues);
    finalize_artifact(cue_path + ".tmp", cue_path);
    result.artifacts.push_back(cue_path);

    const std::string err_path = (fs::path(config.out_dir) / "error_spectra.csv").string();
    write_error_spectra_csv(err_path + ".tmp", result.spectra);
    finalize_artifact(err_path + ".tmp", err_path);
    result.artifacts.push_back(err_path);

    EmpiricalItf empirical;
    if (config.run_empirical) {
      stage = "simulate";
      std::vector<MultichannelSignal> dry;
      std::uint64_t stream = 0;
      for (const auto& ch : result.scene.channels)
        if (ch.kind == ChannelKind::Rank1)
          dry.push_back(synth_speech_shaped_noise(config.duration_s, config.seed + 1000 * ++stream,
                                                  result.scene.grid));
      const RenderResult rendered = render_images(result.scene, dry, config.seed);

      const int taps = result.fir.num_taps();
      const int delay = result.fir.delay_samples;
      const Eigen::Index total = rendered.mixture.length();
      const Eigen::Index t0 = taps - 1;  // steady state of the convolution

      double err_power = 0.0;
      std::vector<MultichannelSignal> outs_trimmed;
      std::vector<MultichannelSignal> ins_trimmed;
      std::vector<std::string> labels;
      for (int n = 0; n < result.scene.num_channels(); ++n) {
        const auto& image = rendered.images[static_cast<std::size_t>(n)];
        MultichannelSignal filtered = apply_fir(result.fir, image);

        const auto& resp = result.spec.responses[static_cast<std::size_t>(n)];
        const Eigen::Index span = total - t0;
        double acc = 0.0;
        for (Eigen::Index t = t0; t < total; ++t) {
          const double gl = resp.gain[0];  // flat diotic gains in experiments
          const double dl = filtered.samples(0, t) -
                            gl * image.samples(result.scene.geometry.ref_left, t - delay);
          const double dr = filtered.samples(1, t) -
                            gl * image.samples(result.scene.geometry.ref_right, t - delay);
          acc += dl * dl + dr * dr;
        }
        err_power += result.spec.weights[static_cast<std::size_t>(n)] * acc / static_cast<double>(span);

        if (result.scene.channels[static_cast<std::size_t>(n)].kind == ChannelKind::Rank1) {
          MultichannelSignal in_trim;
          in_trim.sample_rate_hz = image.sample_rate_hz;
          in_trim.samples = image.samples.middleCols(t0, total - t0);
          MultichannelSignal out_trim;
          out_trim.sample_rate_hz = filtered.sample_rate_hz;
          out_trim.samples = filtered.samples.middleCols(t0, total - t0);
          ins_trimmed.push_back(std::move(in_trim));
          outs_trimmed.push_back(std::move(out_trim));
          labels.push_back(result.scene.channels[static_cast<std::size_t>(n)].label);
        }
      }
      result.empirical_error_power = err_power;

      const FreqFilter realized = realized_response(result.fir, result.scene.grid,
                                                    result.scene.geometry.ref_left,
                                                    result.scene.geometry.ref_right);
      const ErrorSpectra realized_err =
          weighted_error_psd_direct(result.scene, result.spec, realized);
      std::vector<double> both(realized_err.left.size());
      for (std::size_t f = 0; f < both.size(); ++f)
        both[f] = realized_err.left[f] + realized_err.right[f];
      result.predicted_error_power = integrate_psd(result.scene.grid, both);

      StftParams params{config.stft_window, config.stft_hop};
      empirical = empirical_itf(ins_trimmed, outs_trimmed, result.scene.geometry, params);
      const std::string emp_path = (fs::path(config.out_dir) / "empirical.csv").string();
      write_empirical_csv(emp_path + ".tmp", empirical, labels);
      finalize_artifact(emp_path + ".tmp", emp_path);
      result.artifacts.push_back(emp_path);
      result.empirical_ran = true;
    }

    stage = "manifest";
    json manifest;
    manifest["config"] = {
        {"scene_source", config.scene_source},
        {"ir_files", config.ir_files},
        {"array", config.array},
        {"source_azimuths_deg", config.source_azimuths_deg},
        {"source_distance_m", config.source_distance_m},
        {"head_radius_m", config.head_radius_m},
        {"noise_psd_scale", config.noise_psd_scale},
        {"preset", config.preset},
        {"custom_gains", config.custom_gains},
        {"lambda", result.spec.weights},
        {"sample_rate_hz", config.sample_rate_hz},
        {"nfft", config.nfft},
        {"delay_ms", config.delay_ms},
        {"length_ms", config.length_ms},
        {"seed", config.seed},
        {"duration_s", config.duration_s},
        {"stft_window", config.stft_window},
        {"stft_hop", config.stft_hop},
        {"band_lo_hz", config.band_lo_hz},
        {"band_hi_hz", config.band_hi_hz},
        {"run_empirical", config.run_empirical},
    };
    std::vector<double> expanded_gains;
    for (const auto& r : result.spec.responses)
      expanded_gains.push_back(r.form == ResponseForm::Diotic ? r.gain[0] : std::nan(""));
    manifest["expanded"] = {
        {"gains", expanded_gains},
        {"num_channels", result.scene.num_channels()},
        {"num_mics", result.scene.num_mics()},
        {"fir_delay_samples", result.fir.delay_samples},
        {"fir_num_taps", result.fir.num_taps()},
        {"fir_scaled_down", result.fir.num_taps() !=
                                 static_cast<int>(std::lround(config.length_ms *
                                                              config.sample_rate_hz / 1000.0))},
        {"design_loaded_bins", result.filter.loaded_bins},
    };
    manifest["decisions"] = {
        {"band_average", "arithmetic mean of |error| per third-octave band; summary band " +
                             format_double(config.band_lo_hz) + "-" +
                             format_double(config.band_hi_hz) + " Hz"},
        {"empirical_itf_convention",
         "sum_k X_left conj(X_right) / sum_k |X_left|^2 per frame sums; conjugate of the "
         "analytic right/left ratio, so empirical IPD errors carry the opposite sign"},
        {"head_model", "Woodworth delay, 1/distance gain, magnitude-only one-pole/one-zero shadow"},
    };
    manifest["summary"] = {
        {"band_mean_abs_ild_db", result.band.mean_abs_ild_db},
        {"band_mean_abs_ipd_rad", result.band.mean_abs_ipd_rad},
        {"band_bins_used", result.band.bins_used},
        {"band_bins_excluded", result.band.bins_excluded},
    };
    if (result.empirical_ran) {
      manifest["summary"]["empirical_error_power"] = result.empirical_error_power;
      manifest["summary"]["predicted_error_power"] = result.predicted_error_power;
    }
    const std::string man_path = (fs::path(config.out_dir) / "manifest.json").string();
    atomic_write_text(man_path, manifest.dump(2) + "\n");
    result.artifacts.push_back(man_path);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("stage ") + stage + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("stage ") + stage + ": " + e.what(), e.bin());
  }
  return result;
}

std::string fig_csv_header() {
  return "series,frequency_hz,mean_abs_ild_err_db,mean_abs_ipd_err_rad";
}

namespace {

// Per-bin mean of |ILD err| / |IPD err| over the directional (Rank1) sources.
void append_series(std::ostringstream& csv, const std::string& series, const CueReport& report) {
  for (int f = 0; f < report.grid.num_bins(); ++f) {
    double ild_sum = 0.0, ipd_sum = 0.0;
    int used = 0;
    for (int s = 0; s < report.num_sources(); ++s) {
      const double ild = report.ild_err_db[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
      const double ipd = report.ipd_err_rad[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
      if (!cue_defined(ild) || !cue_defined(ipd)) continue;
      ild_sum += std::abs(ild);
      ipd_sum += std::abs(ipd);
      ++used;
    }
    csv << series << "," << format_double(report.grid.hz(f)) << ",";
    if (used > 0)
      csv << format_double(ild_sum / used) << "," << format_double(ipd_sum / used);
    else
      csv << "nan,nan";
    csv << "\n";
  }
}

}  // namespace

std::string scenario_fig3(const std::string& out_dir) {
  ExperimentConfig config;
  config.array = "earpiece4";
  const SceneSpec scene = [&] {
    auto s = build_scene(config);
    s.validate();
    return s;
  }();

  std::ostringstream csv;
  csv << fig_csv_header() << "\n";
  for (const std::string preset : {"mild", "aggressive", "beamformer"}) {
    const RemixSpec spec = preset_remix(preset, scene.num_channels(), scene.grid);
    const FreqFilter filter = design_msdw_mwf(scene, spec);
    append_series(csv, preset, cue_report(scene, spec, filter));
  }

  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "fig3.csv").string();
  atomic_write_text(path, csv.str());
  return path;
}

std::string scenario_fig4(const std::string& out_dir) {
  std::ostringstream csv;
  csv << fig_csv_header() << "\n";
  for (const std::string array : {"earpiece4", "head8", "body16"}) {
    ExperimentConfig config;
    config.array = array;
    const SceneSpec scene = [&] {
      auto s = build_scene(config);
      s.validate();
      return s;
    }();
    const RemixSpec spec = preset_remix("aggressive", scene.num_channels(), scene.grid);
    const FreqFilter filter = design_msdw_mwf(scene, spec);
    append_series(csv, array, cue_report(scene, spec, filter));
  }

  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "fig4.csv").string();
  atomic_write_text(path, csv.str());
  return path;
}

bool selftest(std::ostream& log) {
  bool ok = true;
  auto check = [&](const std::string& name, bool pass) {
    log << (pass ? "PASS" : "FAIL") << "  " << name << "\n";
    ok = ok && pass;
  };

  ExperimentConfig config;
  config.nfft = 256;
  const SceneSpec scene = build_scene(config);
  const RemixSpec uniform = [&] {
    RemixSpec s;
    for (int n = 0; n < scene.num_channels(); ++n)
      s.responses.push_back(DesiredResponse::diotic_flat(0.7, scene.grid));
    s.weights.assign(static_cast<std::size_t>(scene.num_channels()), 1.0);
    return s;
  }();

  // Uniform responses: no separation needed, so no error and no cue shift.
  const ErrorSpectra zero = weighted_error_psd_pairwise(scene, uniform);
  double max_err = 0.0;
  for (double v : zero.left) max_err = std::max(max_err, std::abs(v));
  for (double v : zero.right) max_err = std::max(max_err, std::abs(v));
  check("uniform responses give zero weighted error", max_err <= 1e-12);

  const auto delta = itf_error_exact(scene, uniform, 0);
  double max_delta = 0.0;
  for (const auto& d : delta)
    if (cue_defined(d)) max_delta = std::max(max_delta, std::abs(d));
  check("uniform responses give zero ITF error", max_delta <= 1e-12);

  // Optimal-filter identity (the design satisfies the per-channel expansion).
  const RemixSpec aggressive = preset_remix("aggressive", scene.num_channels(), scene.grid);
  const FreqFilter w = design_msdw_mwf(scene, aggressive);
  const auto mixture = weighted_mixture_psd(scene, aggressive.weights);
  double max_resid = 0.0;
  for (int f = 0; f < scene.grid.num_bins(); f += 16) {
    const Eigen::LDLT<MatrixXcd> ldlt(mixture[static_cast<std::size_t>(f)]);
    for (int n = 0; n < scene.num_channels(); ++n) {
      MatrixXcd expect = aggressive.responses[static_cast<std::size_t>(n)].matrix_at(
          f, scene.num_mics(), scene.geometry.ref_left, scene.geometry.ref_right);
      for (int m = 0; m < scene.num_channels(); ++m) {
        const double diff = aggressive.responses[static_cast<std::size_t>(m)].gain[0] -
                            aggressive.responses[static_cast<std::size_t>(n)].gain[0];
        if (diff == 0.0) continue;
        MatrixXcd gm = MatrixXcd::Zero(2, scene.num_mics());
        gm(0, scene.geometry.ref_left) = diff;
        gm(1, scene.geometry.ref_right) = diff;
        expect += aggressive.weights[static_cast<std::size_t>(m)] * gm *
                  ldlt.solve(channel_psd_at(scene.channels[static_cast<std::size_t>(m)], f))
                      .adjoint()
                      .adjoint();
      }
      const double scale = std::max(1e-300, w.taps[static_cast<std::size_t>(f)].norm());
      max_resid = std::max(max_resid,
                           (w.taps[static_cast<std::size_t>(f)] - expect).norm() / scale);
    }
  }
  check("designed filter satisfies the per-channel identity", max_resid <= 1e-10);

  // Hermitian solve agrees with the brute-force normal equations.
  const FreqFilter w_ref = reference::design_normal_equations(scene, aggressive);
  double max_gap = 0.0;
  for (int f = 0; f < scene.grid.num_bins(); ++f) {
    const double scale = std::max(1e-300, w_ref.taps[static_cast<std::size_t>(f)].norm());
    max_gap = std::max(max_gap, (w.taps[static_cast<std::size_t>(f)] -
                                 w_ref.taps[static_cast<std::size_t>(f)])
                                        .norm() /
                                    scale);
  }
  check("design matches brute-force normal equations", max_gap <= 1e-9);

  return ok;
}

}  // namespace remix
