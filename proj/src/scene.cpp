#include "remix/scene.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>

#include "remix/fft.hpp"
#include "remix/wav.hpp"

namespace remix {

namespace {

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

double norm3(const std::array<double, 3>& p) {
  return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
}

// Contralateral high-frequency gain of the one-pole/one-zero shadow filter,
// as a function of the angle between mic and source directions. 1 at DC for
// every angle; alpha(0) = 2 (bright side), alpha(150 deg) = 0.1 (deep shadow).
double shadow_alpha(double incidence_rad) {
  constexpr double alpha_min = 0.1;
  constexpr double theta_min = 150.0 * kPi / 180.0;
  return (1.0 + alpha_min / 2.0) + (1.0 - alpha_min / 2.0) * std::cos(incidence_rad / theta_min * kPi);
}

}  // namespace

FrequencyGrid make_frequency_grid(double sample_rate_hz, int nfft) {
  if (sample_rate_hz <= 0.0) throw ConfigError("sample_rate_hz must be positive");
  if (nfft < 8 || nfft % 2 != 0)
    throw ConfigError("nfft must be even and >= 8, got " + std::to_string(nfft));
  FrequencyGrid grid;
  grid.sample_rate_hz = sample_rate_hz;
  grid.nfft = nfft;
  grid.bins.resize(static_cast<std::size_t>(nfft / 2 + 1));
  for (int f = 0; f <= nfft / 2; ++f)
    grid.bins[static_cast<std::size_t>(f)] = 2.0 * kPi * f * sample_rate_hz / nfft;
  return grid;
}

void MicArrayGeometry::validate() const {
  const int m = num_mics();
  if (m < 2) throw ConfigError("need at least 2 microphones");
  if (ref_left < 0 || ref_left >= m || ref_right < 0 || ref_right >= m)
    throw ConfigError("reference microphone index out of range");
  if (ref_left == ref_right) throw ConfigError("left and right references must differ");
}

MicArrayGeometry array_preset(const std::string& name) {
  constexpr double a = 0.0875;  // head radius, m
  auto on_head = [&](double azimuth_deg) -> std::array<double, 3> {
    const double az = azimuth_deg * kPi / 180.0;
    return {a * std::cos(az), a * std::sin(az), 0.0};
  };

  MicArrayGeometry g;
  if (name == "earpiece4") {
    const double step_deg = 0.015 / a * 180.0 / kPi;  // 1.5 cm along the surface
    g.positions = {on_head(90.0), on_head(-90.0), on_head(90.0 - step_deg),
                   on_head(-90.0 + step_deg)};
  } else if (name == "head8") {
    g.positions = {on_head(90.0),  on_head(-90.0), on_head(0.0),   on_head(45.0),
                   on_head(135.0), on_head(180.0), on_head(-45.0), on_head(-135.0)};
  } else if (name == "body16") {
    g.positions = {on_head(90.0),  on_head(-90.0), on_head(0.0),   on_head(45.0),
                   on_head(135.0), on_head(180.0), on_head(-45.0), on_head(-135.0)};
    // chest and back rows of the upper-body grid
    for (double y : {-0.18, -0.06, 0.06, 0.18}) {
      g.positions.push_back({0.10, y, -0.35});
      g.positions.push_back({-0.10, y, -0.35});
    }
  } else {
    throw ConfigError("unknown array preset: " + name);
  }
  g.ref_left = 0;
  g.ref_right = 1;
  return g;
}

std::vector<VectorXcd> synth_head_atf(const MicArrayGeometry& geometry, double azimuth_rad,
                                      double distance_m, const FrequencyGrid& grid,
                                      double head_radius_m, double sound_speed_mps) {
  geometry.validate();
  if (head_radius_m <= 0.0) throw ConfigError("head_radius_m must be positive");
  if (distance_m <= head_radius_m)
    throw ConfigError("source distance must exceed the head radius");

  const int num_mics = geometry.num_mics();
  const int num_bins = grid.num_bins();
  const double c = sound_speed_mps;
  const double a = head_radius_m;
  const std::array<double, 3> toward_source = {std::cos(azimuth_rad), std::sin(azimuth_rad), 0.0};

  // Per-mic far-field delay relative to the head center, and shadow gain.
  std::vector<double> delay_s(static_cast<std::size_t>(num_mics));
  std::vector<double> alpha(static_cast<std::size_t>(num_mics), 1.0);
  for (int m = 0; m < num_mics; ++m) {
    const auto& p = geometry.positions[static_cast<std::size_t>(m)];
    const double r = norm3(p);
    const double proj = p[0] * toward_source[0] + p[1] * toward_source[1] + p[2] * toward_source[2];
    const bool head_mounted = r >= 0.8 * a && r <= 1.2 * a;
    if (head_mounted) {
      const double incidence = std::acos(std::clamp(proj / r, -1.0, 1.0));
      // Woodworth: straight path to the illuminated side, tangent plus arc
      // into the shadow zone.
      delay_s[static_cast<std::size_t>(m)] =
          incidence <= kPi / 2.0 ? -(a / c) * std::cos(incidence) : (a / c) * (incidence - kPi / 2.0);
      alpha[static_cast<std::size_t>(m)] = shadow_alpha(incidence);
    } else {
      delay_s[static_cast<std::size_t>(m)] = -proj / c;  // plane-wave delay
    }
  }

  // One-pole/one-zero shadow response, corner at 2c/a. Applied as a
  // magnitude-only gain so interaural delay stays exactly Woodworth.
  const double corner = 2.0 * c / a;
  std::vector<VectorXcd> atf(static_cast<std::size_t>(num_bins));
  for (int f = 0; f < num_bins; ++f) {
    const double omega = grid.bins[static_cast<std::size_t>(f)];
    VectorXcd v(num_mics);
    for (int m = 0; m < num_mics; ++m) {
      const double am = alpha[static_cast<std::size_t>(m)];
      const double x = omega / corner;
      const double gain = std::sqrt((1.0 + am * am * x * x) / (1.0 + x * x)) / distance_m;
      const double phase = -omega * (distance_m / c + delay_s[static_cast<std::size_t>(m)]);
      v(m) = gain * Complex(std::cos(phase), std::sin(phase));
    }
    atf[static_cast<std::size_t>(f)] = std::move(v);
  }
  return atf;
}

SourceChannel diffuse_noise_channel(const MicArrayGeometry& geometry, const FrequencyGrid& grid,
                                    const std::vector<double>& level_psd, double sound_speed_mps) {
  geometry.validate();
  const int num_mics = geometry.num_mics();
  const int num_bins = grid.num_bins();
  if (static_cast<int>(level_psd.size()) != num_bins)
    throw ConfigError("diffuse level_psd length must match grid bins");
  for (double v : level_psd)
    if (v < 0.0) throw ConfigError("diffuse level_psd must be nonnegative");

  SourceChannel ch;
  ch.kind = ChannelKind::FullRank;
  ch.label = "diffuse";
  ch.psd.resize(static_cast<std::size_t>(num_bins));
  for (int f = 0; f < num_bins; ++f) {
    const double omega = grid.bins[static_cast<std::size_t>(f)];
    const double level = level_psd[static_cast<std::size_t>(f)];
    MatrixXcd r(num_mics, num_mics);
    for (int i = 0; i < num_mics; ++i) {
      for (int j = 0; j < num_mics; ++j) {
        const auto& pi = geometry.positions[static_cast<std::size_t>(i)];
        const auto& pj = geometry.positions[static_cast<std::size_t>(j)];
        const double d = std::sqrt((pi[0] - pj[0]) * (pi[0] - pj[0]) +
                                   (pi[1] - pj[1]) * (pi[1] - pj[1]) +
                                   (pi[2] - pj[2]) * (pi[2] - pj[2]));
        r(i, j) = level * sinc(omega * d / sound_speed_mps);
      }
      r(i, i) += 1e-10 * level;
    }
    ch.psd[static_cast<std::size_t>(f)] = std::move(r);
  }
  return ch;
}

MatrixXcd channel_psd_at(const SourceChannel& channel, int bin) {
  const auto f = static_cast<std::size_t>(bin);
  if (channel.kind == ChannelKind::FullRank) return channel.psd[f];
  const VectorXcd& a = channel.atf[f];
  return channel.dry_psd[f] * (a * a.adjoint());
}

std::vector<MatrixXcd> channel_psd(const SourceChannel& channel, const FrequencyGrid& grid) {
  std::vector<MatrixXcd> out(static_cast<std::size_t>(grid.num_bins()));
  for (int f = 0; f < grid.num_bins(); ++f) out[static_cast<std::size_t>(f)] = channel_psd_at(channel, f);
  return out;
}

std::vector<MatrixXcd> weighted_mixture_psd(const SceneSpec& scene,
                                            const std::vector<double>& weights) {
  if (static_cast<int>(weights.size()) != scene.num_channels())
    throw ConfigError("one weight per channel required");
  for (double w : weights)
    if (w <= 0.0) throw ConfigError("distortion weights must be strictly positive");

  const int num_bins = scene.grid.num_bins();
  const int num_mics = scene.num_mics();
  std::vector<MatrixXcd> mix(static_cast<std::size_t>(num_bins));
  std::atomic<long> bad_bin{num_bins};

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_bins; ++f) {
    MatrixXcd r = MatrixXcd::Zero(num_mics, num_mics);
    for (int n = 0; n < scene.num_channels(); ++n)
      r += weights[static_cast<std::size_t>(n)] *
           channel_psd_at(scene.channels[static_cast<std::size_t>(n)], f);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(r, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      long seen = bad_bin.load();
      while (f < seen && !bad_bin.compare_exchange_weak(seen, f)) {
      }
    }
    mix[static_cast<std::size_t>(f)] = std::move(r);
  }

  if (bad_bin.load() < num_bins)
    throw NumericalError(
        "weighted mixture PSD is not positive definite; add a diffuse noise channel",
        bad_bin.load());
  return mix;
}

double speech_shaped_psd(double freq_hz) {
  constexpr double knee_hz = 500.0;
  if (freq_hz <= knee_hz) return 1.0;
  const double ratio = knee_hz / freq_hz;
  return ratio * ratio;  // -6 dB per octave above the knee
}

std::vector<double> speech_shaped_psd(const FrequencyGrid& grid) {
  std::vector<double> out(static_cast<std::size_t>(grid.num_bins()));
  for (int f = 0; f < grid.num_bins(); ++f) out[static_cast<std::size_t>(f)] = speech_shaped_psd(grid.hz(f));
  return out;
}

std::vector<SourceChannel> load_impulse_responses(const std::vector<std::string>& paths,
                                                  const MicArrayGeometry& geometry,
                                                  const FrequencyGrid& grid,
                                                  const std::vector<std::vector<double>>& dry_psd) {
  geometry.validate();
  if (!dry_psd.empty() && dry_psd.size() != paths.size())
    throw ConfigError("dry_psd must be empty or have one spectrum per impulse response");

  const int num_mics = geometry.num_mics();
  const auto nfft = static_cast<std::size_t>(grid.nfft);
  RealFft fft(nfft);
  const std::vector<double> default_psd = speech_shaped_psd(grid);

  std::vector<SourceChannel> out;
  out.reserve(paths.size());
  for (std::size_t s = 0; s < paths.size(); ++s) {
    WavData wav = read_wav(paths[s]);
    if (wav.channels() != num_mics)
      throw ConfigError(paths[s] + ": expected " + std::to_string(num_mics) + " channels, got " +
                        std::to_string(wav.channels()));
    if (wav.sample_rate_hz != grid.sample_rate_hz)
      throw ConfigError(paths[s] + ": sample rate " + std::to_string(wav.sample_rate_hz) +
                        " does not match grid " + std::to_string(grid.sample_rate_hz));

    SourceChannel ch;
    ch.kind = ChannelKind::Rank1;
    ch.label = std::filesystem::path(paths[s]).stem().string();
    ch.dry_psd = dry_psd.empty() ? default_psd : dry_psd[s];
    if (static_cast<int>(ch.dry_psd.size()) != grid.num_bins())
      throw ConfigError(paths[s] + ": dry_psd length must match grid bins");
    ch.atf.assign(static_cast<std::size_t>(grid.num_bins()), VectorXcd(num_mics));

    std::vector<double> padded(nfft, 0.0);
    for (int m = 0; m < num_mics; ++m) {
      const auto len = std::min<std::size_t>(nfft, static_cast<std::size_t>(wav.frames()));
      std::fill(padded.begin(), padded.end(), 0.0);
      for (std::size_t t = 0; t < len; ++t)
        padded[t] = wav.samples(m, static_cast<Eigen::Index>(t));
      const auto spectrum = fft.forward(padded);
      for (int f = 0; f < grid.num_bins(); ++f)
        ch.atf[static_cast<std::size_t>(f)](m) = spectrum[static_cast<std::size_t>(f)];
    }
    out.push_back(std::move(ch));
  }
  return out;
}

void SourceChannel::validate(const FrequencyGrid& grid, int num_mics) const {
  const auto num_bins = static_cast<std::size_t>(grid.num_bins());
  if (kind == ChannelKind::Rank1) {
    if (atf.size() != num_bins || dry_psd.size() != num_bins)
      throw ConfigError("channel '" + label + "': per-bin data does not match grid");
    for (std::size_t f = 0; f < num_bins; ++f) {
      if (atf[f].size() != num_mics)
        throw ConfigError("channel '" + label + "': ATF length does not match mic count");
      if (!(dry_psd[f] >= 0.0) || !std::isfinite(dry_psd[f]))
        throw ConfigError("channel '" + label + "': dry PSD must be finite and nonnegative");
    }
    return;
  }
  if (psd.size() != num_bins)
    throw ConfigError("channel '" + label + "': per-bin PSD does not match grid");
  for (std::size_t f = 0; f < num_bins; ++f) {
    const MatrixXcd& r = psd[f];
    if (r.rows() != num_mics || r.cols() != num_mics)
      throw ConfigError("channel '" + label + "': PSD matrix size does not match mic count");
    const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
    if ((r - r.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ConfigError("channel '" + label + "': PSD is not Hermitian at bin " + std::to_string(f));
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(r, Eigen::EigenvaluesOnly);
    const double floor = -1e-10 * std::max(std::abs(r.trace().real()), 1e-300);
    if (es.eigenvalues().minCoeff() < floor)
      throw ConfigError("channel '" + label + "': PSD is not positive semidefinite at bin " +
                        std::to_string(f));
  }
}

void SceneSpec::validate() const {
  geometry.validate();
  if (channels.empty()) throw ConfigError("scene needs at least one source channel");
  if (grid.num_bins() != grid.nfft / 2 + 1) throw ConfigError("frequency grid is malformed");
  for (const auto& ch : channels) ch.validate(grid, num_mics());

  // Invertibility guarantee: some channel must be full rank on every bin.
  bool have_full_rank = false;
  for (const auto& ch : channels) {
    if (ch.kind != ChannelKind::FullRank) continue;
    bool ok = true;
    for (int f = 0; f < grid.num_bins() && ok; ++f) {
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es(ch.psd[static_cast<std::size_t>(f)],
                                                  Eigen::EigenvaluesOnly);
      ok = es.eigenvalues().minCoeff() > 0.0;
    }
    if (ok) {
      have_full_rank = true;
      break;
    }
  }
  if (!have_full_rank)
    throw ConfigError("no channel with full-rank PSD on every bin; add a diffuse noise channel");
}

}  // namespace remix
