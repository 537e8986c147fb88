#include "remix/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace remix {

namespace {

std::vector<double> diotic_gains(const RemixSpec& spec, int num_channels, int bin) {
  std::vector<double> g(static_cast<std::size_t>(num_channels));
  for (int n = 0; n < num_channels; ++n) {
    const auto& r = spec.responses[static_cast<std::size_t>(n)];
    if (r.form != ResponseForm::Diotic)
      throw ConfigError("this analysis requires Diotic responses; use the direct error form");
    g[static_cast<std::size_t>(n)] = r.gain[static_cast<std::size_t>(bin)];
  }
  return g;
}

// Shared per-bin machinery for the Eq.-19/20/21 family. Computes the per-ear
// coupling sums u_ear = sum_m lambda_m (g_m - g_n)/g_n *
// (e_ear^T R_cm Rbar^-1 A_n)/(e_ear^T A_n).
struct CueCouplings {
  Complex u_left;
  Complex u_right;
  bool defined;
};

CueCouplings cue_couplings(const SceneSpec& scene, const RemixSpec& spec, int channel, int bin,
                           const Eigen::LDLT<MatrixXcd>& mixture_ldlt) {
  const auto& chan = scene.channels[static_cast<std::size_t>(channel)];
  const VectorXcd& a = chan.atf[static_cast<std::size_t>(bin)];
  const int e1 = scene.geometry.ref_left;
  const int e2 = scene.geometry.ref_right;
  const std::vector<double> g = diotic_gains(spec, scene.num_channels(), bin);
  const double gn = g[static_cast<std::size_t>(channel)];

  CueCouplings out{Complex(0, 0), Complex(0, 0), false};
  if (gn == 0.0 || a(e1) == Complex(0, 0) || a(e2) == Complex(0, 0)) return out;

  const VectorXcd solved = mixture_ldlt.solve(a);  // Rbar^-1 A_n
  for (int m = 0; m < scene.num_channels(); ++m) {
    const double diff = g[static_cast<std::size_t>(m)] - gn;
    if (diff == 0.0) continue;
    const VectorXcd coupled =
        channel_psd_at(scene.channels[static_cast<std::size_t>(m)], bin) * solved;
    const Complex scale = spec.weights[static_cast<std::size_t>(m)] * diff / gn;
    out.u_left += scale * coupled(e1) / a(e1);
    out.u_right += scale * coupled(e2) / a(e2);
  }
  out.defined = true;
  return out;
}

std::vector<Eigen::LDLT<MatrixXcd>> mixture_factorizations(const SceneSpec& scene,
                                                           const RemixSpec& spec) {
  const auto mixture = weighted_mixture_psd(scene, spec.weights);
  std::vector<Eigen::LDLT<MatrixXcd>> out(mixture.size());
#pragma omp parallel for schedule(static)
  for (int f = 0; f < static_cast<int>(mixture.size()); ++f)
    out[static_cast<std::size_t>(f)].compute(mixture[static_cast<std::size_t>(f)]);
  return out;
}

void check_rank1(const SceneSpec& scene, int channel) {
  if (channel < 0 || channel >= scene.num_channels())
    throw ConfigError("channel index out of range");
  if (scene.channels[static_cast<std::size_t>(channel)].kind != ChannelKind::Rank1)
    throw ConfigError("analytic ITF needs a Rank1 channel; use the empirical path");
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

ErrorSpectra weighted_error_psd_direct(const SceneSpec& scene, const RemixSpec& spec,
                                       const FreqFilter& filter) {
  spec.validate(scene);
  if (filter.num_bins() != scene.grid.num_bins())
    throw ConfigError("filter bin count does not match the scene grid");
  const int num_bins = scene.grid.num_bins();
  const int num_mics = scene.num_mics();

  ErrorSpectra out;
  out.grid = scene.grid;
  out.weighted_total.resize(static_cast<std::size_t>(num_bins));
  out.left.resize(static_cast<std::size_t>(num_bins));
  out.right.resize(static_cast<std::size_t>(num_bins));

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_bins; ++f) {
    Eigen::Matrix2cd err = Eigen::Matrix2cd::Zero();
    const MatrixXcd& w = filter.taps[static_cast<std::size_t>(f)];
    for (int n = 0; n < scene.num_channels(); ++n) {
      const MatrixXcd diff = spec.responses[static_cast<std::size_t>(n)].matrix_at(
                                 f, num_mics, filter.ref_left, filter.ref_right) -
                             w;
      err += spec.weights[static_cast<std::size_t>(n)] *
             (diff * channel_psd_at(scene.channels[static_cast<std::size_t>(n)], f) *
              diff.adjoint());
    }
    out.weighted_total[static_cast<std::size_t>(f)] = err;
    out.left[static_cast<std::size_t>(f)] = err(0, 0).real();
    out.right[static_cast<std::size_t>(f)] = err(1, 1).real();
  }
  return out;
}

ErrorSpectra weighted_error_psd_pairwise(const SceneSpec& scene, const RemixSpec& spec) {
  spec.validate(scene);
  const int num_bins = scene.grid.num_bins();
  const int num_channels = scene.num_channels();
  const int e1 = scene.geometry.ref_left;
  const int e2 = scene.geometry.ref_right;
  const auto ldlts = mixture_factorizations(scene, spec);

  ErrorSpectra out;
  out.grid = scene.grid;
  out.weighted_total.resize(static_cast<std::size_t>(num_bins));
  out.left.resize(static_cast<std::size_t>(num_bins));
  out.right.resize(static_cast<std::size_t>(num_bins));

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_bins; ++f) {
    const std::vector<double> g = diotic_gains(spec, num_channels, f);
    std::vector<MatrixXcd> psd(static_cast<std::size_t>(num_channels));
    std::vector<MatrixXcd> solved(static_cast<std::size_t>(num_channels));  // Rbar^-1 R_cn
    for (int n = 0; n < num_channels; ++n) {
      psd[static_cast<std::size_t>(n)] =
          channel_psd_at(scene.channels[static_cast<std::size_t>(n)], f);
      solved[static_cast<std::size_t>(n)] =
          ldlts[static_cast<std::size_t>(f)].solve(psd[static_cast<std::size_t>(n)]);
    }

    Eigen::Matrix2cd total = Eigen::Matrix2cd::Zero();
    Complex left(0, 0), right(0, 0);
    for (int n = 0; n < num_channels; ++n) {
      const double gn = g[static_cast<std::size_t>(n)];
      const double ln = spec.weights[static_cast<std::size_t>(n)];
      for (int m = 0; m < num_channels; ++m) {
        const double gm = g[static_cast<std::size_t>(m)];
        if (gn == gm) continue;  // equal responses contribute nothing
        const double lm = spec.weights[static_cast<std::size_t>(m)];
        const MatrixXcd kernel =
            psd[static_cast<std::size_t>(m)] * solved[static_cast<std::size_t>(n)];
        const double scale = ln * lm;
        // Eq. 12 with Diotic G: rows are the reference picks of the kernel.
        Eigen::Matrix2cd term;
        term(0, 0) = (gn - gm) * kernel(e1, e1) * gn;
        term(0, 1) = (gn - gm) * kernel(e1, e2) * gn;
        term(1, 0) = (gn - gm) * kernel(e2, e1) * gn;
        term(1, 1) = (gn - gm) * kernel(e2, e2) * gn;
        total += scale * term;
        const double d2 = (gn - gm) * (gn - gm);
        left += 0.5 * scale * d2 * kernel(e1, e1);
        right += 0.5 * scale * d2 * kernel(e2, e2);
      }
    }
    out.weighted_total[static_cast<std::size_t>(f)] = total;
    out.left[static_cast<std::size_t>(f)] = left.real();
    out.right[static_cast<std::size_t>(f)] = right.real();
  }
  return out;
}

Complex itf(const VectorXcd& vec, const MicArrayGeometry& geometry) {
  geometry.validate();
  if (vec.size() != geometry.num_mics())
    throw ConfigError("vector length does not match mic count");
  const Complex vl = vec(geometry.ref_left);
  const Complex vr = vec(geometry.ref_right);
  if (vl == Complex(0, 0) || vr == Complex(0, 0))
    throw UndefinedItfError("reference entry is zero; ITF undefined");
  return vr / vl;
}

Complex output_itf(const FreqFilter& filter, int bin, const VectorXcd& vec) {
  if (bin < 0 || bin >= filter.num_bins()) throw ConfigError("bin out of range");
  const MatrixXcd& w = filter.taps[static_cast<std::size_t>(bin)];
  if (vec.size() != w.cols()) throw ConfigError("vector length does not match filter");
  const Eigen::Vector2cd y = w * vec;
  const double floor = 1e-12 * w.norm() * vec.norm();
  if (std::abs(y(0)) <= floor || std::abs(y(1)) <= floor)
    throw UndefinedItfError("source is suppressed at the output; ITF undefined");
  return y(1) / y(0);
}

namespace {

std::vector<Complex> itf_error_exact_impl(const SceneSpec& scene, const RemixSpec& spec,
                                          int channel,
                                          const std::vector<Eigen::LDLT<MatrixXcd>>& ldlts) {
  const int num_bins = scene.grid.num_bins();
  std::vector<Complex> out(static_cast<std::size_t>(num_bins), undefined_cue());

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_bins; ++f) {
    const CueCouplings c =
        cue_couplings(scene, spec, channel, f, ldlts[static_cast<std::size_t>(f)]);
    if (!c.defined) continue;
    const Complex num = Complex(1, 0) + c.u_right;
    const Complex den = Complex(1, 0) + c.u_left;
    if (num == Complex(0, 0) || den == Complex(0, 0)) continue;
    out[static_cast<std::size_t>(f)] = std::log(num / den);
  }
  return out;
}

std::vector<Complex> itf_error_first_order_impl(
    const SceneSpec& scene, const RemixSpec& spec, int channel,
    const std::vector<Eigen::LDLT<MatrixXcd>>& ldlts) {
  const int num_bins = scene.grid.num_bins();
  std::vector<Complex> out(static_cast<std::size_t>(num_bins), undefined_cue());

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_bins; ++f) {
    const CueCouplings c =
        cue_couplings(scene, spec, channel, f, ldlts[static_cast<std::size_t>(f)]);
    if (!c.defined) continue;
    out[static_cast<std::size_t>(f)] = c.u_right - c.u_left;
  }
  return out;
}

std::vector<Complex> itf_error_rank1_impl(const SceneSpec& scene, const RemixSpec& spec,
                                          int channel,
                                          const std::vector<Eigen::LDLT<MatrixXcd>>& ldlts);

}  // namespace

std::vector<Complex> itf_error_exact(const SceneSpec& scene, const RemixSpec& spec, int channel) {
  spec.validate(scene);
  check_rank1(scene, channel);
  return itf_error_exact_impl(scene, spec, channel, mixture_factorizations(scene, spec));
}

std::vector<Complex> itf_error_first_order(const SceneSpec& scene, const RemixSpec& spec,
                                           int channel) {
  spec.validate(scene);
  check_rank1(scene, channel);
  return itf_error_first_order_impl(scene, spec, channel, mixture_factorizations(scene, spec));
}

std::vector<Complex> itf_error_rank1(const SceneSpec& scene, const RemixSpec& spec, int channel) {
  spec.validate(scene);
  check_rank1(scene, channel);
  return itf_error_rank1_impl(scene, spec, channel, mixture_factorizations(scene, spec));
}

namespace {

std::vector<Complex> itf_error_rank1_impl(const SceneSpec& scene, const RemixSpec& spec,
                                          int channel,
                                          const std::vector<Eigen::LDLT<MatrixXcd>>& ldlts) {
  const int num_bins = scene.grid.num_bins();
  const int e1 = scene.geometry.ref_left;
  const int e2 = scene.geometry.ref_right;
  const auto& chan = scene.channels[static_cast<std::size_t>(channel)];
  std::vector<Complex> out(static_cast<std::size_t>(num_bins), undefined_cue());

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_bins; ++f) {
    const VectorXcd& an = chan.atf[static_cast<std::size_t>(f)];
    const std::vector<double> g = diotic_gains(spec, scene.num_channels(), f);
    const double gn = g[static_cast<std::size_t>(channel)];
    if (gn == 0.0 || an(e1) == Complex(0, 0) || an(e2) == Complex(0, 0)) continue;

    const VectorXcd solved = ldlts[static_cast<std::size_t>(f)].solve(an);
    Complex sum(0, 0);
    for (int m = 0; m < scene.num_channels(); ++m) {
      const auto& other = scene.channels[static_cast<std::size_t>(m)];
      if (other.kind != ChannelKind::Rank1) continue;  // assumed negligible
      const double diff = g[static_cast<std::size_t>(m)] - gn;
      if (diff == 0.0) continue;
      const VectorXcd& am = other.atf[static_cast<std::size_t>(f)];
      const Complex coupling = am.adjoint() * solved;
      const Complex cue_gap = am(e2) / an(e2) - am(e1) / an(e1);
      sum += spec.weights[static_cast<std::size_t>(m)] *
             other.dry_psd[static_cast<std::size_t>(f)] * (diff / gn) * coupling * cue_gap;
    }
    out[static_cast<std::size_t>(f)] = sum;
  }
  return out;
}

}  // namespace

CueReport cue_report(const SceneSpec& scene, const RemixSpec& spec, const FreqFilter& filter) {
  spec.validate(scene);
  if (filter.num_bins() != scene.grid.num_bins())
    throw ConfigError("filter bin count does not match the scene grid");

  CueReport report;
  report.grid = scene.grid;
  report.ref_left = scene.geometry.ref_left;
  report.ref_right = scene.geometry.ref_right;

  const int num_bins = scene.grid.num_bins();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool diotic = std::all_of(spec.responses.begin(), spec.responses.end(),
                                  [](const DesiredResponse& r) { return r.form == ResponseForm::Diotic; });
  std::vector<Eigen::LDLT<MatrixXcd>> ldlts;
  if (diotic) ldlts = mixture_factorizations(scene, spec);

  for (int n = 0; n < scene.num_channels(); ++n) {
    const auto& chan = scene.channels[static_cast<std::size_t>(n)];
    if (chan.kind != ChannelKind::Rank1) continue;
    report.channel_index.push_back(n);
    report.source_labels.push_back(chan.label.empty() ? "ch" + std::to_string(n) : chan.label);

    std::vector<Complex> in(static_cast<std::size_t>(num_bins), undefined_cue());
    std::vector<Complex> outv(static_cast<std::size_t>(num_bins), undefined_cue());
    std::vector<double> ild(static_cast<std::size_t>(num_bins), nan);
    std::vector<double> ipd(static_cast<std::size_t>(num_bins), nan);
    for (int f = 0; f < num_bins; ++f) {
      try {
        const Complex itf_i = itf(chan.atf[static_cast<std::size_t>(f)], scene.geometry);
        const Complex itf_o = output_itf(filter, f, chan.atf[static_cast<std::size_t>(f)]);
        in[static_cast<std::size_t>(f)] = itf_i;
        outv[static_cast<std::size_t>(f)] = itf_o;
        const Complex ratio = itf_o / itf_i;
        ild[static_cast<std::size_t>(f)] = 20.0 * std::log10(std::abs(ratio));
        ipd[static_cast<std::size_t>(f)] = std::arg(ratio);
      } catch (const UndefinedItfError&) {
        // leave the NaN markers
      }
    }
    report.itf_in.push_back(std::move(in));
    report.itf_out.push_back(std::move(outv));
    report.ild_err_db.push_back(std::move(ild));
    report.ipd_err_rad.push_back(std::move(ipd));

    if (diotic) {
      report.delta_exact.push_back(itf_error_exact_impl(scene, spec, n, ldlts));
      report.delta_first_order.push_back(itf_error_first_order_impl(scene, spec, n, ldlts));
      report.delta_rank1.push_back(itf_error_rank1_impl(scene, spec, n, ldlts));
    } else {
      const std::vector<Complex> undef(static_cast<std::size_t>(num_bins), undefined_cue());
      report.delta_exact.push_back(undef);
      report.delta_first_order.push_back(undef);
      report.delta_rank1.push_back(undef);
    }
  }
  return report;
}

BandSummary band_mean_source(const CueReport& report, int source, double lo_hz, double hi_hz) {
  BandSummary s;
  double ild_sum = 0.0, ipd_sum = 0.0;
  const auto si = static_cast<std::size_t>(source);
  for (int f = 0; f < report.grid.num_bins(); ++f) {
    const double hz = report.grid.hz(f);
    if (hz < lo_hz || hz > hi_hz) continue;
    const double ild = report.ild_err_db[si][static_cast<std::size_t>(f)];
    const double ipd = report.ipd_err_rad[si][static_cast<std::size_t>(f)];
    if (!cue_defined(ild) || !cue_defined(ipd)) {
      ++s.bins_excluded;
      continue;
    }
    ild_sum += std::abs(ild);
    ipd_sum += std::abs(ipd);
    ++s.bins_used;
  }
  if (s.bins_used > 0) {
    s.mean_abs_ild_db = ild_sum / s.bins_used;
    s.mean_abs_ipd_rad = ipd_sum / s.bins_used;
  }
  return s;
}

BandSummary band_mean(const CueReport& report, double lo_hz, double hi_hz) {
  BandSummary total;
  double ild_sum = 0.0, ipd_sum = 0.0;
  for (int src = 0; src < report.num_sources(); ++src) {
    const BandSummary s = band_mean_source(report, src, lo_hz, hi_hz);
    ild_sum += s.mean_abs_ild_db * s.bins_used;
    ipd_sum += s.mean_abs_ipd_rad * s.bins_used;
    total.bins_used += s.bins_used;
    total.bins_excluded += s.bins_excluded;
  }
  if (total.bins_used > 0) {
    total.mean_abs_ild_db = ild_sum / total.bins_used;
    total.mean_abs_ipd_rad = ipd_sum / total.bins_used;
  }
  return total;
}

std::vector<std::pair<double, BandSummary>> third_octave_summary(const CueReport& report) {
  std::vector<std::pair<double, BandSummary>> out;
  const double fmax = report.grid.hz(report.grid.num_bins() - 1);
  const double edge = std::pow(2.0, 1.0 / 6.0);
  for (int k = -30; k <= 30; ++k) {
    const double center = 1000.0 * std::pow(2.0, k / 3.0);
    if (center / edge > fmax) break;
    if (center * edge < report.grid.hz(1)) continue;
    const BandSummary s = band_mean(report, center / edge, center * edge);
    if (s.bins_used + s.bins_excluded > 0) out.emplace_back(center, s);
  }
  return out;
}

double integrate_psd(const FrequencyGrid& grid, const std::vector<double>& one_sided) {
  if (static_cast<int>(one_sided.size()) != grid.num_bins())
    throw ConfigError("spectrum length does not match grid");
  const double df = grid.sample_rate_hz / grid.nfft;
  double acc = one_sided.front() + one_sided.back();
  for (std::size_t f = 1; f + 1 < one_sided.size(); ++f) acc += 2.0 * one_sided[f];
  return acc * df;
}

std::string cue_csv_header() {
  return "frequency_hz,source,ild_err_db,ipd_err_rad,delta_itf_re,delta_itf_im,variant";
}

std::string error_spectra_csv_header() {
  return "frequency_hz,left_err_psd,right_err_psd";
}

void write_cue_csv(const std::string& path, const CueReport& report) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw ConfigError("cannot write CSV: " + path);
  file << cue_csv_header() << "\n";

  struct Variant {
    const char* name;
    const std::vector<std::vector<Complex>>* delta;
  };
  const Variant variants[] = {{"exact", &report.delta_exact},
                              {"first_order", &report.delta_first_order},
                              {"rank1", &report.delta_rank1}};
  for (const auto& variant : variants) {
    for (int src = 0; src < report.num_sources(); ++src) {
      for (int f = 0; f < report.grid.num_bins(); ++f) {
        const auto si = static_cast<std::size_t>(src);
        const auto fi = static_cast<std::size_t>(f);
        const Complex delta = (*variant.delta)[si][fi];
        std::string row;
        append_value(row, report.grid.hz(f));
        row += ",";
        row += report.source_labels[si];
        row += ",";
        append_value(row, report.ild_err_db[si][fi]);
        row += ",";
        append_value(row, report.ipd_err_rad[si][fi]);
        row += ",";
        append_value(row, delta.real());
        row += ",";
        append_value(row, delta.imag());
        row += ",";
        row += variant.name;
        file << row << "\n";
      }
    }
  }
}

void write_error_spectra_csv(const std::string& path, const ErrorSpectra& spectra) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw ConfigError("cannot write CSV: " + path);
  file << error_spectra_csv_header() << "\n";
  for (int f = 0; f < spectra.grid.num_bins(); ++f) {
    std::string row;
    append_value(row, spectra.grid.hz(f));
    row += ",";
    append_value(row, spectra.left[static_cast<std::size_t>(f)]);
    row += ",";
    append_value(row, spectra.right[static_cast<std::size_t>(f)]);
    file << row << "\n";
  }
}

}  // namespace remix
