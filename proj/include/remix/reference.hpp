#pragma once

#include "remix/analysis.hpp"
#include "remix/design.hpp"
#include "remix/scene.hpp"
#include "remix/signals.hpp"
#include "remix/types.hpp"

// Plain serial implementations kept as independent oracles for the tests and
// as baselines for the benchmark. They take the slow, obvious route on
// purpose: full-pivot solves of explicitly assembled normal equations,
// direct convolution sums, direct DFT sums.
namespace remix::reference {

// Solves W Rbar = sum_n lambda_n G_n R_cn per bin with a fully pivoted LU,
// no loading policy, serial over bins.
FreqFilter design_normal_equations(const SceneSpec& scene, const RemixSpec& spec);

// Direct-sum FIR filtering, output 2 x (T + L - 1).
MultichannelSignal convolve_direct(const FirFilter& fir, const MultichannelSignal& x);

// Direct-sum DFT of a real signal at bins 0..n/2 of an n-point transform.
std::vector<Complex> dft_direct(const std::vector<double>& x, int n);

// Serial evaluation of the weighted error PSD (same formula as the parallel
// direct form).
ErrorSpectra weighted_error_psd_serial(const SceneSpec& scene, const RemixSpec& spec,
                                       const FreqFilter& filter);

}  // namespace remix::reference
