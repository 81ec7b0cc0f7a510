// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "score/core.hpp"
#include "score/fft.hpp"

namespace score {

/// Log-mel filterbank configuration. Defaults are the usual 16 kHz ASR
/// frontend: 25 ms Hann window, 10 ms hop, 40 mel bands over 20-7600 Hz.
struct MelConfig {
  int sample_rate_hz = 16000;
  int win_length_samples = 400;
  int hop_length_samples = 160;
  int n_fft = 512;
  int n_mels = 40;
  double fmin_hz = 20.0;
  double fmax_hz = 7600.0;
  double log_floor = 1e-10;

  void validate() const {
    if (sample_rate_hz <= 0) throw std::invalid_argument("MelConfig: sample_rate_hz must be > 0");
    if (win_length_samples <= 0 || win_length_samples > n_fft) {
      throw std::invalid_argument("MelConfig: need 0 < win_length_samples <= n_fft");
    }
    if (hop_length_samples < 1) throw std::invalid_argument("MelConfig: hop_length_samples must be >= 1");
    if (n_mels < 1) throw std::invalid_argument("MelConfig: n_mels must be >= 1");
    if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
      throw std::invalid_argument("MelConfig: need 0 <= fmin_hz < fmax_hz <= sample_rate_hz/2");
    }
    if (!is_pow2(static_cast<std::size_t>(n_fft))) {
      throw std::invalid_argument("MelConfig: n_fft must be a power of two");
    }
    if (log_floor <= 0.0) throw std::invalid_argument("MelConfig: log_floor must be > 0");
  }
};

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Center frequencies (Hz) of the n_mels triangular filters.
inline std::vector<double> mel_filter_centers_hz(const MelConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  const double step = (mel_hi - mel_lo) / (cfg.n_mels + 1);
  std::vector<double> centers(cfg.n_mels);
  for (int k = 0; k < cfg.n_mels; ++k) {
    centers[k] = mel_to_hz(mel_lo + (k + 1) * step);
  }
  return centers;
}

namespace detail {

// Triangular filters with mel-spaced corners, weights evaluated in the mel
// domain at the FFT bin center frequencies. Rows: n_mels, cols: n_fft/2 + 1.
inline Matrix build_mel_filterbank(const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  const double step = (mel_hi - mel_lo) / (cfg.n_mels + 1);

  Matrix fb(cfg.n_mels, n_bins, 0.0);
  for (int b = 0; b < n_bins; ++b) {
    const double hz = static_cast<double>(b) * cfg.sample_rate_hz / cfg.n_fft;
    const double mel = hz_to_mel(hz);
    for (int k = 0; k < cfg.n_mels; ++k) {
      const double left = mel_lo + k * step;
      const double center = left + step;
      const double right = center + step;
      double w = 0.0;
      if (mel > left && mel < right) {
        w = (mel <= center) ? (mel - left) / step : (right - mel) / step;
      }
      fb.at(k, b) = w;
    }
  }
  return fb;
}

}  // namespace detail

/// Log-mel filterbank features. T = 1 + floor((len - win) / hop) frames of
/// n_mels values; each value is ln(max(mel_energy, log_floor)) of the
/// Hann-windowed magnitude-squared spectrum.
inline FeatureSequence log_mel(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  const std::size_t len = w.samples.size();
  const std::size_t win = static_cast<std::size_t>(cfg.win_length_samples);
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_length_samples);
  if (len < win) {
    throw std::invalid_argument("log_mel: waveform shorter than one window (" +
                                std::to_string(len) + " < " + std::to_string(win) + ")");
  }
  if (w.sample_rate_hz != cfg.sample_rate_hz) {
    throw std::invalid_argument("log_mel: waveform rate " + std::to_string(w.sample_rate_hz) +
                                " Hz does not match config rate " +
                                std::to_string(cfg.sample_rate_hz) + " Hz");
  }

  const std::size_t n_frames = 1 + (len - win) / hop;
  const int n_bins = cfg.n_fft / 2 + 1;
  const Matrix fb = detail::build_mel_filterbank(cfg);

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(win));
  }

  FeatureSequence out(n_frames, static_cast<std::size_t>(cfg.n_mels));
  out.frame_hop_s = static_cast<double>(hop) / cfg.sample_rate_hz;

  std::vector<std::complex<double>> spec(static_cast<std::size_t>(cfg.n_fft));
  std::vector<double> power(n_bins);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.n_fft); ++i) {
      spec[i] = (i < win) ? std::complex<double>(w.samples[start + i] * window[i], 0.0)
                          : std::complex<double>(0.0, 0.0);
    }
    fft_inplace(spec, /*inverse=*/false);
    for (int b = 0; b < n_bins; ++b) power[b] = std::norm(spec[b]);
    for (int k = 0; k < cfg.n_mels; ++k) {
      double e = 0.0;
      for (int b = 0; b < n_bins; ++b) e += fb.at(k, b) * power[b];
      out.at(t, k) = std::log(std::max(e, cfg.log_floor));
    }
  }
  return out;
}

}  // namespace score
