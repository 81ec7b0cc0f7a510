// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "score/core.hpp"
#include "score/fft.hpp"

namespace score {

/// Perturbation sampling config. Defaults: the conventional 3-way speed set
/// and modest pitch shifts that alter speaker character but not content.
struct PerturbConfig {
  std::vector<double> speed_factors = {0.9, 1.0, 1.1};
  std::vector<int> pitch_semitone_choices = {-2, -1, 0, 1, 2};
  std::uint64_t seed = 42;

  void validate() const {
    if (speed_factors.empty()) throw std::invalid_argument("PerturbConfig: no speed factors");
    if (pitch_semitone_choices.empty()) {
      throw std::invalid_argument("PerturbConfig: no pitch semitone choices");
    }
    for (double f : speed_factors) {
      if (!(f > 0.5 && f < 2.0)) {
        throw std::invalid_argument("PerturbConfig: speed factor " + std::to_string(f) +
                                    " outside (0.5, 2.0)");
      }
    }
    for (int s : pitch_semitone_choices) {
      if (s < -12 || s > 12) {
        throw std::invalid_argument("PerturbConfig: semitone " + std::to_string(s) +
                                    " outside [-12, 12]");
      }
    }
  }
};

namespace detail {

// Linear-interpolation resampling: output length round(n / factor), sample
// t reads position t * factor. Scales duration by 1/factor and every
// frequency by factor; the sample rate field is left unchanged.
inline Waveform resample_linear(const Waveform& w, double factor) {
  const std::size_t n = w.samples.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) / factor));
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.resize(out_len);
  for (std::size_t t = 0; t < out_len; ++t) {
    const double pos = static_cast<double>(t) * factor;
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= n - 1) i0 = n - 1;
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double frac = pos - static_cast<double>(i0);
    out.samples[t] = (1.0 - frac) * w.samples[i0] + frac * w.samples[i1];
  }
  return out;
}

}  // namespace detail

/// Speed perturbation: duration scales by 1/factor, frequencies by factor.
inline Waveform speed_perturb(const Waveform& w, double factor) {
  if (w.samples.empty()) throw std::invalid_argument("speed_perturb: empty waveform");
  if (!(factor > 0.5 && factor < 2.0)) {
    throw std::invalid_argument("speed_perturb: factor " + std::to_string(factor) +
                                " outside (0.5, 2.0)");
  }
  if (factor == 1.0) return w;
  return detail::resample_linear(w, factor);
}

// Phase vocoder parameters.
inline constexpr std::size_t kVocoderFft = 1024;
inline constexpr std::size_t kVocoderHop = 256;

namespace detail {

// Time-stretch by `stretch` (output duration = input duration * stretch)
// with the standard phase vocoder: STFT at analysis hop h_a, per-bin phase
// deltas unwrapped against the expected advance, accumulation at synthesis
// hop h_s = round(h_a * stretch), inverse STFT with overlap-add and
// window-square normalization. The input is reflect-padded by one window at
// each end so every emitted sample has full overlap coverage; without the
// padding, edge samples divide a phase-rotated frame by a near-zero window
// sum. Output is exactly round(n * stretch) samples.
inline Waveform time_stretch(const Waveform& w, double stretch) {
  const std::size_t n = w.samples.size();
  const std::size_t n_fft = kVocoderFft;
  const std::size_t h_a = kVocoderHop;
  if (n < n_fft) {
    throw std::invalid_argument("time_stretch: waveform shorter than one STFT window (" +
                                std::to_string(n) + " < " + std::to_string(n_fft) + ")");
  }
  std::vector<double> padded(n + 2 * n_fft);
  const auto last = static_cast<long long>(n) - 1;
  for (std::size_t i = 0; i < padded.size(); ++i) {
    long long idx = static_cast<long long>(i) - static_cast<long long>(n_fft);
    if (idx < 0) idx = -idx;
    if (idx > last) idx = 2 * last - idx;
    padded[i] = w.samples[static_cast<std::size_t>(std::clamp(idx, 0LL, last))];
  }
  const auto h_s = static_cast<std::size_t>(
      std::llround(static_cast<double>(h_a) * stretch));
  const std::size_t n_frames = 1 + (padded.size() - n_fft) / h_a;
  const std::size_t half = n_fft / 2;

  std::vector<double> window(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n_fft));
  }

  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * stretch));
  std::vector<double> ola((n_frames - 1) * h_s + n_fft, 0.0);
  std::vector<double> wsum(ola.size(), 0.0);

  std::vector<std::complex<double>> spec(n_fft);
  std::vector<double> prev_phase(half + 1, 0.0);
  std::vector<double> out_phase(half + 1, 0.0);

  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * h_a;
    for (std::size_t i = 0; i < n_fft; ++i) {
      spec[i] = {padded[start + i] * window[i], 0.0};
    }
    fft_inplace(spec, /*inverse=*/false);

    for (std::size_t k = 0; k <= half; ++k) {
      const double mag = std::abs(spec[k]);
      const double phase = std::arg(spec[k]);
      if (f == 0) {
        out_phase[k] = phase;
      } else {
        // Expected advance per analysis hop for bin k.
        const double omega = two_pi * static_cast<double>(k) *
                             static_cast<double>(h_a) / static_cast<double>(n_fft);
        double delta = phase - prev_phase[k] - omega;
        delta -= two_pi * std::round(delta / two_pi);  // wrap to (-pi, pi]
        out_phase[k] += (omega + delta) * (static_cast<double>(h_s) / static_cast<double>(h_a));
      }
      prev_phase[k] = phase;
      spec[k] = std::polar(mag, out_phase[k]);
    }
    spec[0] = {spec[0].real(), 0.0};
    spec[half] = {spec[half].real(), 0.0};
    for (std::size_t k = half + 1; k < n_fft; ++k) {
      spec[k] = std::conj(spec[n_fft - k]);
    }
    fft_inplace(spec, /*inverse=*/true);

    const std::size_t out_start = f * h_s;
    for (std::size_t i = 0; i < n_fft; ++i) {
      ola[out_start + i] += spec[i].real() * window[i];
      wsum[out_start + i] += window[i] * window[i];
    }
  }

  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.assign(out_len, 0.0);
  const auto out_off = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_fft) * stretch));
  for (std::size_t i = 0; i < out_len && out_off + i < ola.size(); ++i) {
    const std::size_t j = out_off + i;
    out.samples[i] = (wsum[j] > 1e-8) ? ola[j] / wsum[j] : 0.0;
  }
  return out;
}

}  // namespace detail

/// Pitch shift by 2^(semitones/12) with duration preserved: resample (which
/// shifts both pitch and duration), then phase-vocoder time-stretch back to
/// the original duration. semitones == 0 is an exact bypass.
inline Waveform pitch_shift(const Waveform& w, int semitones) {
  if (w.samples.empty()) throw std::invalid_argument("pitch_shift: empty waveform");
  if (semitones < -12 || semitones > 12) {
    throw std::invalid_argument("pitch_shift: semitones " + std::to_string(semitones) +
                                " outside [-12, 12]");
  }
  if (semitones == 0) return w;
  const double ratio = std::pow(2.0, static_cast<double>(semitones) / 12.0);
  const Waveform resampled = detail::resample_linear(w, ratio);
  if (resampled.samples.size() < kVocoderFft) {
    throw std::invalid_argument("pitch_shift: waveform shorter than one STFT window");
  }
  return detail::time_stretch(resampled, ratio);
}

/// Samples one speed factor and one semitone value and applies speed
/// perturbation then pitch shift, in that order. Consumes exactly two draws
/// from `rng`, so results are reproducible given the seed and draw index.
inline Waveform make_perturbed(const Waveform& w, const PerturbConfig& cfg,
                               std::mt19937_64& rng) {
  cfg.validate();
  const double factor = cfg.speed_factors[rng() % cfg.speed_factors.size()];
  const int semitones =
      cfg.pitch_semitone_choices[rng() % cfg.pitch_semitone_choices.size()];
  return pitch_shift(speed_perturb(w, factor), semitones);
}

}  // namespace score
