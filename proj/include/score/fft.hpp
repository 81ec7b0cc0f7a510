// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace score {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// In-place radix-2 FFT. `a.size()` must be a power of two. The inverse
/// transform includes the 1/n scaling.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) {
    throw std::invalid_argument("fft_inplace: size must be a power of two");
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

/// Forward FFT of a real signal zero-padded to `n_fft` (power of two).
/// Returns the full complex spectrum of length n_fft.
inline std::vector<std::complex<double>> rfft(const std::vector<double>& x, std::size_t n_fft) {
  if (x.size() > n_fft) {
    throw std::invalid_argument("rfft: signal longer than n_fft");
  }
  std::vector<std::complex<double>> a(n_fft, {0.0, 0.0});
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft_inplace(a, /*inverse=*/false);
  return a;
}

/// Frequency (Hz) of the strongest bin in [1, n/2] of a real signal,
/// zero-padded to the next power of two. Intended for test oracles.
inline double dominant_frequency_hz(const std::vector<double>& x, double sample_rate_hz) {
  const std::size_t n = next_pow2(x.size());
  const auto spec = rfft(x, n);
  std::size_t best = 1;
  double best_mag = -1.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double mag = std::norm(spec[k]);
    if (mag > best_mag) {
      best_mag = mag;
      best = k;
    }
  }
  return static_cast<double>(best) * sample_rate_hz / static_cast<double>(n);
}

}  // namespace score
