// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace score {

/// Mono PCM audio. Samples are real amplitudes in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 0;
};

/// T x D matrix of frame vectors, row-major. `frame_hop_s` is metadata
/// (seconds per frame step) and is 0 for abstract sequences.
struct FeatureSequence {
  std::size_t frames = 0;  // T
  std::size_t dim = 0;     // D
  std::vector<double> data;
  double frame_hop_s = 0.0;

  FeatureSequence() = default;
  FeatureSequence(std::size_t t, std::size_t d, double fill = 0.0)
      : frames(t), dim(d), data(t * d, fill) {}

  double& at(std::size_t t, std::size_t d) { return data[t * dim + d]; }
  double at(std::size_t t, std::size_t d) const { return data[t * dim + d]; }
  std::span<double> frame(std::size_t t) { return {data.data() + t * dim, dim}; }
  std::span<const double> frame(std::size_t t) const {
    return {data.data() + t * dim, dim};
  }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

/// Dense row-major matrix of doubles. Used for DP tables and layer weights.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Monotonic alignment path through an m x n grid. Index pairs are 1-based;
/// a valid path starts at (1,1), ends at (m,n), and each step is one of
/// (+1,0), (0,+1), (+1,+1).
struct AlignmentPath {
  std::vector<std::pair<int, int>> steps;
};

inline bool is_valid_path(const AlignmentPath& path, int m, int n) {
  if (path.steps.empty()) return false;
  if (path.steps.front() != std::pair<int, int>(1, 1)) return false;
  if (path.steps.back() != std::pair<int, int>(m, n)) return false;
  for (std::size_t s = 1; s < path.steps.size(); ++s) {
    const int di = path.steps[s].first - path.steps[s - 1].first;
    const int dj = path.steps[s].second - path.steps[s - 1].second;
    const bool ok = (di == 1 && dj == 0) || (di == 0 && dj == 1) || (di == 1 && dj == 1);
    if (!ok) return false;
  }
  return true;
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

// Feature file (".fseq"): little-endian, magic "FSEQ", u32 version = 1,
// u32 T, u32 D, then T*D IEEE-754 f32 values, row-major.
inline constexpr std::uint32_t kFseqVersion = 1;

inline void write_feature_file(const FeatureSequence& seq, const std::string& path) {
  if (seq.frames == 0 || seq.dim == 0) {
    throw std::invalid_argument("write_feature_file: empty sequence");
  }
  std::string buf;
  buf.reserve(16 + seq.data.size() * 4);
  buf.append("FSEQ");
  detail::put_u32_le(buf, kFseqVersion);
  detail::put_u32_le(buf, static_cast<std::uint32_t>(seq.frames));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(seq.dim));
  for (double v : seq.data) {
    detail::put_u32_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("write_feature_file: cannot open " + path);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw std::runtime_error("write_feature_file: write failed for " + path);
  }
}

inline FeatureSequence read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("read_feature_file: cannot open " + path);
  }
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16) {
    throw std::runtime_error("read_feature_file: truncated header in " + path);
  }
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.compare(0, 4, "FSEQ") != 0) {
    throw std::runtime_error("read_feature_file: bad magic in " + path);
  }
  const std::uint32_t version = detail::get_u32_le(p + 4);
  if (version != kFseqVersion) {
    throw std::runtime_error("read_feature_file: unsupported version " +
                             std::to_string(version) + " in " + path);
  }
  const std::uint32_t t = detail::get_u32_le(p + 8);
  const std::uint32_t d = detail::get_u32_le(p + 12);
  const std::size_t need = static_cast<std::size_t>(t) * d * 4;
  if (buf.size() - 16 < need) {
    throw std::runtime_error("read_feature_file: truncated payload in " + path + " (have " +
                             std::to_string(buf.size() - 16) + " bytes, need " +
                             std::to_string(need) + ")");
  }
  FeatureSequence seq(t, d);
  for (std::size_t i = 0; i < static_cast<std::size_t>(t) * d; ++i) {
    seq.data[i] =
        static_cast<double>(std::bit_cast<float>(detail::get_u32_le(p + 16 + i * 4)));
  }
  return seq;
}

}  // namespace score
