// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "score/core.hpp"

namespace score {

namespace detail {

inline std::uint16_t get_u16_le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Reads a RIFF/WAVE file. Requires PCM, 16-bit, mono; any other layout is
/// rejected rather than converted. If `expected_rate_hz` is nonzero, a file
/// with a different sample rate is an error (no silent resampling).
inline Waveform load_wav(const std::string& path, int expected_rate_hz = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_wav: cannot open " + path);
  }
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0) {
    throw std::runtime_error("load_wav: not a RIFF/WAVE file: " + path);
  }
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id = buf.substr(pos, 4);
    const std::uint32_t size = detail::get_u32_le(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) {
      throw std::runtime_error("load_wav: truncated chunk '" + id + "' in " + path);
    }
    if (id == "fmt ") {
      if (size < 16) throw std::runtime_error("load_wav: short fmt chunk in " + path);
      format_tag = detail::get_u16_le(p + body);
      channels = detail::get_u16_le(p + body + 2);
      rate = detail::get_u32_le(p + body + 4);
      bits = detail::get_u16_le(p + body + 14);
      have_fmt = true;
    } else if (id == "data") {
      data_off = body;
      data_len = size;
      break;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0) {
    throw std::runtime_error("load_wav: missing fmt/data chunk in " + path);
  }
  if (format_tag != 1) {
    throw std::runtime_error("load_wav: PCM required (format tag " +
                             std::to_string(format_tag) + ") in " + path);
  }
  if (channels != 1) {
    throw std::runtime_error("load_wav: mono required (" + std::to_string(channels) +
                             " channels) in " + path);
  }
  if (bits != 16) {
    throw std::runtime_error("load_wav: 16-bit samples required (" + std::to_string(bits) +
                             " bits) in " + path);
  }
  if (expected_rate_hz != 0 && static_cast<int>(rate) != expected_rate_hz) {
    throw std::runtime_error("load_wav: sample rate " + std::to_string(rate) +
                             " Hz, pipeline expects " + std::to_string(expected_rate_hz) +
                             " Hz (no resampling): " + path);
  }

  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  w.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const std::int16_t s =
        static_cast<std::int16_t>(detail::get_u16_le(p + data_off + i * 2));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  if (w.samples.empty()) {
    throw std::runtime_error("load_wav: empty data chunk in " + path);
  }
  return w;
}

/// Writes a canonical 44-byte-header PCM 16-bit mono WAV file. Amplitudes
/// outside [-1, 1] are clipped with a warning on stderr.
inline void save_wav(const Waveform& w, const std::string& path) {
  if (w.samples.empty()) {
    throw std::invalid_argument("save_wav: empty waveform");
  }
  if (w.sample_rate_hz <= 0) {
    throw std::invalid_argument("save_wav: sample rate must be positive");
  }
  std::size_t clipped = 0;
  std::string pcm;
  pcm.reserve(w.samples.size() * 2);
  for (double x : w.samples) {
    if (x < -1.0 || x > 1.0) {
      ++clipped;
      x = std::clamp(x, -1.0, 1.0);
    }
    const long q = std::lround(x * 32768.0);
    const std::int16_t s = static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L));
    detail::put_u16_le(pcm, static_cast<std::uint16_t>(s));
  }
  if (clipped > 0) {
    std::cerr << "save_wav: warning: clipped " << clipped << " sample(s) to [-1, 1] in "
              << path << "\n";
  }

  std::string buf;
  buf.reserve(44 + pcm.size());
  buf.append("RIFF");
  detail::put_u32_le(buf, static_cast<std::uint32_t>(36 + pcm.size()));
  buf.append("WAVE");
  buf.append("fmt ");
  detail::put_u32_le(buf, 16);
  detail::put_u16_le(buf, 1);  // PCM
  detail::put_u16_le(buf, 1);  // mono
  detail::put_u32_le(buf, static_cast<std::uint32_t>(w.sample_rate_hz));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(w.sample_rate_hz * 2));  // byte rate
  detail::put_u16_le(buf, 2);   // block align
  detail::put_u16_le(buf, 16);  // bits per sample
  buf.append("data");
  detail::put_u32_le(buf, static_cast<std::uint32_t>(pcm.size()));
  buf.append(pcm);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("save_wav: cannot open " + path);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw std::runtime_error("save_wav: write failed for " + path);
  }
}

}  // namespace score
