// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "score/core.hpp"

namespace score {

enum class Activation { kIdentity = 0, kTanh = 1 };

/// One frame-wise layer: out = act(W * in + b). Weight is D_out x D_in.
struct EncoderLayer {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::kTanh;
};

/// Encoder stack. The bottom `n_frozen` layers never receive parameter
/// gradients; the remaining top layers are the learnable part.
struct EncoderParams {
  std::vector<EncoderLayer> layers;
  std::size_t n_frozen = 0;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows; }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("encoder: no layers");
    if (n_frozen >= layers.size()) {
      throw std::invalid_argument("encoder: n_frozen must be < layer count");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& lay = layers[l];
      if (lay.weight.rows == 0 || lay.weight.cols == 0) {
        throw std::invalid_argument("encoder: layer " + std::to_string(l) + " has empty weight");
      }
      if (lay.bias.size() != lay.weight.rows) {
        throw std::invalid_argument("encoder: layer " + std::to_string(l) + " bias size mismatch");
      }
      if (l > 0 && lay.weight.cols != layers[l - 1].weight.rows) {
        throw std::invalid_argument("encoder: layer dims do not chain at layer " +
                                    std::to_string(l));
      }
    }
  }
};

/// Linear projection ahead of L2 normalization. Weight is P x D with P <= D.
struct ProjectionHead {
  Matrix weight;
  std::vector<double> bias;

  void validate() const {
    if (weight.rows == 0 || weight.cols == 0) {
      throw std::invalid_argument("projection: empty weight");
    }
    if (weight.rows > weight.cols) {
      throw std::invalid_argument("projection: output dim must not exceed input dim");
    }
    if (bias.size() != weight.rows) {
      throw std::invalid_argument("projection: bias size mismatch");
    }
  }
};

inline constexpr double kL2Eps = 1e-12;

struct EncoderCache {
  FeatureSequence input;
  std::vector<FeatureSequence> activations;  // post-activation output per layer
};

struct ProjectionCache {
  FeatureSequence input;
  FeatureSequence pre_norm;
  FeatureSequence normalized;
  std::vector<double> norms;  // max(||v||, kL2Eps) per frame
};

/// Forward pass through the encoder stack, frame-wise. The `learnable` flag
/// does not change the output; it controls whether per-layer activations are
/// recorded into `cache` for the backward pass.
inline FeatureSequence encode(const EncoderParams& params, const FeatureSequence& feats,
                              bool learnable = false, EncoderCache* cache = nullptr) {
  params.validate();
  if (feats.frames == 0) throw std::invalid_argument("encode: empty input");
  if (feats.dim != params.input_dim()) {
    throw std::invalid_argument("encode: input dim " + std::to_string(feats.dim) +
                                " does not match first layer input " +
                                std::to_string(params.input_dim()));
  }
  if (cache != nullptr && learnable) {
    cache->input = feats;
    cache->activations.clear();
    cache->activations.reserve(params.layers.size());
  }
  FeatureSequence cur = feats;
  for (const auto& layer : params.layers) {
    FeatureSequence next(cur.frames, layer.weight.rows);
    next.frame_hop_s = cur.frame_hop_s;
    for (std::size_t t = 0; t < cur.frames; ++t) {
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        double v = layer.bias[o];
        for (std::size_t i = 0; i < layer.weight.cols; ++i) {
          v += layer.weight.at(o, i) * cur.at(t, i);
        }
        next.at(t, o) = layer.activation == Activation::kTanh ? std::tanh(v) : v;
      }
    }
    cur = std::move(next);
    if (cache != nullptr && learnable) cache->activations.push_back(cur);
  }
  return cur;
}

/// Per frame: v = W z + b, output v / max(||v||, kL2Eps).
inline FeatureSequence project_l2(const ProjectionHead& head, const FeatureSequence& z,
                                  ProjectionCache* cache = nullptr) {
  head.validate();
  if (z.frames == 0) throw std::invalid_argument("project_l2: empty input");
  if (z.dim != head.weight.cols) {
    throw std::invalid_argument("project_l2: input dim " + std::to_string(z.dim) +
                                " does not match projection input " +
                                std::to_string(head.weight.cols));
  }
  const std::size_t p = head.weight.rows;
  FeatureSequence pre(z.frames, p);
  FeatureSequence out(z.frames, p);
  out.frame_hop_s = z.frame_hop_s;
  std::vector<double> norms(z.frames);
  for (std::size_t t = 0; t < z.frames; ++t) {
    double sq = 0.0;
    for (std::size_t o = 0; o < p; ++o) {
      double v = head.bias[o];
      for (std::size_t i = 0; i < z.dim; ++i) v += head.weight.at(o, i) * z.at(t, i);
      pre.at(t, o) = v;
      sq += v * v;
    }
    const double n = std::max(std::sqrt(sq), kL2Eps);
    norms[t] = n;
    for (std::size_t o = 0; o < p; ++o) out.at(t, o) = pre.at(t, o) / n;
  }
  if (cache != nullptr) {
    cache->input = z;
    cache->pre_norm = std::move(pre);
    cache->normalized = out;
    cache->norms = std::move(norms);
  }
  return out;
}

struct LayerGrads {
  Matrix weight;
  std::vector<double> bias;
};

struct ModelGrads {
  std::vector<LayerGrads> encoder;  // one slot per layer; frozen slots stay zero
  LayerGrads head;
};

inline ModelGrads make_zero_grads(const EncoderParams& params, const ProjectionHead& head) {
  ModelGrads g;
  g.encoder.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    g.encoder[l].weight = Matrix(params.layers[l].weight.rows, params.layers[l].weight.cols);
    g.encoder[l].bias.assign(params.layers[l].bias.size(), 0.0);
  }
  g.head.weight = Matrix(head.weight.rows, head.weight.cols);
  g.head.bias.assign(head.bias.size(), 0.0);
  return g;
}

/// Backprop through L2 normalization and the projection affine. Accumulates
/// into `head_grads` and returns the gradient with respect to the projection
/// input (frames x D).
inline Matrix projection_backward(const ProjectionHead& head, const ProjectionCache& cache,
                                  const Matrix& upstream, LayerGrads& head_grads) {
  if (cache.norms.empty()) {
    throw std::invalid_argument("projection_backward: cache is empty; run project_l2 with cache");
  }
  const std::size_t frames = cache.input.frames;
  const std::size_t p = head.weight.rows;
  const std::size_t d = head.weight.cols;
  if (upstream.rows != frames || upstream.cols != p) {
    throw std::invalid_argument("projection_backward: upstream shape mismatch");
  }
  if (head_grads.weight.rows != p || head_grads.weight.cols != d ||
      head_grads.bias.size() != p) {
    throw std::invalid_argument("projection_backward: gradient buffer shape mismatch");
  }
  Matrix dz(frames, d);
  std::vector<double> dv(p);
  for (std::size_t t = 0; t < frames; ++t) {
    const double n = cache.norms[t];
    double raw_sq = 0.0;
    for (std::size_t o = 0; o < p; ++o) raw_sq += cache.pre_norm.at(t, o) * cache.pre_norm.at(t, o);
    if (std::sqrt(raw_sq) >= kL2Eps) {
      // (I - x x^T) / ||v|| applied to the upstream row, x = normalized frame.
      double dot = 0.0;
      for (std::size_t o = 0; o < p; ++o) dot += cache.normalized.at(t, o) * upstream.at(t, o);
      for (std::size_t o = 0; o < p; ++o) {
        dv[o] = (upstream.at(t, o) - cache.normalized.at(t, o) * dot) / n;
      }
    } else {
      // Below the guard the map is v / kL2Eps, a pure scaling.
      for (std::size_t o = 0; o < p; ++o) dv[o] = upstream.at(t, o) / n;
    }
    for (std::size_t o = 0; o < p; ++o) {
      head_grads.bias[o] += dv[o];
      for (std::size_t i = 0; i < d; ++i) {
        head_grads.weight.at(o, i) += dv[o] * cache.input.at(t, i);
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < p; ++o) s += head.weight.at(o, i) * dv[o];
      dz.at(t, i) = s;
    }
  }
  return dz;
}

/// Backprop through the encoder stack. Frozen layers receive no parameter
/// gradients; learnable slots in `grads` are accumulated into.
inline void encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                             const Matrix& d_out, std::vector<LayerGrads>& grads) {
  if (cache.activations.size() != params.layers.size()) {
    throw std::invalid_argument("encoder_backward: cache is empty; run encode with learnable");
  }
  if (grads.size() != params.layers.size()) {
    throw std::invalid_argument("encoder_backward: gradient buffer layer count mismatch");
  }
  const std::size_t frames = cache.input.frames;
  if (d_out.rows != frames || d_out.cols != params.output_dim()) {
    throw std::invalid_argument("encoder_backward: upstream shape mismatch");
  }
  Matrix d = d_out;
  for (std::size_t l = params.layers.size(); l-- > params.n_frozen;) {
    const auto& layer = params.layers[l];
    const FeatureSequence& act = cache.activations[l];
    const FeatureSequence& in = l == 0 ? cache.input : cache.activations[l - 1];
    Matrix dpre(frames, layer.weight.rows);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        const double g = d.at(t, o);
        dpre.at(t, o) = layer.activation == Activation::kTanh
                            ? g * (1.0 - act.at(t, o) * act.at(t, o))
                            : g;
      }
    }
    auto& slot = grads[l];
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        slot.bias[o] += dpre.at(t, o);
        for (std::size_t i = 0; i < layer.weight.cols; ++i) {
          slot.weight.at(o, i) += dpre.at(t, o) * in.at(t, i);
        }
      }
    }
    if (l > params.n_frozen) {
      Matrix dprev(frames, layer.weight.cols);
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t i = 0; i < layer.weight.cols; ++i) {
          double s = 0.0;
          for (std::size_t o = 0; o < layer.weight.rows; ++o) {
            s += layer.weight.at(o, i) * dpre.at(t, o);
          }
          dprev.at(t, i) = s;
        }
      }
      d = std::move(dprev);
    }
  }
}

struct BranchCache {
  EncoderCache encoder;
  ProjectionCache projection;
};

/// Full backward for one branch. Head gradients accumulate for every branch;
/// encoder gradients only for the learnable one.
inline void backward(const EncoderParams& params, const ProjectionHead& head,
                     const BranchCache& cache, const Matrix& upstream, bool learnable_branch,
                     ModelGrads& grads) {
  const Matrix dz = projection_backward(head, cache.projection, upstream, grads.head);
  if (learnable_branch) encoder_backward(params, cache.encoder, dz, grads.encoder);
}

namespace detail {

inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  for (double& v : m.data) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
}

}  // namespace detail

/// Fan-in uniform init: weights in [-1/sqrt(D_in), +1/sqrt(D_in)], zero bias.
inline EncoderParams make_encoder(const std::vector<std::size_t>& dims,
                                  const std::vector<Activation>& activations,
                                  std::size_t n_frozen, std::uint64_t seed) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1) {
    throw std::invalid_argument("make_encoder: need dims of length L+1 and L activations");
  }
  std::mt19937_64 rng(seed);
  EncoderParams params;
  params.n_frozen = n_frozen;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    EncoderLayer layer;
    layer.weight = Matrix(dims[l + 1], dims[l]);
    detail::fill_uniform(layer.weight, 1.0 / std::sqrt(static_cast<double>(dims[l])), rng);
    layer.bias.assign(dims[l + 1], 0.0);
    layer.activation = activations[l];
    params.layers.push_back(std::move(layer));
  }
  params.validate();
  return params;
}

inline ProjectionHead make_projection(std::size_t in_dim, std::size_t out_dim,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProjectionHead head;
  head.weight = Matrix(out_dim, in_dim);
  detail::fill_uniform(head.weight, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
  head.bias.assign(out_dim, 0.0);
  head.validate();
  return head;
}

namespace detail {

inline void fnv1a_append(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

inline void fnv1a_append_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  fnv1a_append(h, bytes, 8);
}

inline void fnv1a_append_doubles(std::uint64_t& h, const std::vector<double>& v) {
  fnv1a_append_u64(h, v.size());
  for (double x : v) fnv1a_append_u64(h, std::bit_cast<std::uint64_t>(x));
}

inline void fnv1a_append_matrix(std::uint64_t& h, const Matrix& m) {
  fnv1a_append_u64(h, m.rows);
  fnv1a_append_u64(h, m.cols);
  for (double x : m.data) fnv1a_append_u64(h, std::bit_cast<std::uint64_t>(x));
}

inline constexpr std::uint64_t kFnvBasis = 14695981039346656037ull;

}  // namespace detail

inline std::uint64_t parameter_hash(const EncoderParams& params) {
  std::uint64_t h = detail::kFnvBasis;
  detail::fnv1a_append_u64(h, params.layers.size());
  detail::fnv1a_append_u64(h, params.n_frozen);
  for (const auto& layer : params.layers) {
    detail::fnv1a_append_matrix(h, layer.weight);
    detail::fnv1a_append_doubles(h, layer.bias);
    detail::fnv1a_append_u64(h, static_cast<std::uint64_t>(layer.activation));
  }
  return h;
}

inline std::uint64_t parameter_hash(const ProjectionHead& head) {
  std::uint64_t h = detail::kFnvBasis;
  detail::fnv1a_append_matrix(h, head.weight);
  detail::fnv1a_append_doubles(h, head.bias);
  return h;
}

// Checkpoint file (".sckp"): little-endian, magic "SCKP", u32 version = 1,
// u32 tensor count, then per tensor: u32 name length, name bytes,
// u32 rows, u32 cols, rows*cols f32 values row-major. The first tensor,
// "config", is 1 x (2 + L): [layer count, n_frozen, activation codes...]
// with 0 = identity and 1 = tanh. Encoder tensors are "enc.<l>.weight"
// (D_out x D_in) and "enc.<l>.bias" (1 x D_out); the projection head is
// "proj.weight" and "proj.bias".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  EncoderParams encoder;
  ProjectionHead head;
};

namespace detail {

inline void put_tensor(std::string& buf, const std::string& name, std::size_t rows,
                       std::size_t cols, const double* values) {
  put_u32_le(buf, static_cast<std::uint32_t>(name.size()));
  buf.append(name);
  put_u32_le(buf, static_cast<std::uint32_t>(rows));
  put_u32_le(buf, static_cast<std::uint32_t>(cols));
  for (std::size_t i = 0; i < rows * cols; ++i) {
    put_u32_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
  }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const EncoderParams& params,
                            const ProjectionHead& head) {
  params.validate();
  head.validate();
  std::string buf;
  buf.append("SCKP");
  detail::put_u32_le(buf, kCheckpointVersion);
  const std::size_t n_layers = params.layers.size();
  detail::put_u32_le(buf, static_cast<std::uint32_t>(1 + 2 * n_layers + 2));
  std::vector<double> config;
  config.push_back(static_cast<double>(n_layers));
  config.push_back(static_cast<double>(params.n_frozen));
  for (const auto& layer : params.layers) {
    config.push_back(layer.activation == Activation::kTanh ? 1.0 : 0.0);
  }
  detail::put_tensor(buf, "config", 1, config.size(), config.data());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = params.layers[l];
    detail::put_tensor(buf, "enc." + std::to_string(l) + ".weight", layer.weight.rows,
                       layer.weight.cols, layer.weight.data.data());
    detail::put_tensor(buf, "enc." + std::to_string(l) + ".bias", 1, layer.bias.size(),
                       layer.bias.data());
  }
  detail::put_tensor(buf, "proj.weight", head.weight.rows, head.weight.cols,
                     head.weight.data.data());
  detail::put_tensor(buf, "proj.bias", 1, head.bias.size(), head.bias.data());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 12) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  if (buf.compare(0, 4, "SCKP") != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = detail::get_u32_le(p + 4);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version) +
                             " in " + path);
  }
  const std::uint32_t n_tensors = detail::get_u32_le(p + 8);

  struct Tensor {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;
  };
  std::map<std::string, Tensor> tensors;
  std::size_t off = 12;
  const auto need = [&](std::size_t n) {
    if (buf.size() - off < n) {
      throw std::runtime_error("load_checkpoint: truncated tensor data in " + path);
    }
  };
  for (std::uint32_t k = 0; k < n_tensors; ++k) {
    need(4);
    const std::uint32_t name_len = detail::get_u32_le(p + off);
    off += 4;
    need(name_len);
    std::string name = buf.substr(off, name_len);
    off += name_len;
    need(8);
    Tensor t;
    t.rows = detail::get_u32_le(p + off);
    t.cols = detail::get_u32_le(p + off + 4);
    off += 8;
    need(t.rows * t.cols * 4);
    t.values.resize(t.rows * t.cols);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      t.values[i] = static_cast<double>(std::bit_cast<float>(detail::get_u32_le(p + off)));
      off += 4;
    }
    tensors.emplace(std::move(name), std::move(t));
  }

  const auto fetch = [&](const std::string& name) -> const Tensor& {
    const auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw std::runtime_error("load_checkpoint: missing tensor \"" + name + "\" in " + path);
    }
    return it->second;
  };

  const Tensor& config = fetch("config");
  if (config.rows != 1 || config.cols < 2) {
    throw std::runtime_error("load_checkpoint: malformed config tensor in " + path);
  }
  const auto n_layers = static_cast<std::size_t>(config.values[0]);
  if (config.cols != 2 + n_layers) {
    throw std::runtime_error("load_checkpoint: malformed config tensor in " + path);
  }
  Checkpoint ckpt;
  ckpt.encoder.n_frozen = static_cast<std::size_t>(config.values[1]);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Tensor& w = fetch("enc." + std::to_string(l) + ".weight");
    const Tensor& b = fetch("enc." + std::to_string(l) + ".bias");
    EncoderLayer layer;
    layer.weight = Matrix(w.rows, w.cols);
    layer.weight.data = w.values;
    layer.bias = b.values;
    layer.activation = config.values[2 + l] != 0.0 ? Activation::kTanh : Activation::kIdentity;
    ckpt.encoder.layers.push_back(std::move(layer));
  }
  const Tensor& pw = fetch("proj.weight");
  const Tensor& pb = fetch("proj.bias");
  ckpt.head.weight = Matrix(pw.rows, pw.cols);
  ckpt.head.weight.data = pw.values;
  ckpt.head.bias = pb.values;
  try {
    ckpt.encoder.validate();
    ckpt.head.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("load_checkpoint: inconsistent checkpoint " + path + ": " +
                             e.what());
  }
  return ckpt;
}

}  // namespace score
