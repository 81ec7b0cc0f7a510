// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "score/core.hpp"
#include "score/mel.hpp"
#include "score/model.hpp"
#include "score/perturb.hpp"
#include "score/soft_dtw.hpp"
#include "score/wav.hpp"

namespace score {

struct TrainConfig {
  double lr_base = 2.0e-5;
  std::size_t warmup_steps = 1000;
  std::size_t total_steps = 3600;
  std::size_t batch_size = 8;
  double gamma = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 42;

  void validate() const {
    if (lr_base <= 0.0) throw std::invalid_argument("train config: lr_base must be > 0");
    if (total_steps < 1) throw std::invalid_argument("train config: total_steps must be >= 1");
    if (warmup_steps > total_steps) {
      throw std::invalid_argument("train config: warmup_steps must be <= total_steps");
    }
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (gamma <= 0.0) throw std::invalid_argument("train config: gamma must be > 0");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
      throw std::invalid_argument("train config: betas must lie in [0, 1)");
    }
    if (adam_eps <= 0.0) throw std::invalid_argument("train config: adam_eps must be > 0");
    if (weight_decay < 0.0) {
      throw std::invalid_argument("train config: weight_decay must be >= 0");
    }
  }
};

/// One optimizer update. `side_bit` is the k draw when batch_size is 1 and
/// -1 otherwise.
struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  int side_bit = -1;
};

/// Linear ramp 0 -> lr_base over warmup_steps, constant afterwards.
inline double lr_at(std::size_t step, const TrainConfig& cfg) {
  cfg.validate();
  if (step < 1 || step > cfg.total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [1, " +
                                std::to_string(cfg.total_steps) + "]");
  }
  if (step >= cfg.warmup_steps) return cfg.lr_base;
  return cfg.lr_base * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

struct AdamSlot {
  Matrix m_weight, v_weight;
  std::vector<double> m_bias, v_bias;
};

struct TrainerState {
  EncoderParams learnable;  // theta
  EncoderParams frozen;     // phi, never updated
  ProjectionHead head;      // mu, shared by both branches
  MelConfig mel;
  TrainConfig cfg;
  std::vector<AdamSlot> enc_slots;
  AdamSlot head_slot;
  std::mt19937_64 rng;
  std::size_t step = 0;
};

/// Both branches start from the same encoder values; only `learnable` and
/// `head` are ever updated.
inline TrainerState make_trainer(const TrainConfig& cfg, const MelConfig& mel,
                                 const EncoderParams& encoder, const ProjectionHead& head) {
  cfg.validate();
  mel.validate();
  encoder.validate();
  head.validate();
  if (encoder.input_dim() != static_cast<std::size_t>(mel.n_mels)) {
    throw std::invalid_argument("make_trainer: encoder input dim must equal n_mels");
  }
  if (head.weight.cols != encoder.output_dim()) {
    throw std::invalid_argument("make_trainer: projection input must equal encoder output");
  }
  TrainerState state;
  state.learnable = encoder;
  state.frozen = encoder;
  state.head = head;
  state.mel = mel;
  state.cfg = cfg;
  state.enc_slots.resize(encoder.layers.size());
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    state.enc_slots[l].m_weight = Matrix(encoder.layers[l].weight.rows,
                                         encoder.layers[l].weight.cols);
    state.enc_slots[l].v_weight = state.enc_slots[l].m_weight;
    state.enc_slots[l].m_bias.assign(encoder.layers[l].bias.size(), 0.0);
    state.enc_slots[l].v_bias = state.enc_slots[l].m_bias;
  }
  state.head_slot.m_weight = Matrix(head.weight.rows, head.weight.cols);
  state.head_slot.v_weight = state.head_slot.m_weight;
  state.head_slot.m_bias.assign(head.bias.size(), 0.0);
  state.head_slot.v_bias = state.head_slot.m_bias;
  state.rng.seed(cfg.seed + 2);
  return state;
}

/// Desk-scale default stack: n_mels -> 64 -> 64 -> 64 -> 64, tanh, bottom 2
/// frozen, projection to 16 dims.
inline TrainerState make_default_trainer(const TrainConfig& cfg, const MelConfig& mel) {
  const std::vector<std::size_t> dims{static_cast<std::size_t>(mel.n_mels), 64, 64, 64, 64};
  const std::vector<Activation> acts(4, Activation::kTanh);
  const auto encoder = make_encoder(dims, acts, 2, cfg.seed);
  const auto head = make_projection(64, 16, cfg.seed + 1);
  return make_trainer(cfg, mel, encoder, head);
}

namespace detail {

inline void adamw_update(double& w, double g, double& m, double& v, double lr,
                         const TrainConfig& cfg, double bc1, double bc2, bool decay) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
  v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
  const double step_term = (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
  const double w0 = w;
  w = w0 - lr * step_term - (decay ? lr * cfg.weight_decay * w0 : 0.0);
}

inline void adamw_update_tensor(Matrix& w, const Matrix& g, AdamSlot& slot, double lr,
                                const TrainConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    adamw_update(w.data[i], g.data[i], slot.m_weight.data[i], slot.v_weight.data[i], lr, cfg,
                 bc1, bc2, true);
  }
}

inline void adamw_update_bias(std::vector<double>& b, const std::vector<double>& g,
                              std::vector<double>& m, std::vector<double>& v, double lr,
                              const TrainConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < b.size(); ++i) {
    adamw_update(b[i], g[i], m[i], v[i], lr, cfg, bc1, bc2, false);
  }
}

inline void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i-- > 1;) {
    std::swap(v[i], v[rng() % (i + 1)]);
  }
}

}  // namespace detail

/// One AdamW update from a batch of (original, perturbed) waveform pairs.
/// Per pair, k = rng() % 2 routes the perturbed signal to the learnable
/// branch when k = 0 and to the frozen branch when k = 1; gradients are the
/// batch mean.
inline StepRecord train_step(TrainerState& state,
                             const std::vector<std::pair<Waveform, Waveform>>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const std::size_t step = state.step + 1;
  const double lr = lr_at(step, state.cfg);
  SoftDtwConfig sd;
  sd.gamma = state.cfg.gamma;

  auto grads = make_zero_grads(state.learnable, state.head);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss_sum = 0.0;
  int last_k = -1;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const int k = static_cast<int>(state.rng() % 2);
    last_k = k;
    const auto& [original, perturbed] = batch[b];
    const FeatureSequence f_orig = log_mel(original, state.mel);
    const FeatureSequence f_pert = log_mel(perturbed, state.mel);
    const FeatureSequence& learn_in = k == 0 ? f_pert : f_orig;
    const FeatureSequence& frozen_in = k == 0 ? f_orig : f_pert;

    BranchCache cl, cf;
    const auto x = project_l2(state.head,
                              encode(state.learnable, learn_in, true, &cl.encoder),
                              &cl.projection);
    const auto xp = project_l2(state.head, encode(state.frozen, frozen_in, false),
                               &cf.projection);
    const auto div = normalized_divergence(x, xp, sd, true);
    if (!std::isfinite(div.value)) {
      std::fprintf(stderr,
                   "error: non-finite loss %g at step %zu, pair %zu "
                   "(original %zu samples, perturbed %zu samples, k=%d)\n",
                   div.value, step, b, original.samples.size(), perturbed.samples.size(), k);
      throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step));
    }
    loss_sum += div.value;

    Matrix gx = div.grad_x;
    Matrix gxp = div.grad_y;
    for (double& v : gx.data) v *= inv_b;
    for (double& v : gxp.data) v *= inv_b;
    backward(state.learnable, state.head, cl, gx, true, grads);
    backward(state.frozen, state.head, cf, gxp, false, grads);
  }

  const double bc1 = 1.0 - std::pow(state.cfg.adam_beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(state.cfg.adam_beta2, static_cast<double>(step));
  for (std::size_t l = state.learnable.n_frozen; l < state.learnable.layers.size(); ++l) {
    detail::adamw_update_tensor(state.learnable.layers[l].weight, grads.encoder[l].weight,
                                state.enc_slots[l], lr, state.cfg, bc1, bc2);
    detail::adamw_update_bias(state.learnable.layers[l].bias, grads.encoder[l].bias,
                              state.enc_slots[l].m_bias, state.enc_slots[l].v_bias, lr,
                              state.cfg, bc1, bc2);
  }
  detail::adamw_update_tensor(state.head.weight, grads.head.weight, state.head_slot, lr,
                              state.cfg, bc1, bc2);
  detail::adamw_update_bias(state.head.bias, grads.head.bias, state.head_slot.m_bias,
                            state.head_slot.v_bias, lr, state.cfg, bc1, bc2);

  state.step = step;
  StepRecord rec;
  rec.step = step;
  rec.loss = loss_sum * inv_b;
  rec.lr = lr;
  rec.side_bit = batch.size() == 1 ? last_k : -1;
  return rec;
}

inline StepRecord train_step(TrainerState& state, const Waveform& original,
                             const Waveform& perturbed) {
  return train_step(state, {{original, perturbed}});
}

inline std::string format_metrics_line(const StepRecord& rec, bool include_k) {
  char buf[192];
  if (include_k) {
    std::snprintf(buf, sizeof buf, "{\"step\": %llu, \"loss\": %.17g, \"lr\": %.17g, \"k\": %d}",
                  static_cast<unsigned long long>(rec.step), rec.loss, rec.lr, rec.side_bit);
  } else {
    std::snprintf(buf, sizeof buf, "{\"step\": %llu, \"loss\": %.17g, \"lr\": %.17g}",
                  static_cast<unsigned long long>(rec.step), rec.loss, rec.lr);
  }
  return buf;
}

struct TrainResult {
  std::vector<StepRecord> records;
  std::string metrics_path;
  std::string final_checkpoint;
};

inline constexpr std::size_t kCheckpointEvery = 500;

/// Epochs over the shuffled manifest until total_steps updates. Fresh
/// perturbations every epoch; partial batches carry across epoch boundaries.
inline TrainResult run_training(const std::vector<std::string>& manifest, TrainerState& state,
                                const PerturbConfig& perturb_cfg, const std::string& out_dir) {
  if (manifest.empty()) throw std::invalid_argument("run_training: empty manifest");
  perturb_cfg.validate();

  std::vector<Waveform> corpus;
  corpus.reserve(manifest.size());
  for (const auto& path : manifest) {
    try {
      corpus.push_back(load_wav(path, state.mel.sample_rate_hz));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: skipping %s: %s\n", path.c_str(), e.what());
    }
  }
  if (corpus.empty()) {
    throw std::runtime_error("run_training: no readable audio in manifest");
  }

  std::filesystem::create_directories(out_dir);
  const std::string metrics_path = out_dir + "/metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("run_training: cannot open " + metrics_path);

  TrainResult result;
  result.metrics_path = metrics_path;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t epoch_pos = order.size();  // forces a shuffle on the first pass

  std::vector<std::pair<Waveform, Waveform>> batch;
  while (state.step < state.cfg.total_steps) {
    if (epoch_pos >= order.size()) {
      detail::shuffle_indices(order, state.rng);
      epoch_pos = 0;
    }
    const Waveform& w = corpus[order[epoch_pos++]];
    batch.emplace_back(w, make_perturbed(w, perturb_cfg, state.rng));
    if (batch.size() < state.cfg.batch_size) continue;

    const StepRecord rec = train_step(state, batch);
    batch.clear();
    metrics << format_metrics_line(rec, state.cfg.batch_size == 1) << "\n";
    result.records.push_back(rec);
    if (state.step % kCheckpointEvery == 0) {
      save_checkpoint(out_dir + "/checkpoint_" + std::to_string(state.step) + ".sckp",
                      state.learnable, state.head);
    }
  }
  metrics.flush();
  if (!metrics) throw std::runtime_error("run_training: write failed for " + metrics_path);

  result.final_checkpoint = out_dir + "/checkpoint_final.sckp";
  save_checkpoint(result.final_checkpoint, state.learnable, state.head);
  return result;
}

}  // namespace score
