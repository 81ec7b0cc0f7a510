// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#include "score/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "test_support.hpp"

namespace score {
namespace {

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.lr_base = 1e-2;
  cfg.warmup_steps = 0;
  cfg.total_steps = 2000;
  cfg.batch_size = 1;
  return cfg;
}

TEST(LrSchedule, PaperShape) {
  TrainConfig cfg;  // lr 2e-5, warmup 1000, total 3600
  EXPECT_DOUBLE_EQ(lr_at(500, cfg), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(1000, cfg), 2e-5);
  EXPECT_DOUBLE_EQ(lr_at(3600, cfg), 2e-5);
  EXPECT_DOUBLE_EQ(lr_at(1, cfg), 2e-5 / 1000.0);
  EXPECT_THROW(lr_at(0, cfg), std::invalid_argument);
  EXPECT_THROW(lr_at(3601, cfg), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());

  auto bad = cfg;
  bad.lr_base = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.warmup_steps = bad.total_steps + 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.gamma = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(MakeTrainer, RejectsMismatchedStacks) {
  const MelConfig mel;
  TrainConfig cfg;
  const auto enc = make_encoder({39, 8}, {Activation::kTanh}, 0, 1);  // wrong input dim
  const auto head = make_projection(8, 4, 2);
  EXPECT_THROW(make_trainer(cfg, mel, enc, head), std::invalid_argument);

  const auto enc2 = make_encoder({40, 8}, {Activation::kTanh}, 0, 1);
  const auto head2 = make_projection(9, 4, 2);  // wrong projection input
  EXPECT_THROW(make_trainer(cfg, mel, enc2, head2), std::invalid_argument);
}

TEST(TrainStep, IdenticalPairAppliesOnlyWeightDecay) {
  auto cfg = toy_config();
  cfg.lr_base = 0.5;
  cfg.weight_decay = 0.1;
  MelConfig mel;
  auto state = make_default_trainer(cfg, mel);
  const auto before = state.learnable;
  const auto before_head = state.head;
  const auto frozen_hash = parameter_hash(state.frozen);

  const auto w = test::sine_wave(440.0, 0.3, 16000);
  const auto rec = train_step(state, w, w);

  EXPECT_EQ(rec.step, 1u);
  EXPECT_EQ(rec.loss, 0.0);
  EXPECT_TRUE(rec.side_bit == 0 || rec.side_bit == 1);

  const double shrink = 1.0 - cfg.lr_base * cfg.weight_decay;
  for (std::size_t l = 0; l < before.layers.size(); ++l) {
    const bool learnable = l >= before.n_frozen;
    for (std::size_t i = 0; i < before.layers[l].weight.data.size(); ++i) {
      const double want = learnable ? before.layers[l].weight.data[i] * shrink
                                    : before.layers[l].weight.data[i];
      EXPECT_DOUBLE_EQ(state.learnable.layers[l].weight.data[i], want);
    }
    for (std::size_t i = 0; i < before.layers[l].bias.size(); ++i) {
      EXPECT_EQ(state.learnable.layers[l].bias[i], before.layers[l].bias[i]);
    }
  }
  for (std::size_t i = 0; i < before_head.weight.data.size(); ++i) {
    EXPECT_DOUBLE_EQ(state.head.weight.data[i], before_head.weight.data[i] * shrink);
  }
  for (std::size_t i = 0; i < before_head.bias.size(); ++i) {
    EXPECT_EQ(state.head.bias[i], before_head.bias[i]);
  }
  EXPECT_EQ(parameter_hash(state.frozen), frozen_hash);
}

TEST(TrainStep, RepeatedStepsOnFixedPairDescend) {
  auto cfg = toy_config();
  cfg.weight_decay = 0.0;  // isolate the descent signal
  MelConfig mel;
  auto state = make_default_trainer(cfg, mel);

  const auto original = test::sine_wave(300.0, 0.3, 16000);
  const auto perturbed = speed_perturb(original, 1.1);

  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto rec = train_step(state, original, perturbed);
    if (i == 0) first = rec.loss;
    last = rec.loss;
    EXPECT_GE(rec.loss, -1e-9);
  }
  EXPECT_GT(first, 0.0);
  EXPECT_LT(last, first);
}

TEST(TrainStep, OnlyLearnableTensorsChange) {
  auto cfg = toy_config();
  MelConfig mel;
  auto state = make_default_trainer(cfg, mel);
  const auto theta_before = state.learnable;
  const auto frozen_hash = parameter_hash(state.frozen);

  const auto original = test::sine_wave(250.0, 0.3, 16000);
  const auto perturbed = speed_perturb(original, 0.9);
  (void)train_step(state, original, perturbed);

  EXPECT_EQ(parameter_hash(state.frozen), frozen_hash);
  for (std::size_t l = 0; l < state.learnable.n_frozen; ++l) {
    for (std::size_t i = 0; i < theta_before.layers[l].weight.data.size(); ++i) {
      EXPECT_EQ(state.learnable.layers[l].weight.data[i],
                theta_before.layers[l].weight.data[i]);
    }
  }
  double moved = 0.0;
  for (std::size_t l = state.learnable.n_frozen; l < state.learnable.layers.size(); ++l) {
    for (std::size_t i = 0; i < theta_before.layers[l].weight.data.size(); ++i) {
      moved += std::abs(state.learnable.layers[l].weight.data[i] -
                        theta_before.layers[l].weight.data[i]);
    }
  }
  EXPECT_GT(moved, 0.0);
}

TEST(TrainStep, SideAssignmentIsBalanced) {
  auto cfg = toy_config();
  cfg.lr_base = 2e-5;
  MelConfig mel;
  auto state = make_default_trainer(cfg, mel);

  const auto original = test::sine_wave(320.0, 0.05, 16000);  // 800 samples, 3 frames
  const auto perturbed = speed_perturb(original, 1.1);

  const int n = 1000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    const auto rec = train_step(state, original, perturbed);
    ASSERT_TRUE(rec.side_bit == 0 || rec.side_bit == 1);
    zeros += rec.side_bit == 0 ? 1 : 0;
  }
  const double frac = static_cast<double>(zeros) / n;
  const double bound = 3.0 * std::sqrt(0.25 / n);
  EXPECT_NEAR(frac, 0.5, bound);
}

TEST(TrainStep, BatchRecordsNoSideBit) {
  auto cfg = toy_config();
  cfg.batch_size = 2;
  MelConfig mel;
  auto state = make_default_trainer(cfg, mel);
  const auto w = test::sine_wave(300.0, 0.3, 16000);
  const auto p = speed_perturb(w, 1.1);
  const auto rec = train_step(state, {{w, p}, {w, p}});
  EXPECT_EQ(rec.side_bit, -1);
  EXPECT_THROW(train_step(state, {}), std::invalid_argument);
}

TEST(MetricsFormat, IncludesKOnlyAtBatchSizeOne) {
  StepRecord rec;
  rec.step = 7;
  rec.loss = 0.125;
  rec.lr = 2e-5;
  rec.side_bit = 1;
  const auto with_k = format_metrics_line(rec, true);
  EXPECT_NE(with_k.find("\"k\": 1"), std::string::npos);
  EXPECT_NE(with_k.find("\"step\": 7"), std::string::npos);
  const auto without_k = format_metrics_line(rec, false);
  EXPECT_EQ(without_k.find("\"k\""), std::string::npos);
}

TEST(RunTraining, MinimalRunEmitsOneRecord) {
  test::TempDir dir("train_min");
  const auto wav_path = dir.file("a.wav");
  save_wav(test::sine_wave(280.0, 0.3, 16000), wav_path);

  TrainConfig cfg;
  cfg.warmup_steps = 0;
  cfg.total_steps = 1;
  cfg.batch_size = 1;
  MelConfig mel;
  auto state = make_default_trainer(cfg, mel);
  PerturbConfig pcfg;
  const auto out_dir = dir.file("out");
  const auto result = run_training({wav_path}, state, pcfg, out_dir);

  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.records[0].step, 1u);
  EXPECT_TRUE(std::filesystem::exists(result.final_checkpoint));

  const auto metrics = test::read_bytes(result.metrics_path);
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 1);
  EXPECT_NE(metrics.find("\"k\": "), std::string::npos);

  std::size_t n_ckpts = 0;
  for (const auto& entry : std::filesystem::directory_iterator(out_dir)) {
    if (entry.path().extension() == ".sckp") ++n_ckpts;
  }
  EXPECT_GE(n_ckpts, 1u);
  EXPECT_LE(n_ckpts, 2u);
}

TEST(RunTraining, SameSeedGivesIdenticalMetrics) {
  test::TempDir dir("train_det");
  std::vector<std::string> manifest;
  for (int i = 0; i < 3; ++i) {
    const auto p = dir.file("u" + std::to_string(i) + ".wav");
    save_wav(test::sine_wave(240.0 + 40.0 * i, 0.3, 16000), p);
    manifest.push_back(p);
  }

  TrainConfig cfg;
  cfg.warmup_steps = 0;
  cfg.total_steps = 5;
  cfg.batch_size = 2;
  MelConfig mel;
  PerturbConfig pcfg;

  auto state_a = make_default_trainer(cfg, mel);
  auto state_b = make_default_trainer(cfg, mel);
  const auto res_a = run_training(manifest, state_a, pcfg, dir.file("out_a"));
  const auto res_b = run_training(manifest, state_b, pcfg, dir.file("out_b"));

  EXPECT_EQ(test::read_bytes(res_a.metrics_path), test::read_bytes(res_b.metrics_path));
  EXPECT_EQ(test::read_bytes(res_a.final_checkpoint), test::read_bytes(res_b.final_checkpoint));
  EXPECT_EQ(parameter_hash(state_a.learnable), parameter_hash(state_b.learnable));
}

TEST(RunTraining, FrozenBranchNeverMoves) {
  test::TempDir dir("train_frozen");
  const auto wav_path = dir.file("a.wav");
  save_wav(test::sine_wave(350.0, 0.3, 16000), wav_path);

  TrainConfig cfg;
  cfg.total_steps = 4;
  cfg.batch_size = 1;
  cfg.lr_base = 1e-2;
  cfg.warmup_steps = 0;
  MelConfig mel;
  auto state = make_default_trainer(cfg, mel);
  const auto frozen_hash = parameter_hash(state.frozen);
  PerturbConfig pcfg;
  (void)run_training({wav_path}, state, pcfg, dir.file("out"));
  EXPECT_EQ(parameter_hash(state.frozen), frozen_hash);
}

TEST(RunTraining, SkipsUnreadableFiles) {
  test::TempDir dir("train_skip");
  const auto good = dir.file("good.wav");
  save_wav(test::sine_wave(260.0, 0.3, 16000), good);
  const auto missing = dir.file("missing.wav");

  TrainConfig cfg;
  cfg.warmup_steps = 0;
  cfg.total_steps = 1;
  cfg.batch_size = 1;
  MelConfig mel;
  PerturbConfig pcfg;

  auto state = make_default_trainer(cfg, mel);
  const auto result = run_training({missing, good}, state, pcfg, dir.file("out"));
  EXPECT_EQ(result.records.size(), 1u);

  auto state2 = make_default_trainer(cfg, mel);
  EXPECT_THROW(run_training({missing}, state2, pcfg, dir.file("out2")), std::runtime_error);
  EXPECT_THROW(run_training({}, state2, pcfg, dir.file("out3")), std::invalid_argument);
}

}  // namespace
}  // namespace score
