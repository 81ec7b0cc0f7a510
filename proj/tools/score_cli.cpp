// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0
//
// Command-line front end: feature extraction, soft-DTW evaluation, audio
// perturbation, correspondence training, and query-by-example retrieval.
// Exit codes: 0 success, 1 usage or config error, 2 runtime or data error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "score/core.hpp"
#include "score/mel.hpp"
#include "score/model.hpp"
#include "score/perturb.hpp"
#include "score/qbe.hpp"
#include "score/soft_dtw.hpp"
#include "score/trainer.hpp"
#include "score/wav.hpp"

namespace {

using nlohmann::json;

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  std::vector<std::string> entries;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    const std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (!seen.insert(line).second) {
      throw std::runtime_error("duplicate manifest entry: " + line);
    }
    entries.push_back(line);
  }
  if (entries.empty()) throw std::runtime_error("manifest " + path + " lists no files");
  return entries;
}

struct RunConfigs {
  score::TrainConfig train;
  score::PerturbConfig perturb;
  score::MelConfig mel;
  bool train_seed_set = false;
  bool perturb_seed_set = false;
};

void apply_train_section(const json& obj, RunConfigs& cfgs) {
  for (const auto& [key, value] : obj.items()) {
    try {
      if (key == "lr_base") {
        cfgs.train.lr_base = value.get<double>();
      } else if (key == "warmup_steps") {
        cfgs.train.warmup_steps = value.get<std::size_t>();
      } else if (key == "total_steps") {
        cfgs.train.total_steps = value.get<std::size_t>();
      } else if (key == "batch_size") {
        cfgs.train.batch_size = value.get<std::size_t>();
      } else if (key == "gamma") {
        cfgs.train.gamma = value.get<double>();
      } else if (key == "adam_beta1") {
        cfgs.train.adam_beta1 = value.get<double>();
      } else if (key == "adam_beta2") {
        cfgs.train.adam_beta2 = value.get<double>();
      } else if (key == "adam_eps") {
        cfgs.train.adam_eps = value.get<double>();
      } else if (key == "weight_decay") {
        cfgs.train.weight_decay = value.get<double>();
      } else if (key == "seed") {
        cfgs.train.seed = value.get<std::uint64_t>();
        cfgs.train_seed_set = true;
      } else {
        throw std::invalid_argument("config: unknown key \"train." + key + "\"");
      }
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for train." + key + ": " + e.what());
    }
  }
}

void apply_perturb_section(const json& obj, RunConfigs& cfgs) {
  for (const auto& [key, value] : obj.items()) {
    try {
      if (key == "speed_factors") {
        cfgs.perturb.speed_factors = value.get<std::vector<double>>();
      } else if (key == "pitch_semitone_choices") {
        cfgs.perturb.pitch_semitone_choices = value.get<std::vector<int>>();
      } else if (key == "seed") {
        cfgs.perturb.seed = value.get<std::uint64_t>();
        cfgs.perturb_seed_set = true;
      } else {
        throw std::invalid_argument("config: unknown key \"perturb." + key + "\"");
      }
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for perturb." + key + ": " + e.what());
    }
  }
}

void apply_mel_section(const json& obj, RunConfigs& cfgs) {
  for (const auto& [key, value] : obj.items()) {
    try {
      if (key == "sample_rate_hz") {
        cfgs.mel.sample_rate_hz = value.get<int>();
      } else if (key == "win_length_samples") {
        cfgs.mel.win_length_samples = value.get<int>();
      } else if (key == "hop_length_samples") {
        cfgs.mel.hop_length_samples = value.get<int>();
      } else if (key == "n_fft") {
        cfgs.mel.n_fft = value.get<int>();
      } else if (key == "n_mels") {
        cfgs.mel.n_mels = value.get<int>();
      } else if (key == "fmin_hz") {
        cfgs.mel.fmin_hz = value.get<double>();
      } else if (key == "fmax_hz") {
        cfgs.mel.fmax_hz = value.get<double>();
      } else if (key == "log_floor") {
        cfgs.mel.log_floor = value.get<double>();
      } else {
        throw std::invalid_argument("config: unknown key \"mel." + key + "\"");
      }
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for mel." + key + ": " + e.what());
    }
  }
}

RunConfigs load_config(const std::string& path) {
  RunConfigs cfgs;
  if (path.empty()) return cfgs;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
  }
  if (!root.is_object()) {
    throw std::invalid_argument("config: top level must be a JSON object");
  }
  for (const auto& [key, value] : root.items()) {
    if (key == "train") {
      apply_train_section(value, cfgs);
    } else if (key == "perturb") {
      apply_perturb_section(value, cfgs);
    } else if (key == "mel") {
      apply_mel_section(value, cfgs);
    } else {
      throw std::invalid_argument("config: unknown section \"" + key + "\"");
    }
  }
  return cfgs;
}

std::map<std::string, score::FeatureSequence> load_feature_dir(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir);
  }
  std::map<std::string, score::FeatureSequence> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".fseq") continue;
    out[entry.path().stem().string()] = score::read_feature_file(entry.path().string());
  }
  if (out.empty()) throw std::runtime_error("no .fseq files in " + dir);
  return out;
}

std::set<std::pair<std::string, std::string>> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labels " + path);
  std::set<std::pair<std::string, std::string>> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw std::runtime_error("malformed label line " + std::to_string(line_no) + " in " +
                               path + " (want query_id<TAB>doc_id)");
    }
    labels.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return labels;
}

struct FeaturesArgs {
  std::string in_path, out_path, checkpoint;
  int layer = 0;
  score::MelConfig mel;
};

int cmd_features(const FeaturesArgs& a) {
  a.mel.validate();
  if (a.layer < 0) throw std::invalid_argument("--layer must be >= 0");
  if (a.checkpoint.empty() && a.layer != 0) {
    throw std::invalid_argument("--layer requires --checkpoint");
  }
  const auto w = score::load_wav(a.in_path, a.mel.sample_rate_hz);
  auto feats = score::log_mel(w, a.mel);
  if (!a.checkpoint.empty()) {
    const auto ckpt = score::load_checkpoint(a.checkpoint);
    const std::size_t depth = ckpt.encoder.layers.size();
    const auto n = a.layer == 0 ? depth : static_cast<std::size_t>(a.layer);
    if (n > depth) {
      throw std::invalid_argument("--layer " + std::to_string(n) + " exceeds encoder depth " +
                                  std::to_string(depth));
    }
    score::EncoderParams sub;
    sub.layers.assign(ckpt.encoder.layers.begin(),
                      ckpt.encoder.layers.begin() + static_cast<std::ptrdiff_t>(n));
    sub.n_frozen = 0;
    feats = score::encode(sub, feats);
  }
  score::write_feature_file(feats, a.out_path);
  std::printf("wrote %s: %zu frames x %zu dims\n", a.out_path.c_str(), feats.frames, feats.dim);
  return 0;
}

struct SoftDtwArgs {
  std::string a_path, b_path;
  double gamma = 0.1;
  bool normalized = false;
  bool length_norm = false;
};

int cmd_softdtw(const SoftDtwArgs& a) {
  score::SoftDtwConfig cfg;
  cfg.gamma = a.gamma;
  cfg.validate();
  const auto x = score::read_feature_file(a.a_path);
  const auto y = score::read_feature_file(a.b_path);
  double value = 0.0;
  if (a.normalized) {
    value = score::normalized_divergence(x, y, cfg, a.length_norm).value;
  } else {
    value = score::soft_dtw_value(x, y, cfg);
    if (a.length_norm) value /= static_cast<double>(x.frames + y.frames);
  }
  std::printf("%.17g\n", value);
  return 0;
}

struct PerturbArgs {
  std::string in_path, out_path;
  double speed = 1.0;
  int pitch = 0;
};

int cmd_perturb(const PerturbArgs& a) {
  if (!(a.speed > 0.5 && a.speed < 2.0)) {
    throw std::invalid_argument("--speed " + std::to_string(a.speed) + " outside (0.5, 2.0)");
  }
  if (a.pitch < -12 || a.pitch > 12) {
    throw std::invalid_argument("--pitch " + std::to_string(a.pitch) + " outside [-12, 12]");
  }
  auto w = score::load_wav(a.in_path);
  w = score::speed_perturb(w, a.speed);
  w = score::pitch_shift(w, a.pitch);
  score::save_wav(w, a.out_path);
  std::printf("wrote %s: %zu samples\n", a.out_path.c_str(), w.samples.size());
  return 0;
}

struct TrainArgs {
  std::string manifest_path, config_path, out_dir;
  std::uint64_t seed = 42;
  bool seed_given = false;
  std::size_t steps = 0;
  bool steps_given = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfigs cfgs = load_config(a.config_path);
  if (a.seed_given) {
    cfgs.train.seed = a.seed;
    cfgs.perturb.seed = a.seed;
  }
  if (a.steps_given) {
    // Scale the warmup in proportion when shortening or lengthening a run,
    // so the schedule keeps its shape.
    const double ratio =
        static_cast<double>(a.steps) / static_cast<double>(cfgs.train.total_steps);
    cfgs.train.warmup_steps = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfgs.train.warmup_steps) * ratio));
    cfgs.train.total_steps = a.steps;
  }
  cfgs.train.validate();
  cfgs.perturb.validate();
  cfgs.mel.validate();

  const auto manifest = read_manifest(a.manifest_path);
  auto state = score::make_default_trainer(cfgs.train, cfgs.mel);
  const auto result = score::run_training(manifest, state, cfgs.perturb, a.out_dir);
  std::printf("trained %zu steps, final loss %.17g\n", result.records.size(),
              result.records.back().loss);
  std::printf("metrics: %s\n", result.metrics_path.c_str());
  std::printf("checkpoint: %s\n", result.final_checkpoint.c_str());
  return 0;
}

struct QbeArgs {
  std::string queries_dir, docs_dir, labels_path, out_path;
};

int cmd_qbe(const QbeArgs& a) {
  const auto queries = load_feature_dir(a.queries_dir);
  const auto docs = load_feature_dir(a.docs_dir);
  const auto labels = read_labels(a.labels_path);
  for (const auto& [q, d] : labels) {
    if (queries.find(q) == queries.end()) {
      throw std::runtime_error("label references unknown query id: " + q);
    }
    if (docs.find(d) == docs.end()) {
      throw std::runtime_error("label references unknown doc id: " + d);
    }
  }
  const auto out = score::rank_queries(queries, docs, labels);
  score::write_results_tsv(out.results, a.out_path);
  std::printf("%s\n", score::format_retrieval_metrics(out.metrics).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SCORE: correspondence fine-tuning and DTW retrieval toolkit"};
  app.require_subcommand(1);

  FeaturesArgs fa;
  auto* features = app.add_subcommand("features", "Extract log-mel features from a WAV file");
  features->add_option("--in", fa.in_path, "Input WAV (PCM16 mono)")->required();
  features->add_option("--out", fa.out_path, "Output .fseq path")->required();
  features->add_option("--sample-rate", fa.mel.sample_rate_hz, "Expected sample rate (Hz)");
  features->add_option("--win-length", fa.mel.win_length_samples, "Window length (samples)");
  features->add_option("--hop-length", fa.mel.hop_length_samples, "Hop length (samples)");
  features->add_option("--n-fft", fa.mel.n_fft, "FFT size (power of two)");
  features->add_option("--n-mels", fa.mel.n_mels, "Number of mel filters");
  features->add_option("--fmin", fa.mel.fmin_hz, "Lowest filter edge (Hz)");
  features->add_option("--fmax", fa.mel.fmax_hz, "Highest filter edge (Hz)");
  features->add_option("--checkpoint", fa.checkpoint,
                       "Encode through a trained encoder checkpoint");
  features->add_option("--layer", fa.layer,
                       "Emit the output of this encoder layer (1-based; 0 = last)");

  SoftDtwArgs sa;
  auto* softdtw = app.add_subcommand("softdtw", "Soft-DTW between two feature files");
  softdtw->add_option("--a", sa.a_path, "First .fseq file")->required();
  softdtw->add_option("--b", sa.b_path, "Second .fseq file")->required();
  softdtw->add_option("--gamma", sa.gamma, "Smoothing strength (> 0)");
  softdtw->add_flag("--normalized", sa.normalized, "Report the normalized divergence");
  softdtw->add_flag("--length-norm", sa.length_norm, "Divide by the summed lengths");

  PerturbArgs pa;
  auto* perturb = app.add_subcommand("perturb", "Apply speed and pitch perturbation");
  perturb->add_option("--in", pa.in_path, "Input WAV")->required();
  perturb->add_option("--out", pa.out_path, "Output WAV")->required();
  perturb->add_option("--speed", pa.speed, "Speed factor in (0.5, 2.0)");
  perturb->add_option("--pitch", pa.pitch, "Pitch shift in semitones [-12, 12]");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run correspondence fine-tuning");
  train->add_option("--manifest", ta.manifest_path, "Text file of WAV paths")->required();
  train->add_option("--config", ta.config_path, "JSON config (train/perturb/mel sections)");
  train->add_option("--out", ta.out_dir, "Output directory")->required();
  auto* seed_opt = train->add_option("--seed", ta.seed, "Seed for all randomness");
  auto* steps_opt = train->add_option("--steps", ta.steps, "Override total update count");

  QbeArgs qa;
  auto* qbe = app.add_subcommand("qbe", "Query-by-example retrieval over feature files");
  qbe->add_option("--queries", qa.queries_dir, "Directory of query .fseq files")->required();
  qbe->add_option("--docs", qa.docs_dir, "Directory of document .fseq files")->required();
  qbe->add_option("--labels", qa.labels_path, "TSV of relevant (query_id, doc_id)")->required();
  qbe->add_option("--out", qa.out_path, "Output results TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  ta.seed_given = seed_opt->count() > 0;
  ta.steps_given = steps_opt->count() > 0;

  try {
    if (features->parsed()) return cmd_features(fa);
    if (softdtw->parsed()) return cmd_softdtw(sa);
    if (perturb->parsed()) return cmd_perturb(pa);
    if (train->parsed()) return cmd_train(ta);
    if (qbe->parsed()) return cmd_qbe(qa);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
