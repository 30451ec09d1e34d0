// Copyright 2026 The tdsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Training loop, evaluation and report writing.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdsep/checkpoint.hpp"
#include "tdsep/config.hpp"
#include "tdsep/manifest.hpp"
#include "tdsep/metrics.hpp"
#include "tdsep/model.hpp"
#include "tdsep/stft.hpp"

namespace tdsep {

/// One mixture prepared for the network.
struct Example {
  std::string id;
  MixtureSample sample;
  Matrix<float> mixture;
  std::vector<Matrix<float>> targets;

  Example(std::string utt_id, MixtureSample s) : id(std::move(utt_id)), sample(std::move(s)) {
    mixture = to_column<float>(sample.mixture);
    for (const auto& src : sample.sources) targets.push_back(to_column<float>(src));
  }
};

inline std::string utterance_id(const ManifestEntry& e, std::size_t index) {
  const auto label = [](const std::string& p) {
    const std::filesystem::path path(p);
    return path.parent_path().filename().string() + "-" + path.stem().string();
  };
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%04zu_", index);
  return prefix + label(e.s1) + "_" + label(e.s2);
}

inline std::vector<Example> load_examples(const Manifest& manifest, Split split, int sample_rate) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (e.split == split) out.emplace_back(utterance_id(e, i), load_mixture(e, sample_rate));
  }
  return out;
}

class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::vector<Example> data)
      : cfg_(validated(cfg)),
        init_rng_(make_rng(cfg.seed, "init")),
        model_(cfg_.frontend, cfg_.separator, store_, init_rng_),
        optimizer_(cfg_.optimizer),
        data_rng_(make_rng(cfg.seed, "data")),
        data_(std::move(data)) {
    if (data_.empty()) throw ConfigError("train: the train split is empty");
    for (const auto& ex : data_) {
      if (static_cast<Index>(ex.targets.size()) != cfg_.separator.num_sources)
        throw ConfigError("train: example " + ex.id + " has a different number of sources than the model");
    }
  }

  /// Restores parameters, optimizer moments, data order and step counter.
  void resume(const Checkpoint& ck) {
    load_parameters(store_, ck);
    optimizer_.restore(ck.optimizer_steps, ck.optimizer_state);
    const auto state = nlohmann::json::parse(ck.rng_state);
    std::istringstream rng_text(state.at("data_rng").get<std::string>());
    rng_text >> data_rng_;
    order_ = state.at("order").get<std::vector<std::size_t>>();
    cursor_ = state.at("cursor").get<std::size_t>();
    steps_ = ck.step;
  }

  /// One optimization step over `batch_size` utterances; returns the mean
  /// uSDR loss of the batch.
  double step() {
    store_.zero_grad();
    const std::size_t batch = cfg_.batch_size;
    double total = 0.0;
    last_branch_weights_.clear();
    for (std::size_t b = 0; b < batch; ++b) {
      const Example& ex = data_[next_index()];
      const Separation<float> sep = model_.separate(ex.mixture, cfg_.segment_samples());
      const PitLoss<float> pit = usdr_pit_loss(sep.estimates, ex.targets);
      const double loss = pit.loss.scalar();
      if (!std::isfinite(loss))
        throw NumericError("train: non-finite loss at step " + std::to_string(steps_ + 1) + " on " + ex.id);
      for (const auto& w : sep.branch_weights) last_branch_weights_.push_back(w.value());
      total += loss;
      backward(scale(pit.loss, 1.0f / static_cast<float>(batch)));
    }
    optimizer_.step(store_);
    ++steps_;
    const double mean = total / static_cast<double>(batch);
    loss_log_.push_back(mean);
    return mean;
  }

  /// Mean best-permutation SI-SDR over the training data (no gradient).
  double mean_usdr(std::size_t segment_len = 0) const {
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& ex : data_) {
      const auto est = model_.separate(ex.mixture, segment_len);
      std::vector<Waveform> waves;
      for (const auto& e : est.estimates) waves.push_back(to_waveform(e.value(), cfg_.sample_rate));
      total += -usdr_pit(waves, ex.sample.sources).loss;
    }
    return total / static_cast<double>(data_.size());
  }

  /// Mean mixture-as-estimate SI-SDR over the training data.
  double mixture_baseline() const {
    double total = 0.0;
    for (const auto& ex : data_) total += mixture_baseline_sdr(ex.sample.sources, ex.sample.mixture);
    return total / static_cast<double>(data_.size());
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.step = steps_;
    ck.config = cfg_;
    ck.parameters = snapshot_parameters(store_);
    ck.optimizer_steps = optimizer_.steps();
    ck.optimizer_state = optimizer_.state();
    std::ostringstream rng_text;
    rng_text << data_rng_;
    nlohmann::json state;
    state["data_rng"] = rng_text.str();
    state["order"] = order_;
    state["cursor"] = cursor_;
    ck.rng_state = state.dump();
    return ck;
  }

  std::size_t steps() const { return steps_; }
  std::size_t examples_count() const { return data_.size(); }
  const std::vector<double>& loss_log() const { return loss_log_; }
  const std::vector<Matrix<float>>& last_branch_weights() const { return last_branch_weights_; }
  const SeparationModel<float>& model() const { return model_; }
  ParamStore<float>& params() { return store_; }
  const RunConfig& config() const { return cfg_; }

 private:
  static const RunConfig& validated(const RunConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  std::size_t next_index() {
    if (cursor_ >= order_.size()) {
      order_.resize(data_.size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      shuffle(order_, data_rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

  RunConfig cfg_;
  ParamStore<float> store_;
  Rng init_rng_;
  SeparationModel<float> model_;
  Adam<float> optimizer_;
  Rng data_rng_;
  std::vector<Example> data_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t steps_ = 0;
  std::vector<double> loss_log_;
  std::vector<Matrix<float>> last_branch_weights_;
};

struct TrainResult {
  std::vector<double> loss_log;
  std::vector<std::filesystem::path> checkpoints;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step) {
  return dir / ("ckpt_" + std::to_string(step) + ".bin");
}

/// Trains on the manifest's train split, writing `loss.log` (one
/// "step loss" line per step) and `ckpt_<step>.bin` every checkpoint
/// interval and after the final step.
inline TrainResult train(const RunConfig& cfg, const Manifest& manifest, const std::filesystem::path& out_dir,
                         const std::function<void(std::size_t, double)>& on_step = {}) {
  cfg.validate();
  auto examples = load_examples(manifest, Split::kTrain, cfg.sample_rate);
  if (examples.empty()) throw ConfigError("train: manifest has no train entries");
  Trainer trainer(cfg, std::move(examples));
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "loss.log");
  if (!log) throw IoError("cannot write " + (out_dir / "loss.log").string());
  log.precision(9);
  TrainResult result;
  while (trainer.steps() < cfg.max_steps) {
    const double loss = trainer.step();
    log << trainer.steps() << ' ' << loss << '\n';
    log.flush();
    if (on_step) on_step(trainer.steps(), loss);
    if (trainer.steps() % cfg.checkpoint_interval == 0 || trainer.steps() == cfg.max_steps) {
      const auto path = checkpoint_path(out_dir, trainer.steps());
      save_checkpoint(path, trainer.checkpoint());
      result.checkpoints.push_back(path);
    }
  }
  result.loss_log = trainer.loss_log();
  return result;
}

using Separate = std::function<std::vector<Waveform>(const MixtureSample&)>;

inline SdrReport evaluate_examples(const std::vector<Example>& examples, const Separate& separate,
                                   const std::string& tag) {
  SdrReport report;
  report.tag = tag;
  for (const auto& ex : examples)
    report.per_utterance.push_back(score_utterance(ex.id, separate(ex.sample), ex.sample.sources, ex.sample.mixture));
  report.finalize();
  return report;
}

/// Full-utterance inference with a trained model.
inline Separate model_separator(const SeparationModel<float>& model) {
  return [&model](const MixtureSample& s) {
    NoGradGuard guard;
    const auto est = model.separate(to_column<float>(s.mixture), 0);
    std::vector<Waveform> out;
    for (const auto& e : est.estimates) out.push_back(to_waveform(e.value(), s.mixture.sample_rate_hz()));
    return out;
  };
}

inline Separate oracle_separator() {
  return [](const MixtureSample& s) { return irm_oracle(s.sources, s.mixture); };
}

/// Returns the mixture for every source; its SDRi is zero by definition.
inline Separate identity_separator() {
  return [](const MixtureSample& s) { return std::vector<Waveform>(s.sources.size(), s.mixture); };
}

inline std::vector<Example> examples_for_split(const Manifest& manifest, Split split, int sample_rate) {
  auto examples = load_examples(manifest, split, sample_rate);
  if (examples.empty()) throw ConfigError("evaluate: manifest has no '" + to_string(split) + "' entries");
  return examples;
}

inline SdrReport evaluate(const Checkpoint& ck, const Manifest& manifest, Split split) {
  const auto examples = examples_for_split(manifest, split, ck.config.sample_rate);
  ParamStore<float> store;
  Rng rng = make_rng(ck.config.seed, "init");
  SeparationModel<float> model(ck.config.frontend, ck.config.separator, store, rng);
  load_parameters(store, ck);
  return evaluate_examples(examples, model_separator(model), "model");
}

inline SdrReport evaluate_oracle(const Manifest& manifest, Split split, int sample_rate = kDefaultSampleRate) {
  return evaluate_examples(examples_for_split(manifest, split, sample_rate), oracle_separator(), "oracle");
}

inline SdrReport evaluate_identity(const Manifest& manifest, Split split, int sample_rate = kDefaultSampleRate) {
  return evaluate_examples(examples_for_split(manifest, split, sample_rate), identity_separator(), "identity");
}

inline void write_report(const std::filesystem::path& out_dir, const SdrReport& report) {
  std::filesystem::create_directories(out_dir);
  std::ofstream json(out_dir / "report.json");
  std::ofstream csv(out_dir / "report.csv");
  if (!json || !csv) throw IoError("cannot write report files in " + out_dir.string());
  json << report_to_json(report).dump(2) << '\n';
  csv << report_to_csv(report);
}

}  // namespace tdsep
