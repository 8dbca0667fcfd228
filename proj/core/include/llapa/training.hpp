#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llapa/model.hpp"

namespace llapa {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  AdamConfig adam;
  std::uint64_t seed = 1;
  double clip_norm = 1.0;        // 0 disables clipping
  double val_fraction = 0.1;     // stage 1: tail of the corpus held out
  double early_stop_acc = 0.99;  // stage 1
  bool gold_ctrf = true;         // stage 2: form W_cf from labels instead of the classifier
  // Called after each epoch; returning true stops training.
  std::function<bool(std::size_t epoch, double loss, const Model& model)> after_epoch;
};

struct TrainReport {
  int stage = 0;
  std::uint64_t seed = 0;
  std::vector<double> epoch_losses;
  std::vector<double> val_accuracy;  // stage 1 only
  std::map<std::string, double> summary;

  nlohmann::json to_json() const;
};

/// Updates only the clause embedding table and the classifier. Throws
/// TrainingError when the corpus holds a single label class or the loss
/// becomes non-finite.
TrainReport train_stage1(Model& model, const std::vector<worldgen::Episode>& corpus, const TrainConfig& config);

/// Updates reranker, projector, prompt token, text map and decoder. Throws
/// ConfigError unless stage 1 has completed.
TrainReport train_stage2(Model& model, const std::vector<worldgen::Episode>& corpus, const TrainConfig& config);
TrainReport train_stage2(Model& model, const std::vector<PreparedEpisode>& corpus, const TrainConfig& config);

/// Fraction of clauses 1..n classified correctly at the model's threshold.
double clause_accuracy(const Model& model, const std::vector<PreparedEpisode>& episodes);

std::vector<PreparedEpisode> prepare_all(const std::vector<worldgen::Episode>& episodes, const Model& model);

}  // namespace llapa
