#include "llapa/training.hpp"

#include <cmath>
#include <numeric>

#include "llapa/car.hpp"
#include "llapa/error.hpp"

namespace llapa {

namespace {

void check_finite(double loss, int stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw TrainingError("stage " + std::to_string(stage) + " loss became non-finite in epoch " + std::to_string(epoch));
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng(seed).fork(epoch).shuffle(order);
  return order;
}

void optimizer_step(ParameterStore& params, const TrainConfig& config) {
  if (config.clip_norm > 0) clip_grad_norm(params, config.clip_norm);
  adam_step(params, config.adam);
}

const char* const kStage1Prefixes[] = {"car.cls.", "text.embed"};
const char* const kStage2Prefixes[] = {"dec.", "proj.", "s_cf", "ter.", "text_map."};

}  // namespace

nlohmann::json TrainReport::to_json() const {
  return {{"stage", stage},
          {"seed", seed},
          {"epoch_losses", epoch_losses},
          {"val_accuracy", val_accuracy},
          {"summary", summary}};
}

std::vector<PreparedEpisode> prepare_all(const std::vector<worldgen::Episode>& episodes, const Model& model) {
  std::vector<PreparedEpisode> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back(prepare_episode(e, model));
  return out;
}

double clause_accuracy(const Model& model, const std::vector<PreparedEpisode>& episodes) {
  std::size_t right = 0, total = 0;
  for (const auto& ep : episodes) {
    const auto probs = clause_probabilities(model, ep);
    for (std::size_t k = 0; k < probs.size(); ++k, ++total) {
      right += (probs[k] > model.config.threshold) == (ep.labels[k] == 1) ? 1 : 0;
    }
  }
  return total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
}

TrainReport train_stage1(Model& model, const std::vector<worldgen::Episode>& corpus, const TrainConfig& config) {
  const auto prepared = prepare_all(corpus, model);
  std::size_t pos = 0, neg = 0;
  for (const auto& ep : prepared) {
    for (int y : ep.labels) (y ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw TrainingError("stage-1 corpus needs both counterfactual and normal clauses");

  const std::size_t n_val =
      prepared.size() > 1 ? std::min(prepared.size() - 1, static_cast<std::size_t>(std::ceil(config.val_fraction *
                                                                                               prepared.size())))
                          : 0;
  const std::vector<PreparedEpisode> train(prepared.begin(), prepared.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::vector<PreparedEpisode> val(prepared.end() - static_cast<std::ptrdiff_t>(n_val), prepared.end());

  ParameterStore& params = model.params;
  params.set_all_trainable(false);
  for (const char* p : kStage1Prefixes) params.set_trainable(p, true);
  params.reset_optimizer();
  params.zero_grad();
  const std::uint64_t frozen_before = params.hash("dec.") ^ params.hash("proj.") ^ params.hash("ter.") ^
                                      params.hash("s_cf") ^ params.hash("text_map.");

  TrainReport report;
  report.stage = 1;
  report.seed = config.seed;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      Tape tape;
      std::vector<Var> probs;
      std::vector<double> labels;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        const auto& ep = train[order[i]];
        const Var s0 = encoders::embed_clause(tape, params, ep.clause_ids[0]);
        for (std::size_t k = 1; k < ep.clause_ids.size(); ++k) {
          probs.push_back(car::classify_clause(tape, params, s0, encoders::embed_clause(tape, params, ep.clause_ids[k])));
          labels.push_back(ep.labels[k - 1]);
        }
      }
      if (probs.empty()) continue;
      const Var loss = binary_cross_entropy(concat_rows(probs), labels);
      check_finite(loss.value().item(), 1, epoch);
      backward(loss, params);
      optimizer_step(params, config);
      loss_sum += loss.value().item();
      ++batches;
    }
    const double epoch_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    report.epoch_losses.push_back(epoch_loss);
    const double acc = clause_accuracy(model, val.empty() ? train : val);
    report.val_accuracy.push_back(acc);
    if (config.after_epoch && config.after_epoch(epoch, epoch_loss, model)) break;
    if (acc >= config.early_stop_acc) break;
  }
  const std::uint64_t frozen_after = params.hash("dec.") ^ params.hash("proj.") ^ params.hash("ter.") ^
                                     params.hash("s_cf") ^ params.hash("text_map.");
  if (frozen_before != frozen_after) throw ContractError("stage-1 training modified frozen parameters");
  params.set_all_trainable(true);
  model.stage = std::max(model.stage, 1);
  report.summary["epochs"] = static_cast<double>(report.epoch_losses.size());
  report.summary["val_accuracy"] = report.val_accuracy.empty() ? 0.0 : report.val_accuracy.back();
  report.summary["val_episodes"] = static_cast<double>(val.size());
  return report;
}

TrainReport train_stage2(Model& model, const std::vector<worldgen::Episode>& corpus, const TrainConfig& config) {
  if (model.stage < 1) throw ConfigError("stage-2 training requires a stage-1 checkpoint");
  return train_stage2(model, prepare_all(corpus, model), config);
}

TrainReport train_stage2(Model& model, const std::vector<PreparedEpisode>& corpus, const TrainConfig& config) {
  if (model.stage < 1) throw ConfigError("stage-2 training requires a stage-1 checkpoint");
  if (corpus.empty()) throw TrainingError("stage-2 corpus is empty");
  ParameterStore& params = model.params;
  params.set_all_trainable(false);
  for (const char* p : kStage2Prefixes) params.set_trainable(p, true);
  params.reset_optimizer();
  params.zero_grad();
  const std::uint64_t frozen_before = params.hash("car.") ^ params.hash("text.embed");

  std::vector<std::set<std::size_t>> ctrf(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ctrf[i] = config.gold_ctrf ? corpus[i].gold_ctrf
                               : car::select_ctrf(clause_probabilities(model, corpus[i]), model.config.threshold);
  }

  TrainReport report;
  report.stage = 2;
  report.seed = config.seed;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(corpus.size(), config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double w = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        Tape tape;
        const Var loss = plan_loss(tape, model, corpus[order[i]], ctrf[order[i]]);
        check_finite(loss.value().item(), 2, epoch);
        loss_sum += loss.value().item();
        backward(scale(loss, w), params);
      }
      optimizer_step(params, config);
    }
    const double epoch_loss = loss_sum / static_cast<double>(corpus.size());
    report.epoch_losses.push_back(epoch_loss);
    if (config.after_epoch && config.after_epoch(epoch, epoch_loss, model)) break;
  }
  if (frozen_before != (params.hash("car.") ^ params.hash("text.embed"))) {
    throw ContractError("stage-2 training modified frozen parameters");
  }
  params.set_all_trainable(true);
  model.stage = 2;
  report.summary["epochs"] = static_cast<double>(report.epoch_losses.size());
  report.summary["final_loss"] = report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back();
  return report;
}

}  // namespace llapa
