#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "llapa/planeval.hpp"
#include "llapa/training.hpp"

namespace llapa {

enum class Variant : std::uint8_t { kFull, kNoCar, kNoTer, kOnlySft };

std::string variant_name(Variant v);
std::optional<Variant> variant_from_name(const std::string& name);
// no-ter: identity reranker; no-car: counterfactual segment zeroed; only-sft: both.
ModelConfig apply_variant(ModelConfig config, Variant v);

struct AblationSpec {
  ModelConfig base;
  std::vector<Variant> variants = {Variant::kFull, Variant::kNoCar, Variant::kNoTer, Variant::kOnlySft};
  std::vector<std::size_t> subgrids;  // K values; empty keeps base.subgrid
  std::vector<std::uint64_t> seeds = {1};
  TrainConfig stage1;
  TrainConfig stage2;
  std::string checkpoint_dir;  // reuse or store per-run checkpoints when set
};

struct AblationRow {
  std::string variant;
  std::size_t subgrid = 0;
  std::size_t tokens_per_image = 0;
  std::uint64_t seed = 0;
  double stage1_accuracy = 0.0;
  double final_loss = 0.0;
  planeval::MetricReport report;
};

struct AblationResult {
  std::vector<AblationRow> rows;

  // Mean over seeds of a split metric ("exec", "lcs" or "corr").
  double mean(const std::string& variant, std::size_t subgrid, const std::string& split, const std::string& metric) const;
  // One line per run and split.
  std::string to_csv() const;
  // One line per variant, K and split, averaged over seeds.
  std::string summary_csv() const;
};

using AblationLog = std::function<void(const std::string&)>;

/// Trains (or reloads) one model per variant, K and seed, sequentially, and
/// evaluates each on `test`.
AblationResult run_ablation(const AblationSpec& spec, const std::vector<worldgen::Episode>& train,
                            const std::vector<worldgen::Episode>& test, const AblationLog& log = {});

}  // namespace llapa
