#pragma once

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llapa/assembly.hpp"
#include "llapa/decoder.hpp"
#include "llapa/encoders.hpp"
#include "llapa/maskgrid.hpp"
#include "llapa/parameters.hpp"
#include "llapa/ter.hpp"
#include "llapa/worldgen.hpp"

namespace llapa {

inline constexpr int kCheckpointVersion = 1;

struct ModelConfig {
  std::size_t images = 2;       // m
  std::size_t image_size = 64;  // H = W
  std::size_t patch_grid = 8;   // P
  std::size_t channels = 32;    // C
  std::size_t ter_heads = 8;
  std::size_t subgrid = 4;      // K
  std::size_t width = 32;       // D
  std::size_t dec_blocks = 2;
  std::size_t dec_heads = 4;
  std::size_t dec_ff = 128;
  std::size_t max_len = 64;
  std::size_t text_max = 64;
  std::size_t cls_hidden = 64;
  std::size_t proj_hidden = 64;
  double threshold = 0.5;
  bool use_ter = true;
  bool use_car = true;
  bool per_image_attention = false;
  std::uint64_t featurizer_seed = 0x5EEDF00DULL;

  // Throws ConfigError on inconsistent geometry.
  void validate() const;
  std::size_t prefix_capacity() const { return images * patch_grid * patch_grid + 1 + images * subgrid * subgrid + text_max; }
  encoders::FeatureConfig feature_config() const { return {patch_grid, channels, featurizer_seed}; }
  ter::TerConfig ter_config() const { return {ter_heads, per_image_attention}; }
  decoder::DecoderConfig decoder_config() const {
    return {width, dec_blocks, dec_heads, dec_ff, prefix_capacity() + max_len + 1};
  }
  // Generator settings with matching image geometry.
  worldgen::GenConfig apply_to(worldgen::GenConfig gen) const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct Model {
  ModelConfig config;
  ParameterStore params;
  encoders::Vocabulary text_vocab;
  int stage = 0;  // last completed training stage
};

Model init_model(const ModelConfig& config, std::uint64_t seed);

// JSON document {format_version, config, stage, vocabulary, parameters:[{name, shape, values}]}.
std::string checkpoint_json(const Model& model);
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);
Model checkpoint_from_json(const nlohmann::json& doc);

/// Everything about an episode that does not depend on trainable parameters.
struct PreparedEpisode {
  std::string split;
  encoders::FeatureMap features;
  std::vector<std::vector<maskgrid::PatchWeights>> per_clause;  // [image][clause], clause 0 = goal
  std::vector<std::vector<std::size_t>> clause_ids;             // text-vocabulary ids per clause
  std::vector<std::size_t> text_ids;                            // all clause tokens in order
  std::vector<int> labels;                                      // clauses 1..n
  std::set<std::size_t> gold_ctrf;                              // 1-based
  std::vector<std::size_t> target_tokens;                       // action tokens + EOS
};

PreparedEpisode prepare_episode(const worldgen::Episode& episode, const Model& model);

/// Classifier probabilities for clauses 1..n.
std::vector<double> clause_probabilities(const Model& model, const PreparedEpisode& ep);

/// Decoder prefix for the given counterfactual clause set.
assembly::InputSequence build_input(const Model& model, const PreparedEpisode& ep, const std::set<std::size_t>& ctrf);
assembly::InputVar build_input(Tape& tape, Model& model, const PreparedEpisode& ep, const std::set<std::size_t>& ctrf);

/// Teacher-forced language-modelling loss on the reference plan.
Var plan_loss(Tape& tape, Model& model, const PreparedEpisode& ep, const std::set<std::size_t>& ctrf);

/// Full inference: classifier-selected clauses, reranking, pooling, greedy decode.
decoder::DecodeResult predict(const Model& model, const PreparedEpisode& ep);
planeval::ActionSequence predict_plan(const Model& model, const worldgen::Episode& episode);

}  // namespace llapa
