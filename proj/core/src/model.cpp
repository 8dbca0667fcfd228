#include "llapa/model.hpp"

#include <fstream>
#include <sstream>

#include "llapa/car.hpp"
#include "llapa/error.hpp"

namespace llapa {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (images < 1 || images > 4) fail("image count m must lie in [1, 4]");
  if (patch_grid == 0 || image_size % patch_grid != 0) {
    fail("image size " + std::to_string(image_size) + " is not divisible by P = " + std::to_string(patch_grid));
  }
  if (subgrid == 0 || patch_grid % subgrid != 0) {
    fail("P = " + std::to_string(patch_grid) + " is not divisible by K = " + std::to_string(subgrid));
  }
  if (ter_heads == 0 || channels % ter_heads != 0) {
    fail("C = " + std::to_string(channels) + " is not divisible by " + std::to_string(ter_heads) + " heads");
  }
  if (dec_heads == 0 || width % dec_heads != 0) {
    fail("D = " + std::to_string(width) + " is not divisible by " + std::to_string(dec_heads) + " heads");
  }
  if (max_len == 0 || text_max == 0) fail("max_len and text_max must be positive");
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail("classifier threshold must lie in [0, 1]");
}

worldgen::GenConfig ModelConfig::apply_to(worldgen::GenConfig gen) const {
  gen.height = image_size;
  gen.width = image_size;
  gen.images = images;
  gen.patch_grid = patch_grid;
  return gen;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"images", c.images},
       {"image_size", c.image_size},
       {"patch_grid", c.patch_grid},
       {"channels", c.channels},
       {"ter_heads", c.ter_heads},
       {"subgrid", c.subgrid},
       {"width", c.width},
       {"dec_blocks", c.dec_blocks},
       {"dec_heads", c.dec_heads},
       {"dec_ff", c.dec_ff},
       {"max_len", c.max_len},
       {"text_max", c.text_max},
       {"cls_hidden", c.cls_hidden},
       {"proj_hidden", c.proj_hidden},
       {"threshold", c.threshold},
       {"use_ter", c.use_ter},
       {"use_car", c.use_car},
       {"per_image_attention", c.per_image_attention},
       {"featurizer_seed", c.featurizer_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const ModelConfig d;
  c.images = j.value("images", d.images);
  c.image_size = j.value("image_size", d.image_size);
  c.patch_grid = j.value("patch_grid", d.patch_grid);
  c.channels = j.value("channels", d.channels);
  c.ter_heads = j.value("ter_heads", d.ter_heads);
  c.subgrid = j.value("subgrid", d.subgrid);
  c.width = j.value("width", d.width);
  c.dec_blocks = j.value("dec_blocks", d.dec_blocks);
  c.dec_heads = j.value("dec_heads", d.dec_heads);
  c.dec_ff = j.value("dec_ff", d.dec_ff);
  c.max_len = j.value("max_len", d.max_len);
  c.text_max = j.value("text_max", d.text_max);
  c.cls_hidden = j.value("cls_hidden", d.cls_hidden);
  c.proj_hidden = j.value("proj_hidden", d.proj_hidden);
  c.threshold = j.value("threshold", d.threshold);
  c.use_ter = j.value("use_ter", d.use_ter);
  c.use_car = j.value("use_car", d.use_car);
  c.per_image_attention = j.value("per_image_attention", d.per_image_attention);
  c.featurizer_seed = j.value("featurizer_seed", d.featurizer_seed);
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  model.text_vocab = encoders::Vocabulary::clause_default();
  const Rng root(seed);
  Rng text_rng = root.fork(1), car_rng = root.fork(2), ter_rng = root.fork(3), proj_rng = root.fork(4),
      dec_rng = root.fork(5);
  model.params.add(encoders::kTextEmbed, normal_tensor(text_rng, model.text_vocab.size(), config.channels, 0.1));
  car::add_params(model.params, car_rng, config.channels, config.cls_hidden);
  ter::add_params(model.params, ter_rng, config.channels);
  assembly::add_params(model.params, proj_rng, config.channels, config.width, config.proj_hidden);
  decoder::add_params(model.params, dec_rng, config.decoder_config());
  return model;
}

std::string checkpoint_json(const Model& model) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, p] : model.params) {
    params.push_back({{"name", name}, {"shape", p.value.shape()}, {"values", p.value.values()}});
  }
  nlohmann::json doc = {{"format_version", kCheckpointVersion},
                        {"config", model.config},
                        {"stage", model.stage},
                        {"vocabulary", model.text_vocab.tokens()},
                        {"parameters", params}};
  return doc.dump() + "\n";
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << checkpoint_json(model);
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Model checkpoint_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint format version " + doc.at("format_version").dump());
    }
    ModelConfig config = doc.at("config").get<ModelConfig>();
    Model model = init_model(config, 0);
    model.stage = doc.at("stage").get<int>();
    model.text_vocab = encoders::Vocabulary(doc.at("vocabulary").get<std::vector<std::string>>());
    std::size_t seen = 0;
    for (const auto& p : doc.at("parameters")) {
      const auto name = p.at("name").get<std::string>();
      if (!model.params.contains(name)) throw DataError("checkpoint holds unknown parameter " + name);
      Tensor value(p.at("shape").get<Shape>(), p.at("values").get<std::vector<double>>());
      Parameter& dst = model.params.at(name);
      if (value.shape() != dst.value.shape()) {
        throw DataError("checkpoint parameter " + name + " has shape " + shape_str(value.shape()) + ", expected " +
                        shape_str(dst.value.shape()));
      }
      dst.value = std::move(value);
      ++seen;
    }
    if (seen != model.params.size()) throw DataError("checkpoint is missing parameters");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint not found: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

PreparedEpisode prepare_episode(const worldgen::Episode& episode, const Model& model) {
  const ModelConfig& cfg = model.config;
  if (episode.scene.images.size() != cfg.images) {
    throw ConfigError("episode has " + std::to_string(episode.scene.images.size()) + " images, model expects " +
                      std::to_string(cfg.images));
  }
  PreparedEpisode ep;
  ep.split = episode.task.split();
  const auto clauses = encoders::segment_clauses(episode.task.full_text());
  if (clauses.size() != episode.task.clause_texts.size() + 1) {
    throw DataError("episode " + std::to_string(episode.seed) + " does not segment into its clause list");
  }
  ep.features = encoders::encode_image(episode.scene, cfg.feature_config());
  ep.per_clause.assign(cfg.images, {});
  for (const auto& clause : clauses) {
    const auto masks = worldgen::oracle_segment(episode.scene, clause);
    for (std::size_t i = 0; i < cfg.images; ++i) ep.per_clause[i].push_back(maskgrid::pool_mask(masks[i], cfg.patch_grid));
    ep.clause_ids.push_back(model.text_vocab.encode(clause));
    ep.text_ids.insert(ep.text_ids.end(), ep.clause_ids.back().begin(), ep.clause_ids.back().end());
  }
  if (ep.text_ids.size() > cfg.text_max) {
    throw DataError("task text of " + std::to_string(ep.text_ids.size()) + " tokens exceeds text_max " +
                    std::to_string(cfg.text_max));
  }
  ep.labels = episode.task.clause_labels;
  for (std::size_t k = 0; k < ep.labels.size(); ++k) {
    if (ep.labels[k]) ep.gold_ctrf.insert(k + 1);
  }
  ep.target_tokens = decoder::ActionVocab::standard().encode(episode.task.reference_plan);
  if (ep.target_tokens.size() > cfg.max_len) {
    throw DataError("reference plan of episode " + std::to_string(episode.seed) + " exceeds max_len");
  }
  return ep;
}

std::vector<double> clause_probabilities(const Model& model, const PreparedEpisode& ep) {
  const Tensor& table = model.params.value(encoders::kTextEmbed);
  auto embed = [&](std::size_t k) {
    encoders::ClauseEmbedding e{k, Tensor({1, table.cols()})};
    for (std::size_t id : ep.clause_ids[k]) {
      for (std::size_t c = 0; c < table.cols(); ++c) e.vector[c] += table(id, c);
    }
    for (double& x : e.vector.data()) x /= static_cast<double>(ep.clause_ids[k].size());
    return e;
  };
  const auto s0 = embed(0);
  std::vector<double> probs;
  for (std::size_t k = 1; k < ep.clause_ids.size(); ++k) probs.push_back(car::classify_clause(s0, embed(k), model.params));
  return probs;
}

assembly::InputSequence build_input(const Model& model, const PreparedEpisode& ep, const std::set<std::size_t>& ctrf) {
  const ModelConfig& cfg = model.config;
  const auto global = maskgrid::build_global_mask(ep.per_clause);
  const encoders::FeatureMap rerank =
      cfg.use_ter ? ter::masked_self_attention(ep.features, global, model.params, cfg.ter_config()) : ep.features;
  const auto w_cf = maskgrid::build_ctrf_mask(ep.per_clause, ctrf);
  const Tensor v_cf = car::conditional_pool(rerank, w_cf, cfg.subgrid).tokens;
  const Tensor& table = model.params.value(encoders::kTextEmbed);
  Tensor text({ep.text_ids.size(), table.cols()});
  for (std::size_t r = 0; r < ep.text_ids.size(); ++r) {
    std::copy(table.row(ep.text_ids[r]).begin(), table.row(ep.text_ids[r]).end(), text.row(r).begin());
  }
  return assembly::assemble_input(rerank.tokens, model.params.value(assembly::kPromptToken), v_cf,
                                  assembly::map_text(text, model.params), model.params, !cfg.use_car);
}

assembly::InputVar build_input(Tape& tape, Model& model, const PreparedEpisode& ep, const std::set<std::size_t>& ctrf) {
  const ModelConfig& cfg = model.config;
  const Var v = tape.constant(ep.features.tokens);
  const Var rerank = cfg.use_ter ? ter::masked_self_attention(tape, model.params, v,
                                                              maskgrid::build_global_mask(ep.per_clause),
                                                              cfg.ter_config())
                                 : v;
  const Var v_cf = car::conditional_pool(rerank, maskgrid::build_ctrf_mask(ep.per_clause, ctrf), cfg.subgrid);
  const Var text = assembly::map_text(tape, model.params,
                                      gather_rows(tape.parameter(model.params, encoders::kTextEmbed), ep.text_ids));
  return assembly::assemble_input(tape, model.params, rerank, v_cf, text, !cfg.use_car);
}

Var plan_loss(Tape& tape, Model& model, const PreparedEpisode& ep, const std::set<std::size_t>& ctrf) {
  const auto input = build_input(tape, model, ep, ctrf);
  std::vector<std::size_t> inputs = {decoder::ActionVocab::standard().bos()};
  inputs.insert(inputs.end(), ep.target_tokens.begin(), ep.target_tokens.end() - 1);
  const Var z = decoder::logits(tape, model.params, model.config.decoder_config(), input.tokens, inputs);
  return cross_entropy(z, ep.target_tokens);
}

decoder::DecodeResult predict(const Model& model, const PreparedEpisode& ep) {
  std::set<std::size_t> ctrf;
  if (model.config.use_car) ctrf = car::select_ctrf(clause_probabilities(model, ep), model.config.threshold);
  const auto input = build_input(model, ep, ctrf);
  return decoder::greedy_decode(input.tokens, model.params, model.config.decoder_config(), model.config.max_len);
}

planeval::ActionSequence predict_plan(const Model& model, const worldgen::Episode& episode) {
  return predict(model, prepare_episode(episode, model)).plan;
}

}  // namespace llapa
