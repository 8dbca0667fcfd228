#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "llapa/car.hpp"
#include "llapa/diagnostics.hpp"
#include "llapa/error.hpp"
#include "llapa/evaluate.hpp"
#include "llapa/training.hpp"

using namespace llapa;

namespace {

std::vector<worldgen::Episode> corpus(std::size_t n, std::uint64_t first = 0, double ctrf_prob = 0.5) {
  worldgen::GenConfig cfg;
  cfg.ctrf_prob = ctrf_prob;
  std::vector<worldgen::Episode> out;
  for (std::uint64_t s = first; s < first + n; ++s) out.push_back(worldgen::generate_episode(s, cfg));
  return out;
}

double clause_prob(const Model& m, const std::string& goal, const std::string& clause) {
  const auto s0 = encoders::embed_clause(goal, m.text_vocab, m.params, 0);
  const auto sk = encoders::embed_clause(clause, m.text_vocab, m.params, 1);
  return car::classify_clause(s0, sk, m.params);
}

}  // namespace

TEST(Stage1, LearnsTemplateClauses) {
  Model m = init_model(ModelConfig{}, 1);
  TrainConfig tc;
  tc.epochs = 50;
  tc.early_stop_acc = 2.0;
  const auto rep = train_stage1(m, corpus(400), tc);
  EXPECT_GE(rep.summary.at("val_accuracy"), 0.95);
  EXPECT_EQ(m.stage, 1);
  const std::string goal = "Put the plate on the counter";
  EXPECT_GT(clause_prob(m, goal, "If the microwave contains burnt cookies, discard them first"), 0.9);
  EXPECT_LT(clause_prob(m, goal, "The rag is on the table"), 0.1);
}

TEST(Stage1, OverfitLossDecreases) {
  Model m = init_model(ModelConfig{}, 2);
  TrainConfig tc;
  tc.epochs = 300;
  tc.early_stop_acc = 2.0;  // never stop early
  tc.val_fraction = 0.0;
  tc.batch_size = 10;
  const auto rep = train_stage1(m, corpus(10, 0, 0.8), tc);
  ASSERT_EQ(rep.epoch_losses.size(), 300u);
  EXPECT_LT(rep.epoch_losses.back(), 0.01);
  for (std::size_t e = 1; e < rep.epoch_losses.size(); ++e) {
    EXPECT_LE(rep.epoch_losses[e], rep.epoch_losses[e - 1] + 1e-12) << "epoch " << e;
  }
}

TEST(Stage1, LeavesOtherParametersAlone) {
  Model m = init_model(ModelConfig{}, 3);
  const auto before = m.params.hash("dec.") ^ m.params.hash("ter.") ^ m.params.hash("proj.");
  const auto cls_before = m.params.hash("car.");
  TrainConfig tc;
  tc.epochs = 2;
  train_stage1(m, corpus(40), tc);
  EXPECT_EQ(before, m.params.hash("dec.") ^ m.params.hash("ter.") ^ m.params.hash("proj."));
  EXPECT_NE(cls_before, m.params.hash("car."));
}

TEST(Stage1, SingleClassCorpusRejected) {
  Model m = init_model(ModelConfig{}, 4);
  EXPECT_THROW(train_stage1(m, corpus(20, 0, 0.0), TrainConfig{}), TrainingError);
}

TEST(Stage1, NonFiniteLossIsTrainingError) {
  Model m = init_model(ModelConfig{}, 5);
  m.params.at("car.cls.w2").value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 5;
  EXPECT_THROW(train_stage1(m, corpus(40), tc), TrainingError);
}

TEST(Stage2, RequiresStage1) {
  Model m = init_model(ModelConfig{}, 6);
  EXPECT_THROW(train_stage2(m, corpus(4), TrainConfig{}), ConfigError);
}

TEST(Stage2, LossFallsAndClassifierFrozen) {
  Model m = init_model(ModelConfig{}, 7);
  const auto data = corpus(8);
  TrainConfig t1;
  t1.epochs = 5;
  train_stage1(m, data, t1);
  const auto cls = m.params.hash("car.") ^ m.params.hash("text.embed");
  TrainConfig t2;
  t2.epochs = 6;
  const auto rep = train_stage2(m, data, t2);
  EXPECT_LT(rep.epoch_losses.back(), rep.epoch_losses.front());
  EXPECT_EQ(cls, m.params.hash("car.") ^ m.params.hash("text.embed"));
  EXPECT_EQ(m.stage, 2);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  Model m = init_model(ModelConfig{}, 8);
  const auto path = std::filesystem::temp_directory_path() / "llapa_ckpt_test.json";
  save_checkpoint(m, path.string());
  const Model back = load_checkpoint(path.string());
  EXPECT_EQ(checkpoint_json(back), checkpoint_json(m));
  EXPECT_EQ(back.params.hash(), m.params.hash());
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), ConfigError);
}

TEST(Checkpoint, ShapeMismatchIsDataError) {
  Model m = init_model(ModelConfig{}, 9);
  auto doc = nlohmann::json::parse(checkpoint_json(m));
  doc["config"]["channels"] = 16;
  EXPECT_THROW(checkpoint_from_json(doc), DataError);
}

TEST(Predict, DeterministicAndWellFormed) {
  const Model m = init_model(ModelConfig{}, 10);
  set_diagnostic_sink(nullptr);
  for (const auto& ep : corpus(5)) {
    const auto a = predict_plan(m, ep), b = predict_plan(m, ep);
    EXPECT_EQ(a, b);
  }
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.subgrid = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.channels = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.images = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}
