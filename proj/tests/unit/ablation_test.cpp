#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "llapa/ablation.hpp"
#include "llapa/diagnostics.hpp"
#include "llapa/error.hpp"

using namespace llapa;

namespace {

std::vector<worldgen::Episode> corpus(std::size_t n, std::uint64_t first) {
  const worldgen::GenConfig cfg;
  std::vector<worldgen::Episode> out;
  for (std::uint64_t s = first; s < first + n; ++s) out.push_back(worldgen::generate_episode(s, cfg));
  return out;
}

}  // namespace

TEST(Variant, NamesRoundTrip) {
  for (Variant v : {Variant::kFull, Variant::kNoCar, Variant::kNoTer, Variant::kOnlySft}) {
    EXPECT_EQ(variant_from_name(variant_name(v)), v);
  }
  EXPECT_FALSE(variant_from_name("w/o everything").has_value());
}

TEST(Variant, Flags) {
  const ModelConfig base;
  EXPECT_TRUE(apply_variant(base, Variant::kFull).use_ter);
  EXPECT_TRUE(apply_variant(base, Variant::kFull).use_car);
  EXPECT_FALSE(apply_variant(base, Variant::kNoCar).use_car);
  EXPECT_TRUE(apply_variant(base, Variant::kNoCar).use_ter);
  EXPECT_FALSE(apply_variant(base, Variant::kNoTer).use_ter);
  EXPECT_TRUE(apply_variant(base, Variant::kNoTer).use_car);
  const ModelConfig sft = apply_variant(base, Variant::kOnlySft);
  EXPECT_FALSE(sft.use_ter);
  EXPECT_FALSE(sft.use_car);
}

TEST(Ablation, ReportShapeAndCheckpointReuse) {
  set_diagnostic_sink(nullptr);
  const auto dir = std::filesystem::temp_directory_path() / "llapa_ablation_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  AblationSpec spec;
  spec.variants = {Variant::kFull, Variant::kOnlySft};
  spec.subgrids = {2, 4};
  spec.stage1.epochs = 2;
  spec.stage2.epochs = 1;
  spec.checkpoint_dir = dir.string();
  const auto train = corpus(6, 0), test = corpus(6, 1000);
  std::vector<std::string> log;
  const auto first = run_ablation(spec, train, test, [&](const std::string& l) { log.push_back(l); });
  ASSERT_EQ(first.rows.size(), 4u);
  for (const auto& row : first.rows) {
    EXPECT_EQ(row.tokens_per_image, row.subgrid * row.subgrid);
    EXPECT_TRUE(std::isfinite(row.final_loss));
    EXPECT_EQ(row.report.splits.count("total"), 1u);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "full_K2_s1.json"));
  const auto second = run_ablation(spec, train, test);
  EXPECT_EQ(second.to_csv().substr(0, 40), first.to_csv().substr(0, 40));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(second.rows[i].report.to_csv(), first.rows[i].report.to_csv());
  }
  const std::string summary = first.summary_csv();
  EXPECT_NE(summary.find("only-sft"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Ablation, EmptySpecRejected) {
  AblationSpec spec;
  spec.variants.clear();
  EXPECT_THROW(run_ablation(spec, corpus(2, 0), corpus(2, 10)), ConfigError);
}
