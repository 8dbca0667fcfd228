#include <set>

#include <gtest/gtest.h>

#include "llapa/error.hpp"
#include "llapa/planeval.hpp"
#include "llapa/worldgen.hpp"

using namespace llapa;
using namespace llapa::worldgen;

namespace {

bool is_color(const Image& img, std::size_t r, std::size_t c, Rgb rgb) {
  const auto* p = img.pixel(r, c);
  return p[0] == rgb.r && p[1] == rgb.g && p[2] == rgb.b;
}

const Box* find_box(const Scene& scene, const std::string& id, std::size_t* image = nullptr) {
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    for (const auto& b : scene.boxes[i]) {
      if (b.object == id) {
        if (image) *image = i;
        return &b;
      }
    }
  }
  return nullptr;
}

}  // namespace

TEST(Worldgen, CounterfactualFractionWithinBinomialBounds) {
  GenConfig cfg;
  cfg.ctrf_prob = 0.5;
  std::size_t ctrf = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) ctrf += generate_episode(s, cfg).task.has_counterfactual();
  EXPECT_GE(ctrf, 450u);
  EXPECT_LE(ctrf, 550u);
}

TEST(Worldgen, Deterministic) {
  const GenConfig cfg;
  for (std::uint64_t s : {0ULL, 17ULL, 123456789ULL}) {
    const Episode a = generate_episode(s, cfg), b = generate_episode(s, cfg);
    EXPECT_EQ(a.world, b.world);
    EXPECT_EQ(a.scene, b.scene);
    EXPECT_EQ(episode_to_json(a).dump(), episode_to_json(b).dump());
  }
}

TEST(Worldgen, ReferencePlanExecutesAndSatisfiesGoal) {
  const GenConfig cfg;
  for (std::uint64_t s = 0; s < 300; ++s) {
    const Episode ep = generate_episode(s, cfg);
    const auto res = planeval::execute(ep.task.reference_plan, ep.world);
    ASSERT_TRUE(res.complete()) << "seed " << s << ": " << res.failure->reason;
    ASSERT_TRUE(goal_satisfied(ep.task.goal_condition, res.final_world)) << "seed " << s;
    ASSERT_EQ(ep.task.ctrf_step_flags.size(), ep.task.reference_plan.size());
    ASSERT_EQ(ep.task.clause_labels.size(), ep.task.clause_texts.size());
  }
}

TEST(Worldgen, ActiveHazardChangesThePlan) {
  const GenConfig cfg;
  std::size_t with_ctrf_steps = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Episode ep = generate_episode(s, cfg);
    const bool has_steps = !ep.task.ctrf_steps().empty();
    if (!ep.task.has_counterfactual()) EXPECT_FALSE(has_steps) << "seed " << s;
    with_ctrf_steps += has_steps;
  }
  EXPECT_GT(with_ctrf_steps, 20u);
}

TEST(Worldgen, ObjectRectangleMatchesPaletteExtent) {
  const GenConfig cfg;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 50 && checked < 5; ++s) {
    const Episode ep = generate_episode(s, cfg);
    const WorldObject* mw = ep.world.find("microwave");
    if (!mw || !mw->open || mw->dirty) continue;  // markers would cover part of the rectangle
    std::size_t img = 0;
    const Box* box = find_box(ep.scene, "microwave", &img);
    ASSERT_NE(box, nullptr);
    const Rgb color = palette(ObjectClass::kMicrowave);
    for (std::size_t i = 0; i < ep.scene.images.size(); ++i) {
      const Image& im = ep.scene.images[i];
      for (std::size_t r = 0; r < im.height; ++r) {
        for (std::size_t c = 0; c < im.width; ++c) {
          EXPECT_EQ(is_color(im, r, c, color), i == img && box->contains(r, c)) << r << "," << c;
        }
      }
    }
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST(Worldgen, BoxesNeverOverlap) {
  const GenConfig cfg;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Episode ep = generate_episode(s, cfg);
    for (std::size_t i = 0; i < ep.scene.images.size(); ++i) {
      std::vector<int> owner(cfg.height * cfg.width, 0);
      for (const auto& b : ep.scene.boxes[i]) {
        for (std::size_t r = b.top; r < b.bottom; ++r) {
          for (std::size_t c = b.left; c < b.right; ++c) ASSERT_EQ(owner[r * cfg.width + c]++, 0);
        }
      }
    }
  }
}

TEST(Worldgen, PaletteColorsDistinct) {
  std::set<std::tuple<int, int, int>> seen;
  for (const Rgb c : {kBackground, kLidColor, kDirtColor, kBurntColor}) seen.insert({c.r, c.g, c.b});
  for (ObjectClass cls : all_classes()) {
    const Rgb c = palette(cls);
    EXPECT_TRUE(seen.insert({c.r, c.g, c.b}).second) << class_name(cls);
  }
}

TEST(Worldgen, HazardMarkersDrawn) {
  const GenConfig cfg;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Episode ep = generate_episode(s, cfg);
    for (const auto& o : ep.world.objects) {
      std::size_t img = 0;
      const Box* b = find_box(ep.scene, o.id, &img);
      if (!b) continue;
      const Image& im = ep.scene.images[img];
      const bool lid = is_color(im, b->top, b->left, kLidColor);
      EXPECT_EQ(lid, is_openable(o.cls) && !o.open) << o.id;
      const bool dirt = is_color(im, b->bottom - 1, b->left, kDirtColor);
      const bool burnt = is_color(im, b->bottom - 1, b->left, kBurntColor);
      EXPECT_EQ(dirt, o.dirty) << o.id << " seed " << s;
      EXPECT_EQ(burnt, o.burnt) << o.id << " seed " << s;
      ++checked;
    }
  }
  EXPECT_GT(checked, 500u);
}

TEST(Worldgen, OracleSegmentCoversMentionedObject) {
  const GenConfig cfg;
  const Episode ep = generate_episode(3, cfg);
  std::size_t img = 0;
  const Box* box = find_box(ep.scene, "microwave", &img);
  ASSERT_NE(box, nullptr);
  const auto masks = oracle_segment(ep.scene, "clean the microwave");
  ASSERT_EQ(masks.size(), cfg.images);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (std::size_t r = 0; r < cfg.height; ++r) {
      for (std::size_t c = 0; c < cfg.width; ++c) {
        ASSERT_EQ(masks[i].at(r, c) != 0, i == img && box->contains(r, c));
      }
    }
  }
}

TEST(Worldgen, OracleSegmentOfAbsentObjectIsEmpty) {
  GenConfig cfg;
  cfg.disabled_classes = {"ashcan"};
  const Episode ep = generate_episode(5, cfg);
  ASSERT_EQ(ep.world.find("ashcan"), nullptr);
  for (const auto& m : oracle_segment(ep.scene, "Throw it in the ashcan")) EXPECT_FALSE(m.any());
}

TEST(Worldgen, MentionedClassesLongestMatchAndPlural) {
  const auto c = mentioned_classes("Put the cookies in the Microwave next to a cupboard");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], ObjectClass::kCookie);
  EXPECT_EQ(c[1], ObjectClass::kMicrowave);
}

TEST(Worldgen, JsonRoundTrip) {
  const GenConfig cfg;
  const Episode ep = generate_episode(42, cfg);
  const Episode back = episode_from_json(episode_to_json(ep), cfg);
  EXPECT_EQ(back.world, ep.world);
  EXPECT_EQ(back.scene, ep.scene);
  EXPECT_EQ(back.task.reference_plan, ep.task.reference_plan);
  EXPECT_EQ(back.task.clause_texts, ep.task.clause_texts);
  EXPECT_EQ(back.task.goal_condition, ep.task.goal_condition);
}

TEST(Worldgen, MalformedRecordIsDataError) {
  EXPECT_THROW(episode_from_json(nlohmann::json::parse(R"({"seed": 1})"), GenConfig{}), DataError);
  EXPECT_THROW(read_dataset("/nonexistent/file.jsonl", GenConfig{}), DataError);
}

TEST(Worldgen, ConfigValidation) {
  GenConfig cfg;
  cfg.images = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.height = 60;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.ctrf_prob = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.disabled_classes = {"spaceship"};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.disabled_classes = {"rag"};
  EXPECT_THROW(generate_episode(1, cfg), GenerationError);
}

TEST(Worldgen, AllCounterfactualOrNone) {
  GenConfig cfg;
  cfg.ctrf_prob = 1.0;
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_TRUE(generate_episode(s, cfg).task.has_counterfactual());
  cfg.ctrf_prob = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_FALSE(generate_episode(s, cfg).task.has_counterfactual());
}
