#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "llapa/maskgrid.hpp"
#include "llapa/planeval.hpp"
#include "llapa/world.hpp"

namespace llapa::worldgen {

inline constexpr int kTemplateVersion = 1;

struct GenConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t images = 2;      // m
  std::size_t patch_grid = 8;  // P
  double ctrf_prob = 0.5;
  // Chance that a counterfactual clause's condition actually holds.
  double hazard_active_prob = 0.5;
  // Chance that an unrelated cleanable/burnable object carries a hazard.
  double distractor_hazard_prob = 0.35;
  double closed_prob = 0.5;
  double extra_item_prob = 0.7;
  std::size_t max_distractor_facts = 2;
  std::vector<std::string> disabled_classes;
  int template_version = kTemplateVersion;

  // Throws ConfigError for out-of-range fields.
  void validate() const;
  bool enabled(ObjectClass cls) const;
};

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  std::uint8_t* pixel(std::size_t r, std::size_t c) { return &rgb[(r * width + c) * 3]; }
  const std::uint8_t* pixel(std::size_t r, std::size_t c) const { return &rgb[(r * width + c) * 3]; }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Box {
  std::string object;
  ObjectClass cls = ObjectClass::kTable;
  std::size_t top = 0, left = 0, bottom = 0, right = 0;  // half-open pixel rectangle

  bool contains(std::size_t r, std::size_t c) const { return r >= top && r < bottom && c >= left && c < right; }
  friend bool operator==(const Box&, const Box&) = default;
};

struct Scene {
  std::vector<Image> images;
  std::vector<std::vector<Box>> boxes;  // per image

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kBackground{128, 128, 128};
inline constexpr Rgb kLidColor{235, 235, 235};    // closed openable, top quarter
inline constexpr Rgb kDirtColor{120, 72, 24};     // dirty, bottom quarter
inline constexpr Rgb kBurntColor{16, 16, 16};     // burnt, bottom quarter
Rgb palette(ObjectClass cls);

struct TaskSpec {
  std::string goal_text;
  std::vector<std::string> clause_texts;  // S_1..S_n
  std::vector<int> clause_labels;         // 1 = counterfactual
  planeval::ActionSequence reference_plan;
  std::vector<bool> ctrf_step_flags;
  std::vector<GoalPredicate> goal_condition;
  std::vector<bool> goal_ctrf_flags;  // predicate introduced by a counterfactual clause

  // Goal followed by the clauses, each terminated by ". ".
  std::string full_text() const;
  bool has_counterfactual() const;
  std::string split() const { return has_counterfactual() ? "ctrf" : "norm"; }
  planeval::ActionSequence normal_steps() const;
  planeval::ActionSequence ctrf_steps() const;
};

struct Episode {
  std::uint64_t seed = 0;
  WorldState world;
  Scene scene;
  TaskSpec task;
};

/// Deterministic in (seed, config). Throws GenerationError when the
/// configuration cannot produce a task.
Episode generate_episode(std::uint64_t seed, const GenConfig& config);

/// Flat-palette rendering with state markers; layout drawn from world.layout_seed.
Scene rasterize(const WorldState& world, const GenConfig& config);

/// Class names mentioned in `text` (case-insensitive, longest match, plural "s" accepted).
std::vector<ObjectClass> mentioned_classes(std::string_view text);

/// One mask per image: union of the boxes of every mentioned object.
std::vector<maskgrid::PixelMask> oracle_segment(const Scene& scene, std::string_view clause_text);

// Line-delimited dataset files. Rasters are not stored; they are re-rendered
// from the world on load.
nlohmann::json episode_to_json(const Episode& episode);
Episode episode_from_json(const nlohmann::json& doc, const GenConfig& config);
void write_dataset(const std::string& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_dataset(const std::string& path, const GenConfig& config);

nlohmann::json world_to_json(const WorldState& world);
WorldState world_from_json(const nlohmann::json& doc);

}  // namespace llapa::worldgen
