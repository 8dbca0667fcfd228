#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace llapa {

enum class ObjectClass : std::uint8_t {
  kMicrowave,
  kCabinet,
  kSink,
  kAshcan,
  kTable,
  kCounter,
  kJar,
  kCookie,
  kRag,
  kPlate,
  kCup,
  kApple,
};

inline constexpr std::size_t kNumClasses = 12;

std::string_view class_name(ObjectClass cls);
std::optional<ObjectClass> class_from_name(std::string_view name);
const std::array<ObjectClass, kNumClasses>& all_classes();

// Affordance table.
bool is_openable(ObjectClass cls);    // microwave, cabinet
bool is_container(ObjectClass cls);   // microwave, cabinet, sink, ashcan
bool is_surface(ObjectClass cls);     // table, counter
bool is_cleanable(ObjectClass cls);   // microwave, plate, table
bool is_burnable(ObjectClass cls);    // cookie, apple
bool is_powerable(ObjectClass cls);   // microwave
bool is_portable(ObjectClass cls);    // the six small items
inline bool is_fixture(ObjectClass cls) { return is_container(cls) || is_surface(cls); }

inline constexpr std::string_view kFloor = "floor";
inline constexpr std::string_view kHand = "hand";

struct WorldObject {
  std::string id;
  ObjectClass cls = ObjectClass::kTable;
  std::string location{kFloor};  // fixture id, "floor", or "hand" while held
  bool open = false;
  bool powered = false;
  bool dirty = false;
  bool burnt = false;
  bool held = false;

  friend bool operator==(const WorldObject&, const WorldObject&) = default;
};

struct Agent {
  std::string location{kFloor};
  std::optional<std::string> holding;

  friend bool operator==(const Agent&, const Agent&) = default;
};

/// Symbolic household state. Object ids are unique; in generated worlds each
/// class occurs at most once and the id equals the class name.
struct WorldState {
  std::vector<WorldObject> objects;
  Agent agent;
  std::uint64_t layout_seed = 0;  // drives the deterministic raster layout

  const WorldObject* find(std::string_view id) const;
  WorldObject* find(std::string_view id);
  // Resolves an action argument given either an id or a class name.
  const WorldObject* resolve(std::string_view name) const;

  // Throws ContractError when an invariant is broken.
  void validate() const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

enum class GoalKind : std::uint8_t {
  kAt,        // object located at target
  kNotDirty,  // object present and clean
  kRemoved,   // object discarded
  kPresent,   // object still in the world
};

std::string_view goal_kind_name(GoalKind kind);
std::optional<GoalKind> goal_kind_from_name(std::string_view name);

struct GoalPredicate {
  GoalKind kind = GoalKind::kAt;
  std::string object;
  std::string target;  // only for kAt

  bool holds(const WorldState& world) const;
  friend bool operator==(const GoalPredicate&, const GoalPredicate&) = default;
};

bool goal_satisfied(const std::vector<GoalPredicate>& goal, const WorldState& world);

}  // namespace llapa
