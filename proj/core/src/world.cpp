#include "llapa/world.hpp"

#include <algorithm>
#include <set>

#include "llapa/error.hpp"

namespace llapa {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "microwave", "cabinet", "sink", "ashcan", "table", "counter", "jar", "cookie", "rag", "plate", "cup", "apple",
};

}  // namespace

std::string_view class_name(ObjectClass cls) { return kClassNames[static_cast<std::size_t>(cls)]; }

std::optional<ObjectClass> class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return static_cast<ObjectClass>(i);
  }
  return std::nullopt;
}

const std::array<ObjectClass, kNumClasses>& all_classes() {
  static const std::array<ObjectClass, kNumClasses> classes = [] {
    std::array<ObjectClass, kNumClasses> out{};
    for (std::size_t i = 0; i < kNumClasses; ++i) out[i] = static_cast<ObjectClass>(i);
    return out;
  }();
  return classes;
}

bool is_openable(ObjectClass c) { return c == ObjectClass::kMicrowave || c == ObjectClass::kCabinet; }
bool is_container(ObjectClass c) {
  return is_openable(c) || c == ObjectClass::kSink || c == ObjectClass::kAshcan;
}
bool is_surface(ObjectClass c) { return c == ObjectClass::kTable || c == ObjectClass::kCounter; }
bool is_cleanable(ObjectClass c) {
  return c == ObjectClass::kMicrowave || c == ObjectClass::kPlate || c == ObjectClass::kTable;
}
bool is_burnable(ObjectClass c) { return c == ObjectClass::kCookie || c == ObjectClass::kApple; }
bool is_powerable(ObjectClass c) { return c == ObjectClass::kMicrowave; }
bool is_portable(ObjectClass c) { return !is_fixture(c); }

const WorldObject* WorldState::find(std::string_view id) const {
  auto it = std::find_if(objects.begin(), objects.end(), [&](const WorldObject& o) { return o.id == id; });
  return it == objects.end() ? nullptr : &*it;
}

WorldObject* WorldState::find(std::string_view id) {
  auto it = std::find_if(objects.begin(), objects.end(), [&](const WorldObject& o) { return o.id == id; });
  return it == objects.end() ? nullptr : &*it;
}

const WorldObject* WorldState::resolve(std::string_view name) const {
  if (const WorldObject* o = find(name)) return o;
  auto cls = class_from_name(name);
  if (!cls) return nullptr;
  auto it = std::find_if(objects.begin(), objects.end(), [&](const WorldObject& o) { return o.cls == *cls; });
  return it == objects.end() ? nullptr : &*it;
}

void WorldState::validate() const {
  std::set<std::string> ids;
  std::size_t held = 0;
  for (const auto& o : objects) {
    if (!ids.insert(o.id).second) throw ContractError("duplicate object id: " + o.id);
  }
  for (const auto& o : objects) {
    if (o.held) {
      ++held;
      if (o.location != kHand) throw ContractError("held object " + o.id + " not located in hand");
      if (agent.holding != o.id) throw ContractError("held object " + o.id + " not recorded on the agent");
    } else if (o.location != kFloor) {
      const WorldObject* loc = find(o.location);
      if (!loc) throw ContractError("object " + o.id + " located at unknown " + o.location);
      if (!is_fixture(loc->cls)) throw ContractError("object " + o.id + " located on non-fixture " + o.location);
    }
    if (o.open && !is_openable(o.cls)) throw ContractError("open flag on non-openable " + o.id);
    if (o.dirty && !is_cleanable(o.cls)) throw ContractError("dirty flag on non-cleanable " + o.id);
    if (o.burnt && !is_burnable(o.cls)) throw ContractError("burnt flag on non-burnable " + o.id);
    if (o.powered && !is_powerable(o.cls)) throw ContractError("powered flag on non-powerable " + o.id);
  }
  if (held > 1) throw ContractError("more than one held object");
  if (agent.holding && (held != 1 || !find(*agent.holding))) {
    throw ContractError("agent holding record is inconsistent");
  }
  if (agent.location != kFloor && !find(agent.location)) {
    throw ContractError("agent at unknown location " + agent.location);
  }
}

std::string_view goal_kind_name(GoalKind kind) {
  switch (kind) {
    case GoalKind::kAt: return "at";
    case GoalKind::kNotDirty: return "not_dirty";
    case GoalKind::kRemoved: return "removed";
    case GoalKind::kPresent: return "present";
  }
  return "?";
}

std::optional<GoalKind> goal_kind_from_name(std::string_view name) {
  for (GoalKind k : {GoalKind::kAt, GoalKind::kNotDirty, GoalKind::kRemoved, GoalKind::kPresent}) {
    if (goal_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

bool GoalPredicate::holds(const WorldState& world) const {
  const WorldObject* o = world.find(object);
  switch (kind) {
    case GoalKind::kAt: return o && !o->held && o->location == target;
    case GoalKind::kNotDirty: return o && !o->dirty;
    case GoalKind::kRemoved: return o == nullptr;
    case GoalKind::kPresent: return o != nullptr;
  }
  return false;
}

bool goal_satisfied(const std::vector<GoalPredicate>& goal, const WorldState& world) {
  return std::all_of(goal.begin(), goal.end(), [&](const GoalPredicate& g) { return g.holds(world); });
}

}  // namespace llapa
