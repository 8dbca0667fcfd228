#include "llapa/worldgen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "llapa/error.hpp"
#include "llapa/rng.hpp"

namespace llapa::worldgen {

namespace {

using planeval::ActionSequence;

constexpr std::size_t kSlotsPerSide = 4;

std::string preposition(ObjectClass cls) { return is_surface(cls) ? "on" : "in"; }

std::string name(ObjectClass cls) { return std::string(class_name(cls)); }

void fill_rect(Image& img, std::size_t top, std::size_t left, std::size_t bottom, std::size_t right, Rgb color) {
  for (std::size_t r = top; r < bottom; ++r) {
    for (std::size_t c = left; c < right; ++c) {
      std::uint8_t* px = img.pixel(r, c);
      px[0] = color.r;
      px[1] = color.g;
      px[2] = color.b;
    }
  }
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

void GenConfig::validate() const {
  if (images < 1 || images > 4) throw ConfigError("image count m must lie in [1, 4], got " + std::to_string(images));
  if (patch_grid == 0 || height % patch_grid != 0 || width % patch_grid != 0) {
    throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by patch grid " + std::to_string(patch_grid));
  }
  if (height % kSlotsPerSide != 0 || width % kSlotsPerSide != 0) {
    throw ConfigError("image dimensions must be multiples of 4 for the slot layout");
  }
  for (double p : {ctrf_prob, hazard_active_prob, distractor_hazard_prob, closed_prob, extra_item_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probabilities must lie in [0, 1]");
  }
  for (const auto& n : disabled_classes) {
    if (!class_from_name(n)) throw ConfigError("unknown class in disabled_classes: " + n);
  }
  if (template_version != kTemplateVersion) {
    throw ConfigError("unsupported template version " + std::to_string(template_version));
  }
}

bool GenConfig::enabled(ObjectClass cls) const {
  return std::find(disabled_classes.begin(), disabled_classes.end(), class_name(cls)) == disabled_classes.end();
}

void to_json(nlohmann::json& j, const GenConfig& c) {
  j = {{"height", c.height},
       {"width", c.width},
       {"images", c.images},
       {"patch_grid", c.patch_grid},
       {"ctrf_prob", c.ctrf_prob},
       {"hazard_active_prob", c.hazard_active_prob},
       {"distractor_hazard_prob", c.distractor_hazard_prob},
       {"closed_prob", c.closed_prob},
       {"extra_item_prob", c.extra_item_prob},
       {"max_distractor_facts", c.max_distractor_facts},
       {"disabled_classes", c.disabled_classes},
       {"template_version", c.template_version}};
}

void from_json(const nlohmann::json& j, GenConfig& c) {
  GenConfig d;
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.images = j.value("images", d.images);
  c.patch_grid = j.value("patch_grid", d.patch_grid);
  c.ctrf_prob = j.value("ctrf_prob", d.ctrf_prob);
  c.hazard_active_prob = j.value("hazard_active_prob", d.hazard_active_prob);
  c.distractor_hazard_prob = j.value("distractor_hazard_prob", d.distractor_hazard_prob);
  c.closed_prob = j.value("closed_prob", d.closed_prob);
  c.extra_item_prob = j.value("extra_item_prob", d.extra_item_prob);
  c.max_distractor_facts = j.value("max_distractor_facts", d.max_distractor_facts);
  c.disabled_classes = j.value("disabled_classes", d.disabled_classes);
  c.template_version = j.value("template_version", d.template_version);
}

Rgb palette(ObjectClass cls) {
  switch (cls) {
    case ObjectClass::kMicrowave: return {200, 40, 40};
    case ObjectClass::kCabinet: return {150, 100, 200};
    case ObjectClass::kSink: return {40, 160, 220};
    case ObjectClass::kAshcan: return {60, 100, 60};
    case ObjectClass::kTable: return {210, 170, 90};
    case ObjectClass::kCounter: return {90, 90, 200};
    case ObjectClass::kJar: return {240, 200, 40};
    case ObjectClass::kCookie: return {230, 120, 30};
    case ObjectClass::kRag: return {40, 220, 120};
    case ObjectClass::kPlate: return {250, 180, 200};
    case ObjectClass::kCup: return {30, 200, 200};
    case ObjectClass::kApple: return {180, 240, 60};
  }
  return kBackground;
}

std::string TaskSpec::full_text() const {
  std::string out = goal_text + ".";
  for (const auto& c : clause_texts) out += " " + c + ".";
  return out;
}

bool TaskSpec::has_counterfactual() const {
  return std::find(clause_labels.begin(), clause_labels.end(), 1) != clause_labels.end();
}

ActionSequence TaskSpec::normal_steps() const {
  ActionSequence out;
  for (std::size_t i = 0; i < reference_plan.size(); ++i) {
    if (!ctrf_step_flags[i]) out.push_back(reference_plan[i]);
  }
  return out;
}

ActionSequence TaskSpec::ctrf_steps() const {
  ActionSequence out;
  for (std::size_t i = 0; i < reference_plan.size(); ++i) {
    if (ctrf_step_flags[i]) out.push_back(reference_plan[i]);
  }
  return out;
}

Episode generate_episode(std::uint64_t seed, const GenConfig& config) {
  config.validate();
  Rng rng = Rng(seed).fork(0xE915);
  auto enabled = [&](ObjectClass c) { return config.enabled(c); };
  auto enabled_of = [&](std::initializer_list<ObjectClass> classes) {
    std::vector<ObjectClass> out;
    for (ObjectClass c : classes) {
      if (enabled(c)) out.push_back(c);
    }
    return out;
  };

  const auto receptacles = enabled_of({ObjectClass::kMicrowave, ObjectClass::kCabinet, ObjectClass::kSink,
                                       ObjectClass::kTable, ObjectClass::kCounter});
  const auto surfaces = enabled_of({ObjectClass::kTable, ObjectClass::kCounter});
  const auto destinations = enabled_of({ObjectClass::kTable, ObjectClass::kCounter, ObjectClass::kSink});
  const auto goal_items =
      enabled_of({ObjectClass::kJar, ObjectClass::kCookie, ObjectClass::kPlate, ObjectClass::kCup, ObjectClass::kApple});
  if (receptacles.empty() || surfaces.empty() || destinations.size() < 2 || goal_items.empty() ||
      !enabled(ObjectClass::kRag)) {
    throw GenerationError("configuration leaves too few object classes to build a task");
  }

  Episode ep;
  ep.seed = seed;
  WorldState& w = ep.world;
  w.layout_seed = mix64(seed ^ 0x1A7007ULL);

  for (ObjectClass c : {ObjectClass::kMicrowave, ObjectClass::kCabinet, ObjectClass::kSink, ObjectClass::kAshcan,
                        ObjectClass::kTable, ObjectClass::kCounter}) {
    if (!enabled(c)) continue;
    WorldObject o;
    o.id = name(c);
    o.cls = c;
    if (is_openable(c)) o.open = !rng.bernoulli(config.closed_prob);
    if (is_cleanable(c)) o.dirty = rng.bernoulli(config.distractor_hazard_prob);
    w.objects.push_back(std::move(o));
  }

  const ObjectClass goal_cls = rng.pick(goal_items);
  auto add_item = [&](ObjectClass c, ObjectClass location) {
    WorldObject o;
    o.id = name(c);
    o.cls = c;
    o.location = name(location);
    if (is_cleanable(c)) o.dirty = rng.bernoulli(config.distractor_hazard_prob);
    if (is_burnable(c)) o.burnt = rng.bernoulli(config.distractor_hazard_prob);
    w.objects.push_back(std::move(o));
  };
  add_item(ObjectClass::kRag, rng.pick(surfaces));
  for (ObjectClass c : goal_items) {
    if (c == goal_cls || rng.bernoulli(config.extra_item_prob)) add_item(c, rng.pick(receptacles));
  }

  WorldObject& goal_obj = *w.find(name(goal_cls));
  goal_obj.dirty = false;  // reset below only via counterfactual templates
  if (is_burnable(goal_cls)) goal_obj.burnt = false;
  const ObjectClass source_cls = class_from_name(goal_obj.location).value();
  std::vector<ObjectClass> dest_choices;
  for (ObjectClass c : destinations) {
    if (c != source_cls) dest_choices.push_back(c);
  }
  const ObjectClass dest_cls = rng.pick(dest_choices);

  TaskSpec& task = ep.task;
  task.goal_text = "Put the " + name(goal_cls) + " " + preposition(dest_cls) + " the " + name(dest_cls);
  task.clause_texts.push_back("The " + name(goal_cls) + " is " + preposition(source_cls) + " the " +
                              name(source_cls));
  task.clause_labels.push_back(0);

  std::vector<GoalPredicate> ctrf_goal;
  std::set<std::string> mentioned = {name(goal_cls), name(source_cls), name(dest_cls)};
  if (rng.bernoulli(config.ctrf_prob)) {
    std::vector<ObjectClass> dirty_candidates, burnt_candidates;
    for (const auto& o : w.objects) {
      if (is_cleanable(o.cls)) dirty_candidates.push_back(o.cls);
      if (is_burnable(o.cls) && o.cls != goal_cls) burnt_candidates.push_back(o.cls);
    }
    const auto containers = [&] {
      std::vector<ObjectClass> out;
      for (ObjectClass c : enabled_of({ObjectClass::kMicrowave, ObjectClass::kCabinet, ObjectClass::kSink})) {
        if (c != source_cls) out.push_back(c);
      }
      return out;
    }();
    const bool can_burn = !burnt_candidates.empty() && !containers.empty() && enabled(ObjectClass::kAshcan);
    const bool can_dirty = !dirty_candidates.empty();
    if (!can_burn && !can_dirty) throw GenerationError("no counterfactual template applies to this world");
    const bool use_burnt = can_burn && (!can_dirty || rng.bernoulli(0.5));
    const bool active = rng.bernoulli(config.hazard_active_prob);
    if (use_burnt) {
      const ObjectClass burnt_cls = rng.pick(burnt_candidates);
      WorldObject& b = *w.find(name(burnt_cls));
      const auto holder = class_from_name(b.location).value();
      if (std::find(containers.begin(), containers.end(), holder) == containers.end()) {
        b.location = name(rng.pick(containers));
      }
      b.burnt = active;
      task.clause_texts.push_back("If the " + b.location + " contains a burnt " + b.id + ", discard it first");
      ctrf_goal.push_back({active ? GoalKind::kRemoved : GoalKind::kPresent, b.id, ""});
      mentioned.insert(b.id);
      mentioned.insert(b.location);
    } else {
      const ObjectClass dirty_cls = rng.pick(dirty_candidates);
      WorldObject& d = *w.find(name(dirty_cls));
      d.dirty = active;
      task.clause_texts.push_back("If the " + d.id + " is dirty, clean it with the rag first");
      if (active) ctrf_goal.push_back({GoalKind::kNotDirty, d.id, ""});
      mentioned.insert(d.id);
      mentioned.insert("rag");
    }
    task.clause_labels.push_back(1);
  }

  // Declarative distractor facts about items resting on surfaces.
  std::vector<const WorldObject*> facts;
  for (const auto& o : w.objects) {
    if (!is_portable(o.cls) || mentioned.count(o.id)) continue;
    const WorldObject* loc = w.find(o.location);
    if (loc && is_surface(loc->cls)) facts.push_back(&o);
  }
  rng.shuffle(facts);
  const std::size_t n_facts = std::min(facts.size(), rng.uniform_int(config.max_distractor_facts + 1));
  for (std::size_t i = 0; i < n_facts; ++i) {
    task.clause_texts.push_back("The " + facts[i]->id + " is on the " + facts[i]->location);
    task.clause_labels.push_back(0);
  }

  for (auto& g : ctrf_goal) {
    task.goal_condition.push_back(g);
    task.goal_ctrf_flags.push_back(true);
  }
  task.goal_condition.push_back({GoalKind::kAt, name(goal_cls), name(dest_cls)});
  task.goal_ctrf_flags.push_back(false);

  w.validate();
  const planeval::SolvedPlan solved = planeval::solve(w, task.goal_condition);
  task.reference_plan = solved.plan;
  for (std::size_t idx : solved.goal_index) task.ctrf_step_flags.push_back(task.goal_ctrf_flags[idx]);

  ep.scene = rasterize(w, config);
  return ep;
}

Scene rasterize(const WorldState& world, const GenConfig& config) {
  if (config.images < 1) throw ConfigError("at least one image is required");
  if (config.height % kSlotsPerSide != 0 || config.width % kSlotsPerSide != 0) {
    throw ConfigError("image dimensions must be multiples of 4 for the slot layout");
  }
  world.validate();
  Scene scene;
  const std::size_t sh = config.height / kSlotsPerSide, sw = config.width / kSlotsPerSide;
  for (std::size_t i = 0; i < config.images; ++i) {
    Image img{config.height, config.width, std::vector<std::uint8_t>(config.height * config.width * 3)};
    fill_rect(img, 0, 0, config.height, config.width, kBackground);
    scene.images.push_back(std::move(img));
    scene.boxes.emplace_back();
  }
  std::vector<std::vector<std::size_t>> free_slots(config.images);
  for (auto& slots : free_slots) {
    for (std::size_t s = 0; s < kSlotsPerSide * kSlotsPerSide; ++s) slots.push_back(s);
  }

  Rng rng(world.layout_seed);
  for (const auto& o : world.objects) {
    if (o.held) continue;
    std::size_t img = rng.uniform_int(config.images);
    std::size_t tries = 0;
    while (free_slots[img].empty() && tries++ < config.images) img = (img + 1) % config.images;
    if (free_slots[img].empty()) throw GenerationError("layout overflow: too many objects for the image size");
    auto& slots = free_slots[img];
    const std::size_t pick = rng.uniform_int(slots.size());
    const std::size_t slot = slots[pick];
    slots.erase(slots.begin() + static_cast<std::ptrdiff_t>(pick));

    Box box{o.id, o.cls, (slot / kSlotsPerSide) * sh, (slot % kSlotsPerSide) * sw, 0, 0};
    box.bottom = box.top + sh;
    box.right = box.left + sw;
    Image& image = scene.images[img];
    fill_rect(image, box.top, box.left, box.bottom, box.right, palette(o.cls));
    const std::size_t band = std::max<std::size_t>(1, sh / 4);
    if (is_openable(o.cls) && !o.open) fill_rect(image, box.top, box.left, box.top + band, box.right, kLidColor);
    if (o.dirty) fill_rect(image, box.bottom - band, box.left, box.bottom, box.right, kDirtColor);
    if (o.burnt) fill_rect(image, box.bottom - band, box.left, box.bottom, box.right, kBurntColor);
    scene.boxes[img].push_back(std::move(box));
  }
  return scene;
}

std::vector<ObjectClass> mentioned_classes(std::string_view text) {
  const auto words = words_of(text);
  std::vector<ObjectClass> out;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min<std::size_t>(3, words.size() - i); len >= 1 && !matched; --len) {
      std::string phrase = words[i];
      for (std::size_t k = 1; k < len; ++k) phrase += "_" + words[i + k];
      auto cls = class_from_name(phrase);
      if (!cls && phrase.size() > 1 && phrase.back() == 's') cls = class_from_name(phrase.substr(0, phrase.size() - 1));
      if (cls) {
        if (std::find(out.begin(), out.end(), *cls) == out.end()) out.push_back(*cls);
        matched = len;
      }
    }
    i += matched ? matched : 1;
  }
  return out;
}

std::vector<maskgrid::PixelMask> oracle_segment(const Scene& scene, std::string_view clause_text) {
  if (clause_text.empty()) throw ContractError("oracle_segment needs a non-empty clause");
  const auto classes = mentioned_classes(clause_text);
  std::vector<maskgrid::PixelMask> masks;
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    maskgrid::PixelMask mask(scene.images[i].height, scene.images[i].width);
    for (const Box& box : scene.boxes[i]) {
      if (std::find(classes.begin(), classes.end(), box.cls) == classes.end()) continue;
      for (std::size_t r = box.top; r < box.bottom; ++r) {
        for (std::size_t c = box.left; c < box.right; ++c) mask.at(r, c) = 1;
      }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

nlohmann::json world_to_json(const WorldState& world) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : world.objects) {
    objects.push_back({{"id", o.id},
                       {"class", class_name(o.cls)},
                       {"location", o.location},
                       {"open", o.open},
                       {"powered", o.powered},
                       {"dirty", o.dirty},
                       {"burnt", o.burnt},
                       {"held", o.held}});
  }
  nlohmann::json agent = {{"location", world.agent.location}};
  agent["holding"] = world.agent.holding ? nlohmann::json(*world.agent.holding) : nlohmann::json(nullptr);
  return {{"objects", objects}, {"agent", agent}, {"layout_seed", world.layout_seed}};
}

WorldState world_from_json(const nlohmann::json& doc) {
  WorldState w;
  for (const auto& o : doc.at("objects")) {
    WorldObject obj;
    obj.id = o.at("id").get<std::string>();
    auto cls = class_from_name(o.at("class").get<std::string>());
    if (!cls) throw DataError("unknown object class in dataset: " + o.at("class").get<std::string>());
    obj.cls = *cls;
    obj.location = o.at("location").get<std::string>();
    obj.open = o.at("open").get<bool>();
    obj.powered = o.at("powered").get<bool>();
    obj.dirty = o.at("dirty").get<bool>();
    obj.burnt = o.at("burnt").get<bool>();
    obj.held = o.at("held").get<bool>();
    w.objects.push_back(std::move(obj));
  }
  w.agent.location = doc.at("agent").at("location").get<std::string>();
  if (!doc.at("agent").at("holding").is_null()) w.agent.holding = doc.at("agent").at("holding").get<std::string>();
  w.layout_seed = doc.at("layout_seed").get<std::uint64_t>();
  return w;
}

nlohmann::json episode_to_json(const Episode& ep) {
  nlohmann::json goal = nlohmann::json::array();
  for (const auto& g : ep.task.goal_condition) {
    goal.push_back({{"kind", goal_kind_name(g.kind)}, {"object", g.object}, {"target", g.target}});
  }
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& a : ep.task.reference_plan) plan.push_back(a.str());
  nlohmann::json task = {{"goal_text", ep.task.goal_text},
                         {"clause_texts", ep.task.clause_texts},
                         {"goal_condition", goal},
                         {"goal_ctrf_flags", ep.task.goal_ctrf_flags},
                         {"ctrf_step_flags", ep.task.ctrf_step_flags}};
  return {{"seed", ep.seed},
          {"world", world_to_json(ep.world)},
          {"task", task},
          {"plan", plan},
          {"labels", ep.task.clause_labels}};
}

Episode episode_from_json(const nlohmann::json& doc, const GenConfig& config) {
  try {
    Episode ep;
    ep.seed = doc.at("seed").get<std::uint64_t>();
    ep.world = world_from_json(doc.at("world"));
    const auto& t = doc.at("task");
    ep.task.goal_text = t.at("goal_text").get<std::string>();
    ep.task.clause_texts = t.at("clause_texts").get<std::vector<std::string>>();
    ep.task.clause_labels = doc.at("labels").get<std::vector<int>>();
    for (const auto& g : t.at("goal_condition")) {
      auto kind = goal_kind_from_name(g.at("kind").get<std::string>());
      if (!kind) throw DataError("unknown goal predicate kind");
      ep.task.goal_condition.push_back({*kind, g.at("object").get<std::string>(), g.at("target").get<std::string>()});
    }
    ep.task.goal_ctrf_flags = t.at("goal_ctrf_flags").get<std::vector<bool>>();
    ep.task.ctrf_step_flags = t.at("ctrf_step_flags").get<std::vector<bool>>();
    std::string plan_text;
    for (const auto& a : doc.at("plan")) plan_text += a.get<std::string>() + "\n";
    ep.task.reference_plan = planeval::parse_plan(plan_text);
    if (ep.task.clause_labels.size() != ep.task.clause_texts.size() ||
        ep.task.ctrf_step_flags.size() != ep.task.reference_plan.size() ||
        ep.task.goal_ctrf_flags.size() != ep.task.goal_condition.size()) {
      throw DataError("episode " + std::to_string(ep.seed) + " has inconsistent field lengths");
    }
    ep.scene = rasterize(ep.world, config);
    return ep;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed episode record: ") + e.what());
  }
}

void write_dataset(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto& ep : episodes) out << episode_to_json(ep).dump() << '\n';
}

std::vector<Episode> read_dataset(const std::string& path, const GenConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path);
  std::vector<Episode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(episode_from_json(doc, config));
  }
  return out;
}

}  // namespace llapa::worldgen
