#include "llapa/planeval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "llapa/error.hpp"

namespace llapa::planeval {

namespace {

constexpr std::array<std::string_view, kNumPredicates> kPredicateNames = {
    "find", "open", "close", "pick", "place", "clean", "discard", "toggle_on", "toggle_off",
};

std::string canonical(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool same_action(const Action& a, const Action& b) {
  return a.predicate == b.predicate && canonical(a.object) == canonical(b.object);
}

bool co_located(const WorldState& w, const WorldObject& o) {
  if (o.held) return true;
  if (w.agent.location == o.id) return true;
  return o.location != kFloor && w.agent.location == o.location;
}

// Container holding `o` when it is openable, else nullptr.
const WorldObject* openable_holder(const WorldState& w, const WorldObject& o) {
  if (o.held || o.location == kFloor) return nullptr;
  const WorldObject* holder = w.find(o.location);
  return holder && is_openable(holder->cls) ? holder : nullptr;
}

}  // namespace

std::string_view predicate_name(Predicate p) { return kPredicateNames[static_cast<std::size_t>(p)]; }

std::optional<Predicate> predicate_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPredicateNames.size(); ++i) {
    if (kPredicateNames[i] == name) return static_cast<Predicate>(i);
  }
  return std::nullopt;
}

const std::array<Predicate, kNumPredicates>& all_predicates() {
  static const std::array<Predicate, kNumPredicates> preds = [] {
    std::array<Predicate, kNumPredicates> out{};
    for (std::size_t i = 0; i < kNumPredicates; ++i) out[i] = static_cast<Predicate>(i);
    return out;
  }();
  return preds;
}

std::string Action::str() const { return std::string(predicate_name(predicate)) + "(" + object + ")"; }

ActionSequence parse_plan(std::string_view text) {
  ActionSequence plan;
  std::size_t line = 1, col = 1, i = 0;
  auto advance = [&] {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++i;
  };
  auto skip_blank = [&](bool newlines) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r' || (newlines && text[i] == '\n')))
      advance();
  };
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; };

  bool expect_step = true;
  while (true) {
    skip_blank(true);
    if (i >= text.size()) break;
    if (text[i] == ';') {
      if (expect_step) throw ParseError("empty step", line, col);
      advance();
      expect_step = true;
      continue;
    }
    if (!expect_step) throw ParseError("expected separator before next step", line, col);
    const std::size_t step_line = line, step_col = col;
    std::size_t start = i;
    while (i < text.size() && is_word(text[i])) advance();
    if (start == i) throw ParseError("expected predicate", line, col);
    const std::string word = canonical(text.substr(start, i - start));
    auto pred = predicate_from_name(word);
    if (!pred) {
      throw VocabularyError("unknown predicate \"" + word + "\" at line " + std::to_string(step_line) + ", column " +
                                std::to_string(step_col),
                            word);
    }
    skip_blank(false);
    if (i >= text.size() || text[i] != '(') throw ParseError("expected '(' after " + word, line, col);
    advance();
    skip_blank(false);
    start = i;
    while (i < text.size() && is_word(text[i])) advance();
    if (start == i) throw ParseError("expected object inside parentheses", line, col);
    std::string object = canonical(text.substr(start, i - start));
    skip_blank(false);
    if (i >= text.size() || text[i] != ')') throw ParseError("expected ')' to close step", line, col);
    advance();
    plan.push_back({*pred, std::move(object)});
    expect_step = false;
    skip_blank(false);
    if (i < text.size() && text[i] == '\n') expect_step = true;
  }
  return plan;
}

std::string format_plan(const ActionSequence& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (i) out += '\n';
    out += std::string(predicate_name(plan[i].predicate)) + "(" + canonical(plan[i].object) + ")";
  }
  return out;
}

std::optional<std::string> apply(const Action& action, WorldState& w) {
  const WorldObject* target = w.resolve(canonical(action.object));
  if (!target) return "object absent";
  WorldObject& o = *w.find(target->id);

  switch (action.predicate) {
    case Predicate::kFind:
      if (o.held) return std::nullopt;
      w.agent.location = is_fixture(o.cls) ? o.id : o.location;
      return std::nullopt;

    case Predicate::kOpen:
    case Predicate::kClose: {
      if (!is_openable(o.cls)) return "not openable";
      if (!co_located(w, o)) return "not co-located";
      const bool want_open = action.predicate == Predicate::kOpen;
      if (o.open == want_open) return want_open ? "already open" : "already closed";
      o.open = want_open;
      return std::nullopt;
    }

    case Predicate::kPick: {
      if (!is_portable(o.cls)) return "not portable";
      if (o.held) return "already held";
      if (!co_located(w, o)) return "not co-located";
      if (const WorldObject* holder = openable_holder(w, o); holder && !holder->open) return "container closed";
      if (w.agent.holding) return "hands full";
      o.held = true;
      o.location = std::string(kHand);
      w.agent.holding = o.id;
      return std::nullopt;
    }

    case Predicate::kPlace: {
      if (!o.held) return "not held";
      const WorldObject* dest = w.find(w.agent.location);
      if (!dest || !is_fixture(dest->cls)) return "not at a receptacle";
      if (is_openable(dest->cls) && !dest->open) return "container closed";
      o.held = false;
      o.location = dest->id;
      w.agent.holding.reset();
      return std::nullopt;
    }

    case Predicate::kClean: {
      if (!is_cleanable(o.cls)) return "not cleanable";
      if (!o.dirty) return "not dirty";
      if (!co_located(w, o)) return "not co-located";
      const WorldObject* held = w.agent.holding ? w.find(*w.agent.holding) : nullptr;
      if (!held || held->cls != ObjectClass::kRag) return "rag not held";
      o.dirty = false;
      return std::nullopt;
    }

    case Predicate::kDiscard: {
      if (!o.held) return "not held";
      const WorldObject* bin = w.find(w.agent.location);
      if (!bin || bin->cls != ObjectClass::kAshcan) return "not at ashcan";
      const std::string id = o.id;
      w.agent.holding.reset();
      std::erase_if(w.objects, [&](const WorldObject& x) { return x.id == id; });
      return std::nullopt;
    }

    case Predicate::kToggleOn:
    case Predicate::kToggleOff: {
      if (!is_powerable(o.cls)) return "not powerable";
      if (!co_located(w, o)) return "not co-located";
      const bool want_on = action.predicate == Predicate::kToggleOn;
      if (o.powered == want_on) return want_on ? "already on" : "already off";
      o.powered = want_on;
      return std::nullopt;
    }
  }
  return "unknown predicate";
}

ExecResult execute(const ActionSequence& plan, const WorldState& world) {
  ExecResult result;
  result.plan_length = plan.size();
  result.final_world = world;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (auto reason = apply(plan[i], result.final_world)) {
      result.failure = ExecFailure{i, *reason};
      break;
    }
    result.executed = i + 1;
  }
  return result;
}

double executability(const std::vector<ExecResult>& results) {
  if (results.empty()) throw ContractError("executability of an empty batch");
  const auto full = std::count_if(results.begin(), results.end(), [](const ExecResult& r) { return r.complete(); });
  return 100.0 * static_cast<double>(full) / static_cast<double>(results.size());
}

double lcs_score(const ActionSequence& generated, const ActionSequence& reference) {
  const std::size_t n = generated.size(), m = reference.size();
  if (n == 0 && m == 0) return 1.0;
  if (n == 0 || m == 0) return 0.0;
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = same_action(generated[i - 1], reference[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

bool correctness(const ExecResult& result, const std::vector<GoalPredicate>& goal) {
  return result.complete() && goal_satisfied(goal, result.final_world);
}

SolvedPlan solve(const WorldState& world, const std::vector<GoalPredicate>& goal) {
  SolvedPlan out;
  WorldState w = world;
  std::size_t current = 0;
  auto step = [&](Predicate p, const std::string& object) {
    Action a{p, object};
    if (auto reason = apply(a, w)) {
      throw GenerationError("goal solver step " + a.str() + " failed: " + *reason);
    }
    out.plan.push_back(std::move(a));
    out.goal_index.push_back(current);
  };
  auto open_holder_if_closed = [&](const std::string& id) {
    const WorldObject* o = w.find(id);
    if (const WorldObject* holder = o ? openable_holder(w, *o) : nullptr; holder && !holder->open) {
      step(Predicate::kOpen, holder->id);
    }
  };
  auto require = [&](const std::string& id) -> const WorldObject& {
    const WorldObject* o = w.find(id);
    if (!o) throw GenerationError("goal refers to absent object " + id);
    return *o;
  };

  for (current = 0; current < goal.size(); ++current) {
    const GoalPredicate& g = goal[current];
    if (g.holds(w)) continue;
    switch (g.kind) {
      case GoalKind::kAt: {
        require(g.object);
        const WorldObject& dest = require(g.target);
        if (w.agent.holding && *w.agent.holding != g.object) {
          throw GenerationError("goal solver cannot free the agent's hands");
        }
        step(Predicate::kFind, g.object);
        open_holder_if_closed(g.object);
        step(Predicate::kPick, g.object);
        step(Predicate::kFind, dest.id);
        if (is_openable(w.find(g.target)->cls) && !w.find(g.target)->open) step(Predicate::kOpen, g.target);
        step(Predicate::kPlace, g.object);
        break;
      }
      case GoalKind::kNotDirty: {
        require(g.object);
        auto rag_it = std::find_if(w.objects.begin(), w.objects.end(),
                                   [](const WorldObject& o) { return o.cls == ObjectClass::kRag; });
        if (rag_it == w.objects.end()) throw GenerationError("no rag available to clean " + g.object);
        const std::string rag = rag_it->id;
        const std::string origin = rag_it->location;
        step(Predicate::kFind, rag);
        open_holder_if_closed(rag);
        step(Predicate::kPick, rag);
        step(Predicate::kFind, g.object);
        step(Predicate::kClean, g.object);
        step(Predicate::kFind, origin);
        step(Predicate::kPlace, rag);
        break;
      }
      case GoalKind::kRemoved: {
        require(g.object);
        auto bin = std::find_if(w.objects.begin(), w.objects.end(),
                                [](const WorldObject& o) { return o.cls == ObjectClass::kAshcan; });
        if (bin == w.objects.end()) throw GenerationError("no ashcan to discard " + g.object);
        const std::string bin_id = bin->id;
        step(Predicate::kFind, g.object);
        open_holder_if_closed(g.object);
        step(Predicate::kPick, g.object);
        step(Predicate::kFind, bin_id);
        step(Predicate::kDiscard, g.object);
        break;
      }
      case GoalKind::kPresent:
        throw GenerationError("object " + g.object + " is already gone");
    }
  }
  if (!goal_satisfied(goal, w)) throw GenerationError("goal solver finished without satisfying the goal");
  return out;
}

ScoredPlan score_plan(std::string split, const ActionSequence& generated, const ActionSequence& reference,
                      const WorldState& world, const std::vector<GoalPredicate>& goal) {
  ScoredPlan s;
  s.split = std::move(split);
  s.exec = execute(generated, world);
  s.lcs = lcs_score(generated, reference);
  s.correct = correctness(s.exec, goal);
  return s;
}

MetricReport aggregate(const std::vector<ScoredPlan>& scored) {
  struct Acc {
    std::size_t n = 0, full = 0, correct = 0;
    double lcs = 0.0, action_exec = 0.0;
  };
  std::map<std::string, Acc> acc;
  auto add = [&](const std::string& split, const ScoredPlan& s) {
    Acc& a = acc[split];
    ++a.n;
    a.full += s.exec.complete() ? 1 : 0;
    a.correct += s.correct ? 1 : 0;
    a.lcs += s.lcs;
    a.action_exec += s.exec.plan_length == 0 ? 1.0
                                             : static_cast<double>(s.exec.executed) /
                                                   static_cast<double>(s.exec.plan_length);
  };
  for (const auto& s : scored) {
    add(s.split, s);
    add("total", s);
  }
  MetricReport report;
  for (const auto& [split, a] : acc) {
    const double n = static_cast<double>(a.n);
    report.splits[split] = SplitMetrics{100.0 * static_cast<double>(a.full) / n, a.lcs / n,
                                        100.0 * static_cast<double>(a.correct) / n, a.action_exec / n, a.n};
  }
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [split, m] : splits) {
    doc[split] = {{"exec", m.exec}, {"lcs", m.lcs}, {"corr", m.corr}, {"action_exec", m.action_exec}, {"n", m.n}};
  }
  return doc.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "split,exec,lcs,corr,n\n";
  char buf[128];
  for (const char* split : {"ctrf", "norm", "total"}) {
    auto it = splits.find(split);
    if (it == splits.end()) continue;
    std::snprintf(buf, sizeof buf, "%s,%.1f,%.2f,%.1f,%zu\n", split, it->second.exec, it->second.lcs,
                  it->second.corr, it->second.n);
    out << buf;
  }
  return out.str();
}

}  // namespace llapa::planeval
