#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "llapa/world.hpp"

namespace llapa::planeval {

enum class Predicate : std::uint8_t {
  kFind,
  kOpen,
  kClose,
  kPick,
  kPlace,
  kClean,
  kDiscard,
  kToggleOn,
  kToggleOff,
};

inline constexpr std::size_t kNumPredicates = 9;

std::string_view predicate_name(Predicate p);
std::optional<Predicate> predicate_from_name(std::string_view name);
const std::array<Predicate, kNumPredicates>& all_predicates();

struct Action {
  Predicate predicate = Predicate::kFind;
  std::string object;

  std::string str() const;
  friend bool operator==(const Action&, const Action&) = default;
};

using ActionSequence = std::vector<Action>;

/// plan := step (sep step)* ; step := predicate '(' object ')' ; sep := newline | ';'
/// Blank lines and surrounding whitespace are ignored. Throws ParseError for
/// malformed steps and VocabularyError for unknown predicates.
ActionSequence parse_plan(std::string_view text);

/// Canonical form: one step per line, lowercase, no trailing newline.
std::string format_plan(const ActionSequence& plan);

struct ExecFailure {
  std::size_t step = 0;  // zero-based index of the failing action
  std::string reason;
};

struct ExecResult {
  std::size_t executed = 0;
  std::size_t plan_length = 0;
  std::optional<ExecFailure> failure;
  WorldState final_world;

  bool complete() const { return !failure.has_value(); }
};

/// Applies actions in order against the frozen precondition/effect table and
/// stops at the first violated precondition. The input world is not modified.
ExecResult execute(const ActionSequence& plan, const WorldState& world);

// Precondition check and effect of a single action, in place. Returns the
// failure reason when the precondition does not hold.
std::optional<std::string> apply(const Action& action, WorldState& world);

/// 100 * fully-executed / total. Throws ContractError on an empty batch.
double executability(const std::vector<ExecResult>& results);

/// LCS length normalized by max(|generated|, |reference|); 1 when both are empty.
double lcs_score(const ActionSequence& generated, const ActionSequence& reference);

/// Fully executed and every goal predicate holds in the final world.
bool correctness(const ExecResult& result, const std::vector<GoalPredicate>& goal);

struct SolvedPlan {
  ActionSequence plan;
  std::vector<std::size_t> goal_index;  // which goal predicate each step serves
};

/// Built-in goal solver: achieves the predicates in order, opening containers
/// as needed and returning the rag to where it was found after cleaning.
/// Throws GenerationError when a predicate cannot be achieved.
SolvedPlan solve(const WorldState& world, const std::vector<GoalPredicate>& goal);

struct SplitMetrics {
  double exec = 0.0;         // percentage of fully executable plans
  double lcs = 0.0;          // mean LCS score
  double corr = 0.0;         // percentage of correct plans
  double action_exec = 0.0;  // mean executed fraction per plan (diagnostic)
  std::size_t n = 0;
};

struct MetricReport {
  std::map<std::string, SplitMetrics> splits;  // "ctrf", "norm", "total"; absent when empty

  std::string to_json() const;
  std::string to_csv() const;
};

struct ScoredPlan {
  std::string split;
  ExecResult exec;
  double lcs = 0.0;
  bool correct = false;
};

ScoredPlan score_plan(std::string split, const ActionSequence& generated, const ActionSequence& reference,
                      const WorldState& world, const std::vector<GoalPredicate>& goal);

/// Per-split and total aggregation. Splits with no plans are left out.
MetricReport aggregate(const std::vector<ScoredPlan>& scored);

}  // namespace llapa::planeval
