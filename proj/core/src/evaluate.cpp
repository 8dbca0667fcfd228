#include "llapa/evaluate.hpp"

#include "llapa/error.hpp"

namespace llapa {

Predictor reference_predictor() {
  return [](const worldgen::Episode& e) { return e.task.reference_plan; };
}

Predictor empty_predictor() {
  return [](const worldgen::Episode&) { return planeval::ActionSequence{}; };
}

Predictor model_predictor(const Model& model) {
  return [&model](const worldgen::Episode& e) { return predict_plan(model, e); };
}

planeval::MetricReport evaluate_batch(const std::vector<worldgen::Episode>& episodes, const Predictor& predict,
                                      const std::string& split) {
  if (split != "all" && split != "ctrf" && split != "norm") {
    throw ConfigError("unknown split \"" + split + "\" (expected all, ctrf or norm)");
  }
  std::vector<planeval::ScoredPlan> scored;
  for (const auto& e : episodes) {
    const std::string tag = e.task.split();
    if (split != "all" && tag != split) continue;
    scored.push_back(
        planeval::score_plan(tag, predict(e), e.task.reference_plan, e.world, e.task.goal_condition));
  }
  return planeval::aggregate(scored);
}

}  // namespace llapa
