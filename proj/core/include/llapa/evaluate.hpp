#pragma once

#include <functional>
#include <string>
#include <vector>

#include "llapa/model.hpp"
#include "llapa/planeval.hpp"
#include "llapa/worldgen.hpp"

namespace llapa {

using Predictor = std::function<planeval::ActionSequence(const worldgen::Episode&)>;

Predictor reference_predictor();
Predictor empty_predictor();
Predictor model_predictor(const Model& model);

/// Scores every episode whose split matches `split` ("all" keeps both) and
/// aggregates per split and in total. Splits without episodes are absent.
planeval::MetricReport evaluate_batch(const std::vector<worldgen::Episode>& episodes, const Predictor& predict,
                                      const std::string& split = "all");

}  // namespace llapa
