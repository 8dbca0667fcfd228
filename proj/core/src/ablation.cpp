#include "llapa/ablation.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "llapa/error.hpp"
#include "llapa/evaluate.hpp"

namespace llapa {

namespace {

double metric_of(const planeval::SplitMetrics& m, const std::string& metric) {
  if (metric == "exec") return m.exec;
  if (metric == "lcs") return m.lcs;
  if (metric == "corr") return m.corr;
  throw ContractError("unknown metric " + metric);
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoCar: return "no-car";
    case Variant::kNoTer: return "no-ter";
    case Variant::kOnlySft: return "only-sft";
  }
  return "unknown";
}

std::optional<Variant> variant_from_name(const std::string& name) {
  for (Variant v : {Variant::kFull, Variant::kNoCar, Variant::kNoTer, Variant::kOnlySft}) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

ModelConfig apply_variant(ModelConfig config, Variant v) {
  config.use_ter = v == Variant::kFull || v == Variant::kNoCar;
  config.use_car = v == Variant::kFull || v == Variant::kNoTer;
  return config;
}

double AblationResult::mean(const std::string& variant, std::size_t subgrid, const std::string& split,
                            const std::string& metric) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.variant != variant || r.subgrid != subgrid) continue;
    auto it = r.report.splits.find(split);
    if (it == r.report.splits.end()) continue;
    sum += metric_of(it->second, metric);
    ++n;
  }
  if (n == 0) throw ContractError("no ablation rows for " + variant + " K=" + std::to_string(subgrid) + " " + split);
  return sum / static_cast<double>(n);
}

std::string AblationResult::to_csv() const {
  std::ostringstream out;
  out << "variant,K,tokens_per_image,seed,split,exec,lcs,corr,n,final_loss\n";
  char buf[256];
  for (const auto& r : rows) {
    for (const char* split : {"ctrf", "norm", "total"}) {
      auto it = r.report.splits.find(split);
      if (it == r.report.splits.end()) continue;
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%llu,%s,%.1f,%.2f,%.1f,%zu,%.6f\n", r.variant.c_str(), r.subgrid,
                    r.tokens_per_image, static_cast<unsigned long long>(r.seed), split, it->second.exec,
                    it->second.lcs, it->second.corr, it->second.n, r.final_loss);
      out << buf;
    }
  }
  return out.str();
}

std::string AblationResult::summary_csv() const {
  std::ostringstream out;
  out << "variant,K,tokens_per_image,split,exec,lcs,corr,seeds\n";
  std::vector<std::pair<std::string, std::size_t>> keys;
  std::map<std::pair<std::string, std::size_t>, std::size_t> seeds, tokens;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.variant, r.subgrid);
    if (!seeds.count(key)) keys.push_back(key);
    seeds[key] += 1;
    tokens[key] = r.tokens_per_image;
  }
  char buf[256];
  for (const auto& key : keys) {
    for (const char* split : {"ctrf", "norm", "total"}) {
      bool present = false;
      for (const auto& r : rows) {
        present = present || (r.variant == key.first && r.subgrid == key.second && r.report.splits.count(split));
      }
      if (!present) continue;
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%s,%.1f,%.2f,%.1f,%zu\n", key.first.c_str(), key.second,
                    tokens[key], split, mean(key.first, key.second, split, "exec"),
                    mean(key.first, key.second, split, "lcs"), mean(key.first, key.second, split, "corr"), seeds[key]);
      out << buf;
    }
  }
  return out.str();
}

AblationResult run_ablation(const AblationSpec& spec, const std::vector<worldgen::Episode>& train,
                            const std::vector<worldgen::Episode>& test, const AblationLog& log) {
  if (spec.variants.empty() || spec.seeds.empty()) throw ConfigError("ablation needs at least one variant and seed");
  const std::vector<std::size_t> subgrids = spec.subgrids.empty() ? std::vector<std::size_t>{spec.base.subgrid}
                                                                  : spec.subgrids;
  AblationResult result;
  for (std::size_t K : subgrids) {
    for (Variant v : spec.variants) {
      for (std::uint64_t seed : spec.seeds) {
        ModelConfig cfg = apply_variant(spec.base, v);
        cfg.subgrid = K;
        cfg.validate();
        const std::string label = variant_name(v) + "_K" + std::to_string(K) + "_s" + std::to_string(seed);
        AblationRow row;
        row.variant = variant_name(v);
        row.subgrid = K;
        row.tokens_per_image = K * K;
        row.seed = seed;

        std::filesystem::path ckpt;
        if (!spec.checkpoint_dir.empty()) ckpt = std::filesystem::path(spec.checkpoint_dir) / (label + ".json");
        Model model;
        if (!ckpt.empty() && std::filesystem::exists(ckpt)) {
          model = load_checkpoint(ckpt.string());
          if (log) log(label + ": reusing " + ckpt.string());
        } else {
          model = init_model(cfg, seed);
          TrainConfig s1 = spec.stage1, s2 = spec.stage2;
          s1.seed = seed;
          s2.seed = seed;
          const auto r1 = train_stage1(model, train, s1);
          row.stage1_accuracy = r1.summary.at("val_accuracy");
          const auto r2 = train_stage2(model, train, s2);
          row.final_loss = r2.summary.at("final_loss");
          if (!ckpt.empty()) save_checkpoint(model, ckpt.string());
          if (log) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s: stage-1 acc %.3f, stage-2 loss %.5f", label.c_str(),
                          row.stage1_accuracy, row.final_loss);
            log(buf);
          }
        }
        row.report = evaluate_batch(test, model_predictor(model));
        if (log) {
          const auto& t = row.report.splits.at("total");
          char buf[160];
          std::snprintf(buf, sizeof buf, "%s: total exec %.1f lcs %.2f corr %.1f", label.c_str(), t.exec, t.lcs,
                        t.corr);
          log(buf);
        }
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

}  // namespace llapa
