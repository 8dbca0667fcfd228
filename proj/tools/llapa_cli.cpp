#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "llapa/ablation.hpp"
#include "llapa/car.hpp"
#include "llapa/error.hpp"
#include "llapa/evaluate.hpp"
#include "llapa/maskgrid.hpp"
#include "llapa/training.hpp"
#include "llapa/worldgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace llapa;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kDiverged = 4 };

// Seeds of the three splits never overlap: each split owns a 2^40 range.
constexpr std::uint64_t kSplitStride = 1ULL << 40;
enum SplitIndex : std::uint64_t { kTrainSplit = 0, kValSplit = 1, kTestSplit = 2 };

std::uint64_t split_seed(std::uint64_t seed, SplitIndex split, std::size_t i) {
  return (seed % (1ULL << 20)) * 4 * kSplitStride + split * kSplitStride + i;
}

struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  worldgen::GenConfig gen;
  std::size_t epochs1 = 50;
  std::size_t epochs2 = 20;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  double clip_norm = 1.0;
  bool gold_ctrf = true;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    const json doc = json::parse(in);
    rc.seed = doc.value("seed", rc.seed);
    if (doc.contains("model")) rc.model = doc.at("model").get<ModelConfig>();
    if (doc.contains("gen")) rc.gen = doc.at("gen").get<worldgen::GenConfig>();
    if (doc.contains("train")) {
      const json& t = doc.at("train");
      rc.epochs1 = t.value("epochs1", rc.epochs1);
      rc.epochs2 = t.value("epochs2", rc.epochs2);
      rc.batch_size = t.value("batch_size", rc.batch_size);
      rc.lr = t.value("lr", rc.lr);
      rc.clip_norm = t.value("clip_norm", rc.clip_norm);
      rc.gold_ctrf = t.value("gold_ctrf", rc.gold_ctrf);
    }
  } catch (const json::exception& e) {
    throw ConfigError("invalid config " + path + ": " + e.what());
  }
  return rc;
}

// Flag values are parsed into optionals so that only flags given on the
// command line override the config file.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> P, K, C, D, heads, ter_heads, m, image_size;
  bool no_ter = false, no_car = false, per_image = false, predicted_ctrf = false;
  std::optional<std::size_t> epochs1, epochs2, batch;
  std::optional<double> lr;
};

void add_common(CLI::App* cmd, Overrides& o) {
  const char* env = std::getenv("LLAPA_CONFIG");
  if (env) o.config_path = env;
  cmd->add_option("--config", o.config_path, "JSON run configuration (default: $LLAPA_CONFIG)");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--P", o.P, "Patch grid side");
  cmd->add_option("--K", o.K, "Counterfactual sub-grid side");
  cmd->add_option("--C", o.C, "Visual channels");
  cmd->add_option("--D", o.D, "Decoder width");
  cmd->add_option("--heads", o.heads, "Decoder attention heads");
  cmd->add_option("--ter-heads", o.ter_heads, "Reranker attention heads");
  cmd->add_option("--m", o.m, "Images per episode");
  cmd->add_option("--image-size", o.image_size, "Image side in pixels");
  cmd->add_flag("--no-ter", o.no_ter, "Identity reranker");
  cmd->add_flag("--no-car", o.no_car, "Zero the counterfactual segment");
  cmd->add_flag("--per-image-attention", o.per_image, "Restrict reranker attention to each image");
}

void add_training(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--epochs1", o.epochs1, "Stage-1 epoch limit");
  cmd->add_option("--epochs2", o.epochs2, "Stage-2 epochs");
  cmd->add_option("--batch", o.batch, "Episodes per optimizer step");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_flag("--predicted-ctrf", o.predicted_ctrf, "Stage 2 uses classifier-selected clauses instead of labels");
}

RunConfig resolve(const Overrides& o) {
  RunConfig rc = load_run_config(o.config_path);
  if (o.seed) rc.seed = *o.seed;
  ModelConfig& mc = rc.model;
  if (o.P) mc.patch_grid = *o.P;
  if (o.K) mc.subgrid = *o.K;
  if (o.C) mc.channels = *o.C;
  if (o.D) mc.width = *o.D;
  if (o.heads) mc.dec_heads = *o.heads;
  if (o.ter_heads) mc.ter_heads = *o.ter_heads;
  if (o.m) mc.images = *o.m;
  if (o.image_size) mc.image_size = *o.image_size;
  if (o.no_ter) mc.use_ter = false;
  if (o.no_car) mc.use_car = false;
  if (o.per_image) mc.per_image_attention = true;
  if (o.epochs1) rc.epochs1 = *o.epochs1;
  if (o.epochs2) rc.epochs2 = *o.epochs2;
  if (o.batch) rc.batch_size = *o.batch;
  if (o.lr) rc.lr = *o.lr;
  if (o.predicted_ctrf) rc.gold_ctrf = false;
  mc.validate();
  rc.gen = mc.apply_to(rc.gen);
  rc.gen.validate();
  if (rc.batch_size == 0) throw ConfigError("--batch must be positive");
  if (!(rc.lr > 0.0)) throw ConfigError("--lr must be positive");
  return rc;
}

TrainConfig train_config(const RunConfig& rc, int stage) {
  TrainConfig t;
  t.epochs = stage == 1 ? rc.epochs1 : rc.epochs2;
  t.batch_size = rc.batch_size;
  t.adam.lr = rc.lr;
  t.seed = rc.seed;
  t.clip_norm = rc.clip_norm;
  t.gold_ctrf = rc.gold_ctrf;
  return t;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is required");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

std::string stats_line(const std::string& name, const std::vector<worldgen::Episode>& eps) {
  std::size_t ctrf = 0, clauses = 0, ctrf_clauses = 0;
  for (const auto& e : eps) {
    ctrf += e.task.has_counterfactual();
    clauses += e.task.clause_labels.size();
    for (int l : e.task.clause_labels) ctrf_clauses += l == 1;
  }
  std::ostringstream os;
  os << name << ": " << eps.size() << " episodes, " << ctrf << " ctrf / " << eps.size() - ctrf << " norm; clauses "
     << ctrf_clauses << " ctrf / " << clauses - ctrf_clauses << " normal";
  return os.str();
}

// --- gen ------------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::size_t n = 2000, n_val = 0, n_test = 400;
  std::optional<double> ctrf_prob;
  bool force = false;
};

int cmd_gen(const Overrides& o, const GenArgs& a) {
  RunConfig rc = resolve(o);
  if (a.n == 0) throw ConfigError("--n must be positive");
  if (a.ctrf_prob) rc.gen.ctrf_prob = *a.ctrf_prob;
  rc.gen.validate();
  const std::size_t n_val = a.n_val ? a.n_val : std::max<std::size_t>(1, a.n / 10);
  const std::vector<std::pair<std::string, std::size_t>> splits = {
      {"train", a.n}, {"val", n_val}, {"test", a.n_test}};
  for (const auto& [name, count] : splits) {
    const fs::path p = fs::path(a.out) / (name + ".jsonl");
    if (count && fs::exists(p) && !a.force) {
      throw ConfigError(p.string() + " exists; pass --force to overwrite");
    }
  }
  fs::create_directories(a.out);
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& [name, count] = splits[s];
    if (count == 0) continue;
    std::vector<worldgen::Episode> eps;
    eps.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      eps.push_back(worldgen::generate_episode(split_seed(rc.seed, static_cast<SplitIndex>(s), i), rc.gen));
    }
    worldgen::write_dataset((fs::path(a.out) / (name + ".jsonl")).string(), eps);
    std::cout << stats_line(name, eps) << "\n";
  }
  return kOk;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  int stage = 1;
  std::string data, init, out, report;
};

int cmd_train(const Overrides& o, const TrainArgs& a) {
  const RunConfig rc = resolve(o);
  require_file(a.data, "training data");
  if (a.out.empty()) throw ConfigError("--out checkpoint path is required");
  Model model;
  if (a.stage == 1) {
    model = init_model(rc.model, rc.seed);
  } else {
    if (a.init.empty()) throw ConfigError("stage 2 needs --init with a stage-1 checkpoint");
    require_file(a.init, "stage-1 checkpoint");
    model = load_checkpoint(a.init);
  }
  const auto corpus = worldgen::read_dataset(a.data, model.config.apply_to(rc.gen));
  TrainConfig tc = train_config(rc, a.stage);
  tc.after_epoch = [&](std::size_t epoch, double loss, const Model&) {
    std::cout << "stage " << a.stage << " epoch " << epoch + 1 << " loss " << loss << "\n";
    return false;
  };
  const TrainReport rep = a.stage == 1 ? train_stage1(model, corpus, tc) : train_stage2(model, corpus, tc);
  save_checkpoint(model, a.out);
  const std::string report = a.report.empty() ? a.out + ".report.json" : a.report;
  write_text(report, rep.to_json().dump(2) + "\n");
  return kOk;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, out, split = "all", dump_masks;
  std::size_t dump_count = 4;
  bool predict_reference = false, predict_empty = false;
};

void dump_masks(const Model& model, const std::vector<worldgen::Episode>& eps, const EvalArgs& a) {
  fs::create_directories(a.dump_masks);
  const std::size_t cell = model.config.image_size / model.config.patch_grid;
  for (std::size_t e = 0; e < std::min(a.dump_count, eps.size()); ++e) {
    const PreparedEpisode ep = prepare_episode(eps[e], model);
    const auto global = maskgrid::build_global_mask(ep.per_clause);
    const auto selected = car::select_ctrf(clause_probabilities(model, ep), model.config.threshold);
    const auto ctrf = maskgrid::build_ctrf_mask(ep.per_clause, selected);
    for (std::size_t i = 0; i < global.images; ++i) {
      const std::string stem = (fs::path(a.dump_masks) / ("ep" + std::to_string(e) + "_img" + std::to_string(i))).string();
      write_text(stem + "_global.pgm", maskgrid::to_pgm(global, i, cell));
      write_text(stem + "_ctrf.pgm", maskgrid::to_pgm(ctrf, i, cell));
    }
  }
}

int cmd_eval(const Overrides& o, const EvalArgs& a) {
  const RunConfig rc = resolve(o);
  require_file(a.data, "test data");
  if (a.predict_reference && a.predict_empty) throw ConfigError("--predict-reference and --predict-empty exclude each other");
  if (a.split != "all" && a.split != "ctrf" && a.split != "norm") throw ConfigError("--split must be all, ctrf or norm");
  Predictor predictor;
  std::optional<Model> model;
  worldgen::GenConfig gen = rc.gen;
  if (a.predict_reference) {
    predictor = reference_predictor();
  } else if (a.predict_empty) {
    predictor = empty_predictor();
  } else {
    require_file(a.checkpoint, "checkpoint");
    model = load_checkpoint(a.checkpoint);
    gen = model->config.apply_to(gen);
  }
  const auto eps = worldgen::read_dataset(a.data, gen);
  if (model) predictor = model_predictor(*model);
  const planeval::MetricReport rep = evaluate_batch(eps, predictor, a.split);
  std::cout << rep.to_csv();
  if (!a.out.empty()) {
    write_text(a.out + ".csv", rep.to_csv());
    write_text(a.out + ".json", rep.to_json());
  }
  if (!a.dump_masks.empty()) {
    if (!model) throw ConfigError("--dump-masks needs a checkpoint");
    dump_masks(*model, eps, a);
  }
  return kOk;
}

// --- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::string data, out, checkpoint_dir;
  std::vector<std::string> variants = {"full", "no-car", "no-ter", "only-sft"};
  std::vector<std::size_t> ks;
  std::vector<std::uint64_t> seeds = {1};
  bool parallel = false;
};

int cmd_ablate(const Overrides& o, const AblateArgs& a) {
  const RunConfig rc = resolve(o);
  const std::string train_path = (fs::path(a.data) / "train.jsonl").string();
  const std::string test_path = (fs::path(a.data) / "test.jsonl").string();
  require_file(train_path, "training data");
  require_file(test_path, "test data");
  AblationSpec spec;
  spec.base = rc.model;
  spec.variants.clear();
  for (const auto& name : a.variants) {
    const auto v = variant_from_name(name);
    if (!v) throw ConfigError("unknown variant " + name);
    spec.variants.push_back(*v);
  }
  spec.subgrids = a.ks;
  for (std::size_t k : a.ks) {
    ModelConfig probe = rc.model;
    probe.subgrid = k;
    probe.validate();
  }
  spec.seeds = a.seeds;
  spec.stage1 = train_config(rc, 1);
  spec.stage2 = train_config(rc, 2);
  spec.checkpoint_dir = a.checkpoint_dir;
  if (!spec.checkpoint_dir.empty()) fs::create_directories(spec.checkpoint_dir);
  const auto train = worldgen::read_dataset(train_path, rc.gen);
  const auto test = worldgen::read_dataset(test_path, rc.gen);

  std::mutex log_mutex;
  const AblationLog log = [&](const std::string& line) {
    std::lock_guard lock(log_mutex);
    std::cout << line << "\n" << std::flush;
  };
  AblationResult result;
  if (a.parallel && a.seeds.size() > 1) {
    std::vector<AblationResult> parts(a.seeds.size());
    std::vector<std::exception_ptr> errors(a.seeds.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < a.seeds.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          AblationSpec one = spec;
          one.seeds = {a.seeds[i]};
          parts[i] = run_ablation(one, train, test, log);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
    // Rows are reordered to the sequential layout so reports do not depend on scheduling.
    for (std::size_t k : spec.subgrids.empty() ? std::vector<std::size_t>{rc.model.subgrid} : spec.subgrids) {
      for (Variant v : spec.variants) {
        for (const auto& part : parts) {
          for (const auto& row : part.rows) {
            if (row.variant == variant_name(v) && row.subgrid == k) result.rows.push_back(row);
          }
        }
      }
    }
  } else {
    result = run_ablation(spec, train, test, log);
  }
  std::cout << result.summary_csv();
  if (!a.out.empty()) {
    write_text(a.out + ".csv", result.to_csv());
    write_text(a.out + "_summary.csv", result.summary_csv());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"llapa: counterfactual-aware planning on synthetic scenes"};
  app.require_subcommand(1);
  app.allow_extras(false);

  Overrides o;
  GenArgs gen;
  TrainArgs train;
  EvalArgs eval;
  AblateArgs ablate;

  auto* g = app.add_subcommand("gen", "Generate train/val/test episode files");
  add_common(g, o);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--n", gen.n, "Training episodes");
  g->add_option("--n-val", gen.n_val, "Validation episodes (default n/10)");
  g->add_option("--n-test", gen.n_test, "Test episodes");
  g->add_option("--ctrf-prob", gen.ctrf_prob, "Probability that a task carries a counterfactual clause");
  g->add_flag("--force", gen.force, "Overwrite existing files");

  auto* t = app.add_subcommand("train", "Run one training stage");
  add_common(t, o);
  add_training(t, o);
  t->add_option("--stage", train.stage, "Training stage")->check(CLI::IsMember({1, 2}));
  t->add_option("--data", train.data, "Training episodes (JSONL)")->required();
  t->add_option("--init", train.init, "Stage-1 checkpoint (stage 2)");
  t->add_option("--out", train.out, "Output checkpoint")->required();
  t->add_option("--report", train.report, "Training report path (default <out>.report.json)");

  auto* e = app.add_subcommand("eval", "Score plans on a test set");
  add_common(e, o);
  e->add_option("--checkpoint", eval.checkpoint, "Trained checkpoint");
  e->add_option("--data", eval.data, "Test episodes (JSONL)")->required();
  e->add_option("--split", eval.split, "all, ctrf or norm");
  e->add_option("--out", eval.out, "Report prefix; writes <out>.csv and <out>.json");
  e->add_flag("--predict-reference", eval.predict_reference, "Score the reference plans");
  e->add_flag("--predict-empty", eval.predict_empty, "Score empty plans");
  e->add_option("--dump-masks", eval.dump_masks, "Directory for PGM dumps of global and counterfactual masks");
  e->add_option("--dump-count", eval.dump_count, "Episodes to dump");

  auto* a = app.add_subcommand("ablate", "Train and compare model variants");
  add_common(a, o);
  add_training(a, o);
  a->add_option("--data", ablate.data, "Directory holding train.jsonl and test.jsonl")->required();
  a->add_option("--variants", ablate.variants, "full, no-car, no-ter, only-sft")->delimiter(',');
  a->add_option("--k", ablate.ks, "Sub-grid sizes to sweep")->delimiter(',');
  a->add_option("--seeds", ablate.seeds, "Training seeds")->delimiter(',');
  a->add_option("--checkpoint-dir", ablate.checkpoint_dir, "Reuse or store per-run checkpoints");
  a->add_option("--out", ablate.out, "Report prefix");
  a->add_flag("--parallel", ablate.parallel, "Train seeds on separate threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (g->parsed()) return cmd_gen(o, gen);
    if (t->parsed()) return cmd_train(o, train);
    if (e->parsed()) return cmd_eval(o, eval);
    return cmd_ablate(o, ablate);
  } catch (const ConfigError& err) {
    std::cerr << "llapa: configuration error: " << err.what() << "\n";
    return kConfig;
  } catch (const TrainingError& err) {
    std::cerr << "llapa: training failed: " << err.what() << "\n";
    return kDiverged;
  } catch (const DataError& err) {
    std::cerr << "llapa: data error: " << err.what() << "\n";
    return kData;
  } catch (const ParseError& err) {
    std::cerr << "llapa: data error: " << err.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "llapa: data error: " << err.what() << "\n";
    return kData;
  } catch (const Error& err) {
    std::cerr << "llapa: error: " << err.what() << "\n";
    return kData;
  }
}
