#include "dcpnet/harness.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include "dcpnet/augment.hpp"
#include "dcpnet/checkpoint.hpp"
#include "dcpnet/errors.hpp"
#include "dcpnet/io.hpp"
#include "dcpnet/plot.hpp"
#include "dcpnet/synth.hpp"

namespace dcpnet {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string to_string(Command command) {
  switch (command) {
    case Command::pretrain: return "pretrain";
    case Command::evaluate: return "evaluate";
    case Command::ablate: return "ablate";
    case Command::full: return "full";
  }
  return "?";
}

Command parse_command(std::string_view name) {
  if (name == "pretrain") return Command::pretrain;
  if (name == "evaluate") return Command::evaluate;
  if (name == "ablate") return Command::ablate;
  if (name == "full") return Command::full;
  throw ArgumentError("unknown command '" + std::string(name) + "' (expected pretrain, evaluate, ablate or full)");
}

void apply_environment(ExperimentConfig& cfg) {
  const char* dir = std::getenv("DCPNET_OUTPUT_DIR");
  if (dir != nullptr && *dir != '\0') cfg.output_dir = dir;
}

ChipCollection load_dataset(const ExperimentConfig& cfg, std::ostream& warnings) {
  const int crop = cfg.dataset.crop_size;
  if (cfg.dataset.kind == DatasetKind::directory) return ingest_directory(cfg.dataset.path, crop, warnings);
  cfg.dataset.synthetic.validate(cfg.train.hog.cell_size);
  ChipCollection all = generate(cfg.dataset.synthetic);
  if (cfg.dataset.synthetic.chip_size != crop) {
    for (auto& chip : all.chips) chip = center_crop_resize(chip, crop);
  }
  return all;
}

SplitCollections prepare_splits(const ExperimentConfig& cfg, const ChipCollection& all) {
  if (!all.labeled()) return SplitCollections{all, ChipCollection{}};
  return stratified_split(all, cfg.dataset.test_fraction, cfg.seed);
}

ModelConfig resolve_model(const ExperimentConfig& cfg, const ChipCollection& all) {
  ModelConfig m = cfg.model;
  if (m.num_classes == 0) {
    if (all.num_classes < 2) {
      throw ConfigError("config key 'model.num_classes' is required for unlabeled datasets");
    }
    m.num_classes = all.num_classes;
  }
  return m;
}

std::string epoch_report_json(const EpochReport& r) {
  Json j;
  j["epoch"] = r.epoch;
  j["mean_loss_hand"] = r.mean_loss_hand;
  j["mean_loss_inst"] = r.mean_loss_inst;
  j["mean_loss_clust"] = r.mean_loss_clust;
  j["mean_loss_overall"] = r.mean_loss_overall;
  j["eliminated_fraction"] = r.eliminated_fraction;
  j["bank_size"] = r.bank_size;
  j["learning_rate"] = r.learning_rate;
  j["weights"] = {{"alpha", r.weights.alpha}, {"beta", r.weights.beta}, {"gamma", r.weights.gamma}};
  return j.dump();
}

std::vector<AblationVariant> ablation_grid() {
  std::vector<AblationVariant> grid;
  for (bool hand : {true, false}) {
    for (bool clust : {true, false}) {
      for (bool fnse : {true, false}) {
        AblationVariant v;
        v.ablation.hand_task = hand;
        v.ablation.cluster_task = clust;
        v.fnse = fnse;
        v.name = std::string("hand") + (hand ? "1" : "0") + "_clust" + (clust ? "1" : "0") + "_fnse" + (fnse ? "1" : "0");
        grid.push_back(v);
      }
    }
  }
  AblationVariant direct;
  direct.name = "direct_contrast";
  direct.ablation.direct_contrast_mode = true;
  grid.push_back(direct);
  return grid;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

class Logger {
 public:
  explicit Logger(std::ostream* os) : os_(os) {}
  template <typename... Args>
  void line(const Args&... args) const {
    if (os_ == nullptr) return;
    ((*os_) << ... << args) << '\n';
    os_->flush();
  }
  std::ostream* stream() const { return os_; }

 private:
  std::ostream* os_;
};

struct Workspace {
  ExperimentConfig cfg;
  std::uint64_t seed;
  ChipCollection all;
  SplitCollections splits;
  ModelConfig model;
};

Workspace prepare(const ExperimentConfig& cfg, std::uint64_t seed, const Logger& log) {
  Workspace ws{cfg, seed, {}, {}, {}};
  ws.cfg.seed = seed;
  std::ostringstream warnings;
  ws.all = load_dataset(ws.cfg, warnings);
  if (!warnings.str().empty()) log.line(warnings.str());
  ws.splits = prepare_splits(ws.cfg, ws.all);
  ws.model = resolve_model(ws.cfg, ws.all);
  log.line("dataset: ", ws.all.size(), " chips, ", ws.splits.train.size(), " train / ", ws.splits.test.size(), " test");
  return ws;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.ckpt", epoch);
  return buf;
}

/// Pretrains into `dir`, writing epochs.jsonl, periodic checkpoints and final.ckpt.
PretrainResult pretrain_into(const Workspace& ws, const TrainConfig& train, const fs::path& dir, bool periodic,
                             const Logger& log) {
  fs::create_directories(dir);
  std::ofstream epochs(dir / "epochs.jsonl", std::ios::trunc);
  if (!epochs) throw Error("cannot write " + (dir / "epochs.jsonl").string());
  auto on_epoch = [&](const EpochReport& r, const ModelState& state, const MemoryBank& bank) {
    epochs << epoch_report_json(r) << '\n';
    epochs.flush();
    log.line("epoch ", r.epoch, "/", train.epochs, " loss ", r.mean_loss_overall, " (hand ", r.mean_loss_hand,
             ", inst ", r.mean_loss_inst, ", clust ", r.mean_loss_clust, ") eliminated ", r.eliminated_fraction);
    if (periodic && train.checkpoint_every > 0 && r.epoch % train.checkpoint_every == 0) {
      save_checkpoint((dir / "checkpoints" / checkpoint_name(r.epoch)).string(), state, r.epoch, &bank);
    }
  };
  PretrainResult result = run_pretraining(train, ws.model, ws.splits.train.chips, ws.seed, on_epoch);
  save_checkpoint((dir / "checkpoints" / "final.ckpt").string(), result.state, train.epochs, &result.bank);
  if (ws.cfg.plots) {
    std::vector<Series> series(4);
    series[0].name = "overall";
    series[1].name = "hand";
    series[2].name = "inst";
    series[3].name = "clust";
    for (const auto& r : result.reports) {
      series[0].values.push_back(r.mean_loss_overall);
      series[1].values.push_back(r.mean_loss_hand);
      series[2].values.push_back(r.mean_loss_inst);
      series[3].values.push_back(r.mean_loss_clust);
    }
    write_line_plot((dir / "loss_curve.svg").string(), "Pretraining loss", "epoch", series);
  }
  return result;
}

void require_labels(const Workspace& ws) {
  if (!ws.all.labeled() || ws.splits.test.size() == 0) {
    throw ArgumentError("evaluation needs a labeled dataset (labels.csv manifest or synthetic data)");
  }
}

std::vector<ProtocolResult> evaluate_into(const Workspace& ws, const ModelState& state, const fs::path& dir,
                                          const Logger& log) {
  require_labels(ws);
  std::vector<ProtocolResult> results = evaluate_suite(state, ws.cfg.eval, ws.splits, ws.seed);
  write_results_table((dir / "results.csv").string(), results);
  fs::create_directories(dir / "confusion");
  std::vector<std::string> labels;
  std::vector<double> means, stds;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string kind = to_string(r.protocol.kind);
    for (std::size_t run = 0; run < r.result.run_confusions.size(); ++run) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%02zu_%s_run%zu.csv", i, kind.c_str(), run);
      write_confusion((dir / "confusion" / buf).string(), r.result.run_confusions[run]);
    }
    log.line(kind, ": ", r.result.accuracy_mean, " +- ", r.result.accuracy_std, " %");
    labels.push_back(kind);
    means.push_back(r.result.accuracy_mean);
    stds.push_back(r.result.accuracy_std);
  }
  if (ws.cfg.plots) write_bar_plot((dir / "accuracy.svg").string(), "Accuracy (%)", labels, means, stds);
  return results;
}

void run_ablation(const Workspace& ws, const fs::path& dir, const Logger& log) {
  require_labels(ws);
  const EvalProtocol protocol = ws.cfg.eval.empty() ? EvalProtocol{} : ws.cfg.eval.front();
  std::ostringstream table;
  table << "variant,hand_task,cluster_task,fnse,direct_contrast,protocol,mean,std\n";
  std::vector<std::string> labels;
  std::vector<double> means, stds;
  for (const auto& v : ablation_grid()) {
    log.line("ablation variant ", v.name);
    TrainConfig train = ws.cfg.train;
    train.ablation = v.ablation;
    train.fnse.enabled = v.fnse;
    PretrainResult pr = pretrain_into(ws, train, dir / "ablation" / v.name, false, log);
    const auto res = evaluate_suite(pr.state, {protocol}, ws.splits, ws.seed).front().result;
    char row[256];
    std::snprintf(row, sizeof row, "%s,%d,%d,%d,%d,%s,%.4f,%.4f\n", v.name.c_str(), v.ablation.hand_task ? 1 : 0,
                  v.ablation.cluster_task ? 1 : 0, v.fnse ? 1 : 0, v.ablation.direct_contrast_mode ? 1 : 0,
                  to_string(protocol.kind).c_str(), res.accuracy_mean, res.accuracy_std);
    table << row;
    labels.push_back(v.name);
    means.push_back(res.accuracy_mean);
    stds.push_back(res.accuracy_std);
    log.line("  ", v.name, ": ", res.accuracy_mean, " %");
  }
  write_text(dir / "ablation.csv", table.str());
  if (ws.cfg.plots) write_bar_plot((dir / "ablation.svg").string(), "Ablation accuracy (%)", labels, means, stds);
}

}  // namespace

int run(ExperimentConfig cfg, Command command, const RunOptions& options) {
  cfg.validate();
  const Logger log(options.log);
  const std::uint64_t seed = options.seed.value_or(cfg.seed);
  cfg.seed = seed;
  torch::set_num_threads(cfg.workers);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  Json meta;
  meta["command"] = to_string(command);
  meta["seed"] = seed;
  meta["started_at"] = utc_now();
  write_text(dir / "config.json", serialize_config(cfg));

  // Resolve the checkpoint before heavy work so a missing file fails fast.
  fs::path ckpt_path;
  if (command == Command::evaluate) {
    ckpt_path = options.checkpoint ? fs::path(*options.checkpoint) : dir / "checkpoints" / "final.ckpt";
    if (!fs::is_regular_file(ckpt_path)) throw StateError("evaluate: checkpoint not found: " + ckpt_path.string());
  }

  const Workspace ws = prepare(cfg, seed, log);
  switch (command) {
    case Command::pretrain:
      pretrain_into(ws, cfg.train, dir, true, log);
      break;
    case Command::evaluate: {
      Checkpoint ck = load_checkpoint(ckpt_path.string());
      meta["checkpoint"] = ckpt_path.string();
      evaluate_into(ws, ck.state, dir, log);
      break;
    }
    case Command::ablate:
      run_ablation(ws, dir, log);
      break;
    case Command::full: {
      require_labels(ws);
      PretrainResult pr = pretrain_into(ws, cfg.train, dir, true, log);
      evaluate_into(ws, pr.state, dir, log);
      break;
    }
  }
  meta["finished_at"] = utc_now();
  write_text(dir / "run_meta.json", meta.dump(2) + "\n");
  return 0;
}

}  // namespace dcpnet
