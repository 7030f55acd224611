#include "dcpnet/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include "dcpnet/errors.hpp"

namespace dcpnet {

using Json = nlohmann::ordered_json;

namespace {

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

/// Typed, strict view over one JSON object.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.contains(key)) throw ConfigError("unknown config key '" + join(path_, key) + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  Section sub(const char* key) const { return Section(j_.at(key), join(path_, key)); }
  const Json& raw(const char* key) const { return j_.at(key); }
  std::string key_path(const char* key) const { return join(path_, key); }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + join(path_, key) + "' has the wrong type");
    }
  }

  void get_pair(const char* key, std::pair<double, double>& out) const {
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError("config key '" + join(path_, key) + "' must be a [lo, hi] pair");
    }
    out = {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  std::string where() const { return path_.empty() ? "config root" : "config key '" + path_ + "'"; }
  const Json& j_;
  std::string path_;
};

template <typename Fn>
void rethrow_with_key(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " [" + key + "]");
  }
}

SynthSpec read_synth(const Section& s) {
  SynthSpec out;
  Section sec = s;
  sec.allow({"n_classes", "chips_per_class", "chip_size", "speckle_level", "seed"});
  sec.get("n_classes", out.n_classes);
  sec.get("chips_per_class", out.chips_per_class);
  sec.get("chip_size", out.chip_size);
  sec.get("speckle_level", out.speckle_level);
  sec.get("seed", out.seed);
  return out;
}

DatasetConfig read_dataset(Section s) {
  DatasetConfig out;
  s.allow({"kind", "path", "synthetic", "crop_size", "test_fraction"});
  std::string kind = "synthetic";
  s.get("kind", kind);
  if (kind == "synthetic") {
    out.kind = DatasetKind::synthetic;
  } else if (kind == "directory") {
    out.kind = DatasetKind::directory;
  } else {
    throw ConfigError("config key 'dataset.kind' must be 'directory' or 'synthetic'");
  }
  s.get("path", out.path);
  if (s.has("synthetic")) out.synthetic = read_synth(s.sub("synthetic"));
  s.get("crop_size", out.crop_size);
  s.get("test_fraction", out.test_fraction);
  return out;
}

ModelConfig read_model(Section s) {
  ModelConfig out;
  s.allow({"backbone", "feature_dim", "projection_dim", "num_classes", "ema_momentum"});
  std::string backbone = to_string(out.encoder.backbone);
  s.get("backbone", backbone);
  out.encoder.backbone = parse_backbone(backbone);
  s.get("feature_dim", out.encoder.feature_dim);
  s.get("projection_dim", out.encoder.projection_dim);
  s.get("num_classes", out.num_classes);
  s.get("ema_momentum", out.ema_momentum);
  return out;
}

AugConfig read_augment(Section s) {
  AugConfig out;
  s.allow({"crop_scale_range", "flip_probability", "blur_sigma_range", "jitter_strength", "seed"});
  s.get_pair("crop_scale_range", out.crop_scale_range);
  s.get("flip_probability", out.flip_probability);
  s.get_pair("blur_sigma_range", out.blur_sigma_range);
  s.get("jitter_strength", out.jitter_strength);
  s.get("seed", out.seed);
  return out;
}

HogConfig read_hog(Section s) {
  HogConfig out;
  s.allow({"orientations", "cell_size", "block_size"});
  s.get("orientations", out.orientations);
  s.get("cell_size", out.cell_size);
  s.get("block_size", out.block_size);
  return out;
}

TrainConfig read_train(Section s) {
  TrainConfig out;
  s.allow({"epochs", "batch_size", "learning_rate", "weight_decay", "momentum", "cosine_schedule", "loss_weights",
           "tau", "fnse", "ablation", "pseudo_label_source", "exclude_self_negative", "checkpoint_every", "augment",
           "hog"});
  s.get("epochs", out.epochs);
  s.get("batch_size", out.batch_size);
  s.get("learning_rate", out.learning_rate);
  s.get("weight_decay", out.weight_decay);
  s.get("momentum", out.momentum);
  s.get("cosine_schedule", out.cosine_schedule);
  if (s.has("loss_weights")) {
    Section w = s.sub("loss_weights");
    w.allow({"alpha", "beta", "gamma"});
    w.get("alpha", out.loss_weights.alpha);
    w.get("beta", out.loss_weights.beta);
    w.get("gamma", out.loss_weights.gamma);
  }
  s.get("tau", out.tau);
  if (s.has("fnse")) {
    Section f = s.sub("fnse");
    f.allow({"enabled", "threshold", "c"});
    f.get("enabled", out.fnse.enabled);
    f.get("threshold", out.fnse.threshold);
    f.get("c", out.fnse.c);
  }
  if (s.has("ablation")) {
    Section a = s.sub("ablation");
    a.allow({"hand_task", "cluster_task", "direct_contrast_mode"});
    a.get("hand_task", out.ablation.hand_task);
    a.get("cluster_task", out.ablation.cluster_task);
    a.get("direct_contrast_mode", out.ablation.direct_contrast_mode);
  }
  std::string source = "in_flight";
  s.get("pseudo_label_source", source);
  if (source == "in_flight") {
    out.pseudo_label_source = PseudoLabelSource::in_flight;
  } else if (source == "end_of_epoch") {
    out.pseudo_label_source = PseudoLabelSource::end_of_epoch;
  } else {
    throw ConfigError("config key 'train.pseudo_label_source' must be 'in_flight' or 'end_of_epoch'");
  }
  s.get("exclude_self_negative", out.exclude_self_negative);
  s.get("checkpoint_every", out.checkpoint_every);
  if (s.has("augment")) out.augment = read_augment(s.sub("augment"));
  if (s.has("hog")) out.hog = read_hog(s.sub("hog"));
  return out;
}

EvalProtocol read_protocol(Section s) {
  EvalProtocol out;
  s.allow({"kind", "k", "epochs", "runs", "knn_tau", "majority_vote", "learning_rate", "batch_size"});
  std::string kind = "knn";
  s.get("kind", kind);
  out.kind = parse_protocol(kind);
  s.get("k", out.k);
  s.get("epochs", out.epochs);
  s.get("runs", out.runs);
  s.get("knn_tau", out.knn_tau);
  s.get("majority_vote", out.majority_vote);
  s.get("learning_rate", out.learning_rate);
  s.get("batch_size", out.batch_size);
  return out;
}

Json write_pair(const std::pair<double, double>& p) { return Json::array({p.first, p.second}); }

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.crop_size <= 0) throw ConfigError("config key 'dataset.crop_size' must be positive");
  if (dataset.crop_size % train.hog.cell_size != 0) {
    throw ConfigError("config key 'dataset.crop_size' must be divisible by train.hog.cell_size");
  }
  if (dataset.kind == DatasetKind::directory && dataset.path.empty()) {
    throw ConfigError("config key 'dataset.path' is required for directory datasets");
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    throw ConfigError("config key 'dataset.test_fraction' must lie in (0, 1)");
  }
  if (dataset.kind == DatasetKind::synthetic) rethrow_with_key("dataset.synthetic", [&] { dataset.synthetic.validate(0); });
  if (model.encoder.projection_dim < 1) throw ConfigError("config key 'model.projection_dim' must be positive");
  if (model.num_classes != 0 && model.num_classes < 2) throw ConfigError("config key 'model.num_classes' must be >= 2");
  if (!(model.ema_momentum >= 0.0 && model.ema_momentum <= 1.0)) {
    throw ConfigError("config key 'model.ema_momentum' must lie in [0, 1]");
  }
  train.validate();
  for (const auto& p : eval) p.validate();
  if (output_dir.empty()) throw ConfigError("config key 'output_dir' is required");
  if (workers < 1) throw ConfigError("config key 'workers' must be >= 1");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  Json j;
  try {
    j = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(source + ": parse error: " + e.what());
  }
  Section root(j, "");
  root.allow({"dataset", "model", "train", "eval", "output_dir", "seed", "workers", "plots"});
  ExperimentConfig cfg;
  if (!root.has("dataset")) throw ConfigError("config key 'dataset' is required");
  cfg.dataset = read_dataset(root.sub("dataset"));
  if (root.has("model")) cfg.model = read_model(root.sub("model"));
  if (root.has("train")) cfg.train = read_train(root.sub("train"));
  if (root.has("eval")) {
    const Json& list = root.raw("eval");
    if (!list.is_array()) throw ConfigError("config key 'eval' must be a list of protocols");
    cfg.eval.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.eval.push_back(read_protocol(Section(list[i], "eval[" + std::to_string(i) + "]")));
    }
  }
  root.get("output_dir", cfg.output_dir);
  root.get("seed", cfg.seed);
  root.get("workers", cfg.workers);
  root.get("plots", cfg.plots);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str(), path);
  if (cfg.dataset.kind == DatasetKind::directory && !std::filesystem::is_directory(cfg.dataset.path)) {
    throw ConfigError("config key 'dataset.path': directory '" + cfg.dataset.path + "' does not exist");
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  Json j;
  const auto& d = cfg.dataset;
  j["dataset"] = {{"kind", d.kind == DatasetKind::synthetic ? "synthetic" : "directory"},
                  {"path", d.path},
                  {"synthetic",
                   {{"n_classes", d.synthetic.n_classes},
                    {"chips_per_class", d.synthetic.chips_per_class},
                    {"chip_size", d.synthetic.chip_size},
                    {"speckle_level", d.synthetic.speckle_level},
                    {"seed", d.synthetic.seed}}},
                  {"crop_size", d.crop_size},
                  {"test_fraction", d.test_fraction}};
  const auto& m = cfg.model;
  j["model"] = {{"backbone", to_string(m.encoder.backbone)},
                {"feature_dim", m.encoder.feature_dim},
                {"projection_dim", m.encoder.projection_dim},
                {"num_classes", m.num_classes},
                {"ema_momentum", m.ema_momentum}};
  const auto& t = cfg.train;
  j["train"] = {
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"learning_rate", t.learning_rate},
      {"weight_decay", t.weight_decay},
      {"momentum", t.momentum},
      {"cosine_schedule", t.cosine_schedule},
      {"loss_weights", {{"alpha", t.loss_weights.alpha}, {"beta", t.loss_weights.beta}, {"gamma", t.loss_weights.gamma}}},
      {"tau", t.tau},
      {"fnse", {{"enabled", t.fnse.enabled}, {"threshold", t.fnse.threshold}, {"c", t.fnse.c}}},
      {"ablation",
       {{"hand_task", t.ablation.hand_task},
        {"cluster_task", t.ablation.cluster_task},
        {"direct_contrast_mode", t.ablation.direct_contrast_mode}}},
      {"pseudo_label_source", t.pseudo_label_source == PseudoLabelSource::in_flight ? "in_flight" : "end_of_epoch"},
      {"exclude_self_negative", t.exclude_self_negative},
      {"checkpoint_every", t.checkpoint_every},
      {"augment",
       {{"crop_scale_range", write_pair(t.augment.crop_scale_range)},
        {"flip_probability", t.augment.flip_probability},
        {"blur_sigma_range", write_pair(t.augment.blur_sigma_range)},
        {"jitter_strength", t.augment.jitter_strength},
        {"seed", t.augment.seed}}},
      {"hog", {{"orientations", t.hog.orientations}, {"cell_size", t.hog.cell_size}, {"block_size", t.hog.block_size}}}};
  Json eval = Json::array();
  for (const auto& p : cfg.eval) {
    eval.push_back({{"kind", to_string(p.kind)},
                    {"k", p.k},
                    {"epochs", p.epochs},
                    {"runs", p.runs},
                    {"knn_tau", p.knn_tau},
                    {"majority_vote", p.majority_vote},
                    {"learning_rate", p.learning_rate},
                    {"batch_size", p.batch_size}});
  }
  j["eval"] = eval;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["plots"] = cfg.plots;
  return j.dump(2) + "\n";
}

}  // namespace dcpnet
