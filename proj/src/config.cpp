#include "sddr/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "sddr/errors.hpp"

namespace sddr {

using nlohmann::json;

std::string to_string(SddrMode mode) {
  switch (mode) {
    case SddrMode::Off: return "off";
    case SddrMode::Distill: return "distill";
    case SddrMode::DistillWoNew: return "distill_wo_new";
    case SddrMode::Replay: return "replay";
    case SddrMode::Both: return "both";
    case SddrMode::SyntheticMemory: return "synthetic_memory";
  }
  return "off";
}

SddrMode sddr_mode_from_string(const std::string& name) {
  if (name == "off") return SddrMode::Off;
  if (name == "distill") return SddrMode::Distill;
  if (name == "distill_wo_new") return SddrMode::DistillWoNew;
  if (name == "replay") return SddrMode::Replay;
  if (name == "both") return SddrMode::Both;
  if (name == "synthetic_memory") return SddrMode::SyntheticMemory;
  throw ConfigError("unknown sddr mode '" + name + "'");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::Icarl: return "icarl";
    case Method::Lucir: return "lucir";
    case Method::Finetune: return "finetune";
  }
  return "lucir";
}

Method method_from_string(const std::string& name) {
  if (name == "icarl") return Method::Icarl;
  if (name == "lucir") return Method::Lucir;
  if (name == "finetune") return Method::Finetune;
  throw ConfigError("unknown method '" + name + "'");
}

namespace {

// Collects every validation problem before failing.
struct Validator {
  std::vector<std::string> errors;

  void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) errors.push_back(key + ": " + message);
  }
  void finish(const std::string& origin) const {
    if (errors.empty()) return;
    std::ostringstream out;
    out << origin << ": " << errors.size() << " config error(s):";
    for (const auto& e : errors) out << "\n  - " << e;
    throw ConfigError(out.str());
  }
};

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& path,
                    Validator& v) {
  for (const auto& [key, value] : obj.items()) {
    v.require(known.count(key) > 0, path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  return obj.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  Validator v;
  ExperimentConfig cfg;
  reject_unknown(doc, {"task", "scenario", "trainer", "memory", "synthetic", "model",
                       "output_dir", "seeds"}, "", v);

  if (doc.contains("task")) {
    const json& t = doc["task"];
    reject_unknown(t, {"kind", "dim", "separation", "image_side", "jitter", "noise",
                       "per_class_train", "per_class_test", "train_path", "test_path",
                       "labels_path"}, "task", v);
    std::string kind = get_or<std::string>(t, "kind", "gaussian");
    if (kind == "gaussian") cfg.task.kind = TaskKind::Gaussian;
    else if (kind == "glyph") cfg.task.kind = TaskKind::Glyph;
    else if (kind == "cifar100") cfg.task.kind = TaskKind::Cifar100;
    else v.require(false, "task.kind", "must be gaussian | glyph | cifar100");
    cfg.task.dim = get_or(t, "dim", cfg.task.dim);
    cfg.task.separation = get_or(t, "separation", cfg.task.separation);
    cfg.task.glyph.image_side = get_or(t, "image_side", cfg.task.glyph.image_side);
    cfg.task.glyph.jitter = get_or(t, "jitter", cfg.task.glyph.jitter);
    cfg.task.glyph.noise = get_or(t, "noise", cfg.task.glyph.noise);
    cfg.task.per_class_train = get_or(t, "per_class_train", cfg.task.per_class_train);
    cfg.task.per_class_test = get_or(t, "per_class_test", cfg.task.per_class_test);
    cfg.task.train_path = get_or<std::string>(t, "train_path", "");
    cfg.task.test_path = get_or<std::string>(t, "test_path", "");
    cfg.task.labels_path = get_or<std::string>(t, "labels_path", "");
    v.require(cfg.task.dim >= 2, "task.dim", "must be >= 2");
    v.require(cfg.task.separation >= 0.0, "task.separation", "must be >= 0");
    v.require(cfg.task.per_class_train >= 0, "task.per_class_train", "must be >= 0");
    v.require(cfg.task.per_class_test >= 1, "task.per_class_test", "must be >= 1");
    if (cfg.task.kind == TaskKind::Cifar100) {
      v.require(!cfg.task.train_path.empty(), "task.train_path", "required for cifar100");
      v.require(!cfg.task.test_path.empty(), "task.test_path", "required for cifar100");
      v.require(!cfg.task.labels_path.empty(), "task.labels_path", "required for cifar100");
    }
  }

  if (doc.contains("scenario")) {
    const json& s = doc["scenario"];
    reject_unknown(s, {"num_classes", "num_steps", "seed", "base_fraction"}, "scenario", v);
    cfg.scenario.num_classes = get_or(s, "num_classes", cfg.scenario.num_classes);
    cfg.scenario.num_steps = get_or(s, "num_steps", cfg.scenario.num_steps);
    cfg.scenario.seed = get_or(s, "seed", cfg.scenario.seed);
    cfg.scenario.base_fraction = get_or(s, "base_fraction", cfg.scenario.base_fraction);
    v.require(cfg.scenario.num_classes >= 2, "scenario.num_classes", "must be >= 2");
    v.require(cfg.scenario.num_steps >= 1, "scenario.num_steps", "must be >= 1");
    v.require(cfg.scenario.base_fraction > 0.0 && cfg.scenario.base_fraction < 1.0,
              "scenario.base_fraction", "must be in (0, 1)");
  }

  if (doc.contains("trainer")) {
    const json& t = doc["trainer"];
    reject_unknown(t, {"method", "sddr_mode", "epochs", "real_batch_size", "synth_batch_size",
                       "lucir", "sgd", "eval_classifier"}, "trainer", v);
    try {
      cfg.trainer.method = method_from_string(get_or<std::string>(t, "method", "lucir"));
    } catch (const ConfigError& e) {
      v.require(false, "trainer.method", e.what());
    }
    try {
      cfg.trainer.sddr_mode = sddr_mode_from_string(get_or<std::string>(t, "sddr_mode", "off"));
    } catch (const ConfigError& e) {
      v.require(false, "trainer.sddr_mode", e.what());
    }
    cfg.trainer.epochs = get_or(t, "epochs", cfg.trainer.epochs);
    cfg.trainer.real_batch_size = get_or(t, "real_batch_size", cfg.trainer.real_batch_size);
    cfg.trainer.synth_batch_size = get_or(t, "synth_batch_size", cfg.trainer.synth_batch_size);
    v.require(cfg.trainer.epochs >= 1, "trainer.epochs", "must be >= 1");
    v.require(cfg.trainer.real_batch_size >= 1, "trainer.real_batch_size", "must be >= 1");
    v.require(cfg.trainer.synth_batch_size >= 1, "trainer.synth_batch_size", "must be >= 1");
    if (t.contains("lucir")) {
      const json& l = t["lucir"];
      reject_unknown(l, {"lambda_base", "margin", "top_k"}, "trainer.lucir", v);
      cfg.trainer.lucir.lambda_base = get_or(l, "lambda_base", cfg.trainer.lucir.lambda_base);
      cfg.trainer.lucir.margin = get_or(l, "margin", cfg.trainer.lucir.margin);
      cfg.trainer.lucir.top_k = get_or(l, "top_k", cfg.trainer.lucir.top_k);
      v.require(cfg.trainer.lucir.lambda_base >= 0.0, "trainer.lucir.lambda_base", "must be >= 0");
      v.require(cfg.trainer.lucir.margin >= 0.0, "trainer.lucir.margin", "must be >= 0");
      v.require(cfg.trainer.lucir.top_k >= 1, "trainer.lucir.top_k", "must be >= 1");
    }
    if (t.contains("sgd")) {
      const json& s = t["sgd"];
      reject_unknown(s, {"learning_rate", "momentum", "weight_decay", "schedule"}, "trainer.sgd", v);
      cfg.trainer.sgd.learning_rate = get_or(s, "learning_rate", cfg.trainer.sgd.learning_rate);
      cfg.trainer.sgd.momentum = get_or(s, "momentum", cfg.trainer.sgd.momentum);
      cfg.trainer.sgd.weight_decay = get_or(s, "weight_decay", cfg.trainer.sgd.weight_decay);
      if (s.contains("schedule")) {
        cfg.trainer.sgd.schedule.clear();
        for (const auto& pair : s["schedule"]) {
          v.require(pair.is_array() && pair.size() == 2, "trainer.sgd.schedule",
                    "entries must be [epoch, multiplier] pairs");
          if (pair.is_array() && pair.size() == 2) {
            cfg.trainer.sgd.schedule.emplace_back(pair[0].get<int>(), pair[1].get<double>());
          }
        }
      }
      v.require(cfg.trainer.sgd.learning_rate >= 0.0, "trainer.sgd.learning_rate", "must be >= 0");
      v.require(cfg.trainer.sgd.momentum >= 0.0 && cfg.trainer.sgd.momentum < 1.0,
                "trainer.sgd.momentum", "must be in [0, 1)");
    }
    if (t.contains("eval_classifier")) {
      std::string c = t["eval_classifier"].get<std::string>();
      if (c == "softmax") cfg.trainer.eval_classifier = ClassifierKind::Softmax;
      else if (c == "nme") cfg.trainer.eval_classifier = ClassifierKind::Nme;
      else if (c != "default") {
        v.require(false, "trainer.eval_classifier", "must be default | softmax | nme");
      }
    }
  }

  if (doc.contains("memory")) {
    const json& m = doc["memory"];
    reject_unknown(m, {"per_class", "policy"}, "memory", v);
    cfg.memory.per_class = get_or<std::size_t>(m, "per_class", cfg.memory.per_class);
    std::string policy = get_or<std::string>(m, "policy", "herding");
    if (policy == "herding") cfg.memory.policy = ExemplarPolicy::Herding;
    else if (policy == "random") cfg.memory.policy = ExemplarPolicy::Random;
    else v.require(false, "memory.policy", "must be herding | random");
  }

  if (doc.contains("synthetic")) {
    const json& s = doc["synthetic"];
    reject_unknown(s, {"backend", "n", "sigma", "params", "offline_root", "endpoint",
                       "timeout_ms", "retries"}, "synthetic", v);
    std::string backend = get_or<std::string>(s, "backend", "oracle");
    if (backend == "oracle") cfg.synthetic.backend = BackendKind::Oracle;
    else if (backend == "offline") cfg.synthetic.backend = BackendKind::Offline;
    else if (backend == "remote") cfg.synthetic.backend = BackendKind::Remote;
    else v.require(false, "synthetic.backend", "must be oracle | offline | remote");
    cfg.synthetic.n = get_or(s, "n", cfg.synthetic.n);
    cfg.synthetic.sigma = get_or(s, "sigma", cfg.synthetic.sigma);
    cfg.synthetic.offline_root = get_or<std::string>(s, "offline_root", "");
    cfg.synthetic.remote.endpoint = get_or<std::string>(s, "endpoint", "");
    cfg.synthetic.remote.timeout_ms = get_or(s, "timeout_ms", cfg.synthetic.remote.timeout_ms);
    cfg.synthetic.remote.retries = get_or(s, "retries", cfg.synthetic.remote.retries);
    v.require(cfg.synthetic.n >= 0, "synthetic.n", "must be >= 0");
    v.require(cfg.synthetic.sigma >= 0.0, "synthetic.sigma", "must be >= 0");
    if (s.contains("params")) {
      const json& p = s["params"];
      reject_unknown(p, {"guidance_scale", "num_steps", "width", "height", "seed"},
                     "synthetic.params", v);
      auto& gp = cfg.synthetic.params;
      gp.guidance_scale = get_or(p, "guidance_scale", gp.guidance_scale);
      gp.num_steps = get_or(p, "num_steps", gp.num_steps);
      gp.width = get_or(p, "width", gp.width);
      gp.height = get_or(p, "height", gp.height);
      gp.seed = get_or(p, "seed", gp.seed);
      v.require(gp.guidance_scale > 0.0, "synthetic.params.guidance_scale", "must be > 0");
      v.require(gp.num_steps >= 1, "synthetic.params.num_steps", "must be >= 1");
      v.require(gp.width >= 1 && gp.height >= 1, "synthetic.params.width/height", "must be >= 1");
    }
    if (cfg.synthetic.backend == BackendKind::Offline) {
      v.require(!cfg.synthetic.offline_root.empty(), "synthetic.offline_root",
                "required for the offline backend");
    }
    if (cfg.synthetic.backend == BackendKind::Remote) {
      v.require(!cfg.synthetic.remote.endpoint.empty(), "synthetic.endpoint",
                "required for the remote backend");
    }
  }

  if (doc.contains("model")) {
    const json& m = doc["model"];
    reject_unknown(m, {"hidden"}, "model", v);
    if (m.contains("hidden")) {
      cfg.hidden_dims = m["hidden"].get<std::vector<std::size_t>>();
      v.require(!cfg.hidden_dims.empty(), "model.hidden", "needs at least one layer size");
    }
  }

  cfg.output_dir = get_or<std::string>(doc, "output_dir", cfg.output_dir);
  if (doc.contains("seeds")) {
    cfg.run_seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    v.require(!cfg.run_seeds.empty(), "seeds", "needs at least one seed");
  }

  // Cross-field constraints.
  v.require(!(cfg.trainer.sddr_mode == SddrMode::SyntheticMemory && cfg.memory.per_class != 0),
            "memory.per_class", "must be 0 in synthetic_memory mode");
  v.require(!(cfg.task.kind == TaskKind::Cifar100 && cfg.synthetic.backend == BackendKind::Oracle &&
              cfg.trainer.sddr_mode != SddrMode::Off),
            "synthetic.backend", "oracle backend has no true distribution for cifar100");
  if (cfg.task.kind == TaskKind::Glyph) {
    v.require(cfg.scenario.num_classes <= kGlyphPatternCount, "scenario.num_classes",
              "glyph task supports at most " + std::to_string(kGlyphPatternCount) + " classes");
  }
  v.finish(origin);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json task{{"per_class_train", cfg.task.per_class_train},
            {"per_class_test", cfg.task.per_class_test}};
  switch (cfg.task.kind) {
    case TaskKind::Gaussian:
      task["kind"] = "gaussian";
      task["dim"] = cfg.task.dim;
      task["separation"] = cfg.task.separation;
      break;
    case TaskKind::Glyph:
      task["kind"] = "glyph";
      task["image_side"] = cfg.task.glyph.image_side;
      task["jitter"] = cfg.task.glyph.jitter;
      task["noise"] = cfg.task.glyph.noise;
      break;
    case TaskKind::Cifar100:
      task["kind"] = "cifar100";
      task["train_path"] = cfg.task.train_path;
      task["test_path"] = cfg.task.test_path;
      task["labels_path"] = cfg.task.labels_path;
      break;
  }
  json schedule = json::array();
  for (const auto& [epoch, mult] : cfg.trainer.sgd.schedule) schedule.push_back({epoch, mult});
  json trainer{{"method", to_string(cfg.trainer.method)},
               {"sddr_mode", to_string(cfg.trainer.sddr_mode)},
               {"epochs", cfg.trainer.epochs},
               {"real_batch_size", cfg.trainer.real_batch_size},
               {"synth_batch_size", cfg.trainer.synth_batch_size},
               {"lucir",
                {{"lambda_base", cfg.trainer.lucir.lambda_base},
                 {"margin", cfg.trainer.lucir.margin},
                 {"top_k", cfg.trainer.lucir.top_k}}},
               {"sgd",
                {{"learning_rate", cfg.trainer.sgd.learning_rate},
                 {"momentum", cfg.trainer.sgd.momentum},
                 {"weight_decay", cfg.trainer.sgd.weight_decay},
                 {"schedule", std::move(schedule)}}}};
  if (cfg.trainer.eval_classifier) {
    trainer["eval_classifier"] =
        *cfg.trainer.eval_classifier == ClassifierKind::Softmax ? "softmax" : "nme";
  }
  json synthetic{{"backend", cfg.synthetic.backend == BackendKind::Oracle    ? "oracle"
                             : cfg.synthetic.backend == BackendKind::Offline ? "offline"
                                                                             : "remote"},
                 {"n", cfg.synthetic.n},
                 {"sigma", cfg.synthetic.sigma},
                 {"params",
                  {{"guidance_scale", cfg.synthetic.params.guidance_scale},
                   {"num_steps", cfg.synthetic.params.num_steps},
                   {"width", cfg.synthetic.params.width},
                   {"height", cfg.synthetic.params.height},
                   {"seed", cfg.synthetic.params.seed}}}};
  if (!cfg.synthetic.offline_root.empty()) synthetic["offline_root"] = cfg.synthetic.offline_root;
  if (!cfg.synthetic.remote.endpoint.empty()) {
    synthetic["endpoint"] = cfg.synthetic.remote.endpoint;
    synthetic["timeout_ms"] = cfg.synthetic.remote.timeout_ms;
    synthetic["retries"] = cfg.synthetic.remote.retries;
  }
  json doc{{"task", std::move(task)},
           {"scenario",
            {{"num_classes", cfg.scenario.num_classes},
             {"num_steps", cfg.scenario.num_steps},
             {"seed", cfg.scenario.seed},
             {"base_fraction", cfg.scenario.base_fraction}}},
           {"trainer", std::move(trainer)},
           {"memory",
            {{"per_class", cfg.memory.per_class},
             {"policy", cfg.memory.policy == ExemplarPolicy::Herding ? "herding" : "random"}}},
           {"synthetic", std::move(synthetic)},
           {"model", {{"hidden", cfg.hidden_dims}}},
           {"output_dir", cfg.output_dir},
           {"seeds", cfg.run_seeds}};
  return doc.dump(2);
}

}  // namespace sddr
