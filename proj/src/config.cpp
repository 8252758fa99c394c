#include "paln/config.hpp"

#include <fstream>
#include <set>

namespace paln {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& known) {
  for (const auto& item : obj.items()) {
    if (!known.count(item.key())) {
      fail(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
    }
  }
}

double get_number(const json& obj, const std::string& path, const char* key,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key,
            int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::uint64_t get_seed(const json& obj, const std::string& path,
                       const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    fail(path + "." + key, "expected a non-negative integer");
  }
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
    fail(path + "." + key, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

std::array<double, 3> get_rgb(const json& obj, const std::string& path,
                              const char* key, std::array<double, 3> fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 3) fail(path + "." + key, "expected [r,g,b]");
  std::array<double, 3> out;
  for (int i = 0; i < 3; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) {
      fail(path + "." + key, "expected [r,g,b] numbers");
    }
    out[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

const std::set<std::string> kDomainKeys = {
    "bg_base",          "texture_period",    "texture_amplitude",
    "noise_sigma",      "vehicle_lo",        "vehicle_hi",
    "vehicle_size_min", "vehicle_size_max",  "vehicle_aspect_min",
    "vehicle_aspect_max", "vehicles_min",    "vehicles_max",
    "channel_gain",     "channel_offset"};

DomainParams parse_domain(const json& obj, const std::string& path,
                          DomainParams base) {
  if (!obj.is_object()) fail(path, "expected an object");
  check_keys(obj, path, kDomainKeys);
  base.bg_base = get_rgb(obj, path, "bg_base", base.bg_base);
  base.texture_period = get_number(obj, path, "texture_period", base.texture_period);
  base.texture_amplitude =
      get_number(obj, path, "texture_amplitude", base.texture_amplitude);
  base.noise_sigma = get_number(obj, path, "noise_sigma", base.noise_sigma);
  base.vehicle_lo = get_rgb(obj, path, "vehicle_lo", base.vehicle_lo);
  base.vehicle_hi = get_rgb(obj, path, "vehicle_hi", base.vehicle_hi);
  base.vehicle_size_min =
      get_number(obj, path, "vehicle_size_min", base.vehicle_size_min);
  base.vehicle_size_max =
      get_number(obj, path, "vehicle_size_max", base.vehicle_size_max);
  base.vehicle_aspect_min =
      get_number(obj, path, "vehicle_aspect_min", base.vehicle_aspect_min);
  base.vehicle_aspect_max =
      get_number(obj, path, "vehicle_aspect_max", base.vehicle_aspect_max);
  base.vehicles_min = get_int(obj, path, "vehicles_min", base.vehicles_min);
  base.vehicles_max = get_int(obj, path, "vehicles_max", base.vehicles_max);
  base.channel_gain = get_rgb(obj, path, "channel_gain", base.channel_gain);
  base.channel_offset = get_rgb(obj, path, "channel_offset", base.channel_offset);
  if (base.texture_period <= 0) fail(path + ".texture_period", "must be positive");
  if (base.noise_sigma < 0) fail(path + ".noise_sigma", "must be non-negative");
  if (base.vehicle_size_min <= 0 || base.vehicle_size_max < base.vehicle_size_min) {
    fail(path + ".vehicle_size_min", "empty size range");
  }
  if (base.vehicle_aspect_min <= 0 ||
      base.vehicle_aspect_max < base.vehicle_aspect_min) {
    fail(path + ".vehicle_aspect_min", "empty aspect range");
  }
  if (base.vehicles_min < 0 || base.vehicles_max < base.vehicles_min) {
    fail(path + ".vehicles_min", "empty vehicle count range");
  }
  return base;
}

json domain_json(const DomainParams& p) {
  json out;
  out["bg_base"] = p.bg_base;
  out["texture_period"] = p.texture_period;
  out["texture_amplitude"] = p.texture_amplitude;
  out["noise_sigma"] = p.noise_sigma;
  out["vehicle_lo"] = p.vehicle_lo;
  out["vehicle_hi"] = p.vehicle_hi;
  out["vehicle_size_min"] = p.vehicle_size_min;
  out["vehicle_size_max"] = p.vehicle_size_max;
  out["vehicle_aspect_min"] = p.vehicle_aspect_min;
  out["vehicle_aspect_max"] = p.vehicle_aspect_max;
  out["vehicles_min"] = p.vehicles_min;
  out["vehicles_max"] = p.vehicles_max;
  out["channel_gain"] = p.channel_gain;
  out["channel_offset"] = p.channel_offset;
  return out;
}

}  // namespace

AppConfig config_from_json(const json& root) {
  if (!root.is_object()) throw ConfigError("top level: expected an object");
  check_keys(root, "", {"data", "train", "eval", "output"});
  AppConfig cfg;

  if (root.contains("data")) {
    const json& d = root.at("data");
    if (!d.is_object()) fail("data", "expected an object");
    check_keys(d, "data",
               {"shift", "seed", "image_side", "source_train", "target_train",
                "target_test", "target_labels", "source", "target"});
    cfg.data.shift = get_number(d, "data", "shift", cfg.data.shift);
    if (cfg.data.shift < 0) fail("data.shift", "must be non-negative");
    cfg.data.seed = get_seed(d, "data", "seed", cfg.data.seed);
    cfg.data.image_side = get_int(d, "data", "image_side", cfg.data.image_side);
    if (cfg.data.image_side < 8) fail("data.image_side", "must be at least 8");
    cfg.data.source_train = get_int(d, "data", "source_train", cfg.data.source_train);
    cfg.data.target_train = get_int(d, "data", "target_train", cfg.data.target_train);
    cfg.data.target_test = get_int(d, "data", "target_test", cfg.data.target_test);
    cfg.data.target_labels = get_int(d, "data", "target_labels", cfg.data.target_labels);
    for (const char* key : {"source_train", "target_train", "target_test",
                            "target_labels"}) {
      if (get_int(d, "data", key, 1) < 1) {
        fail(std::string("data.") + key, "must be at least 1");
      }
    }
    cfg.data.source = source_domain_params();
    cfg.data.target = target_domain_params(cfg.data.shift);
    cfg.data.source.image_side = cfg.data.image_side;
    cfg.data.target.image_side = cfg.data.image_side;
    if (d.contains("source")) {
      cfg.data.source = parse_domain(d.at("source"), "data.source", cfg.data.source);
    }
    if (d.contains("target")) {
      cfg.data.target = parse_domain(d.at("target"), "data.target", cfg.data.target);
    }
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    if (!t.is_object()) fail("train", "expected an object");
    check_keys(t, "train",
               {"modes", "repetitions", "pretrain_iters", "da_iters",
                "lr_model", "lr_da_model", "lr_disc", "lr_disc_p", "momentum", "da_momentum",
                "batch_source", "batch_target", "alpha", "a", "seed",
                "decay_milestones", "da_decay_milestones", "pred_det_warmup", "augment",
                "channels", "templates", "separate_heads",
                "presoftmax_vectors"});
    if (t.contains("modes")) {
      const json& modes = t.at("modes");
      if (!modes.is_array() || modes.empty()) fail("train.modes", "expected a non-empty list");
      cfg.train.modes.clear();
      for (const json& m : modes) {
        if (!m.is_string()) fail("train.modes", "expected mode names");
        const auto mode = train_mode_from_string(m.get<std::string>());
        if (!mode) fail("train.modes", "unknown mode '" + m.get<std::string>() + "'");
        for (TrainMode seen : cfg.train.modes) {
          if (seen == *mode) fail("train.modes", "duplicate mode '" + m.get<std::string>() + "'");
        }
        cfg.train.modes.push_back(*mode);
      }
    }
    cfg.train.repetitions = get_int(t, "train", "repetitions", cfg.train.repetitions);
    if (cfg.train.repetitions < 1) fail("train.repetitions", "must be at least 1");
    cfg.train.pretrain_iters = get_int(t, "train", "pretrain_iters", cfg.train.pretrain_iters);
    cfg.train.da_iters = get_int(t, "train", "da_iters", cfg.train.da_iters);
    if (cfg.train.pretrain_iters < 0 || cfg.train.da_iters < 0) {
      fail("train.pretrain_iters", "iteration counts must be non-negative");
    }
    cfg.train.lr_model = get_number(t, "train", "lr_model", cfg.train.lr_model);
    cfg.train.lr_da_model = get_number(t, "train", "lr_da_model", cfg.train.lr_da_model);
    cfg.train.lr_disc = get_number(t, "train", "lr_disc", cfg.train.lr_disc);
    cfg.train.lr_disc_p = get_number(t, "train", "lr_disc_p", cfg.train.lr_disc_p);
    if (cfg.train.lr_model <= 0) fail("train.lr_model", "must be positive");
    if (cfg.train.lr_da_model <= 0) fail("train.lr_da_model", "must be positive");
    if (cfg.train.lr_disc <= 0) fail("train.lr_disc", "must be positive");
    if (cfg.train.lr_disc_p <= 0) fail("train.lr_disc_p", "must be positive");
    cfg.train.momentum = get_number(t, "train", "momentum", cfg.train.momentum);
    if (cfg.train.momentum < 0 || cfg.train.momentum >= 1) {
      fail("train.momentum", "must be in [0,1)");
    }
    cfg.train.da_momentum = get_number(t, "train", "da_momentum", cfg.train.da_momentum);
    if (cfg.train.da_momentum < 0 || cfg.train.da_momentum >= 1) {
      fail("train.da_momentum", "must be in [0,1)");
    }
    cfg.train.batch_source = get_int(t, "train", "batch_source", cfg.train.batch_source);
    cfg.train.batch_target = get_int(t, "train", "batch_target", cfg.train.batch_target);
    if (cfg.train.batch_source < 1 || cfg.train.batch_target < 1) {
      fail("train.batch_source", "batch sizes must be at least 1");
    }
    if (t.contains("alpha") && !t.at("alpha").is_null()) {
      if (!t.at("alpha").is_number()) fail("train.alpha", "expected a number or null");
      cfg.train.alpha = t.at("alpha").get<double>();
      if (*cfg.train.alpha < 0) fail("train.alpha", "must be non-negative");
    }
    if (t.contains("a") && !t.at("a").is_null()) {
      const json& a = t.at("a");
      if (!a.is_array() || a.size() != 2) fail("train.a", "expected [a0, a1] or null");
      std::vector<double> values;
      for (const json& v : a) {
        if (!v.is_number() || v.get<double>() <= 0) {
          fail("train.a", "entries must be positive numbers");
        }
        values.push_back(v.get<double>());
      }
      cfg.train.a = values;
    }
    cfg.train.seed = get_seed(t, "train", "seed", cfg.train.seed);
    for (const char* key : {"decay_milestones", "da_decay_milestones"}) {
      if (!t.contains(key)) continue;
      const json& ms = t.at(key);
      const std::string path = std::string("train.") + key;
      if (!ms.is_array()) fail(path, "expected a list");
      std::vector<int>& dst = std::string(key) == "decay_milestones"
                                  ? cfg.train.decay_milestones
                                  : cfg.train.da_decay_milestones;
      dst.clear();
      for (const json& m : ms) {
        if (!m.is_number_integer() || m.get<int>() < 0) {
          fail(path, "expected non-negative integers");
        }
        dst.push_back(m.get<int>());
      }
    }
    cfg.train.pred_det_warmup =
        get_int(t, "train", "pred_det_warmup", cfg.train.pred_det_warmup);
    if (cfg.train.pred_det_warmup < 0) {
      fail("train.pred_det_warmup", "must be non-negative");
    }
    cfg.train.augment = get_bool(t, "train", "augment", cfg.train.augment);
    if (t.contains("channels")) {
      const json& ch = t.at("channels");
      if (!ch.is_array() || ch.empty()) fail("train.channels", "expected a non-empty list");
      cfg.train.channels.clear();
      for (const json& c : ch) {
        if (!c.is_number_integer() || c.get<int>() < 1) {
          fail("train.channels", "expected positive integers");
        }
        cfg.train.channels.push_back(c.get<int>());
      }
    }
    if (t.contains("templates")) {
      const json& ts = t.at("templates");
      if (!ts.is_array() || ts.empty()) fail("train.templates", "expected a non-empty list");
      cfg.train.templates.clear();
      for (const json& tmpl : ts) {
        if (!tmpl.is_array() || tmpl.size() != 2 || !tmpl[0].is_number() ||
            !tmpl[1].is_number() || tmpl[0].get<double>() <= 0 ||
            tmpl[1].get<double>() <= 0) {
          fail("train.templates", "expected [size, aspect] pairs of positive numbers");
        }
        cfg.train.templates.push_back({tmpl[0].get<double>(), tmpl[1].get<double>()});
      }
    }
    cfg.train.separate_heads = get_bool(t, "train", "separate_heads", cfg.train.separate_heads);
    cfg.train.presoftmax_vectors =
        get_bool(t, "train", "presoftmax_vectors", cfg.train.presoftmax_vectors);
  }

  if (root.contains("eval")) {
    const json& e = root.at("eval");
    if (!e.is_object()) fail("eval", "expected an object");
    check_keys(e, "eval", {"iou_threshold", "confidence_floor", "nms_threshold",
                           "report", "fixed_threshold"});
    cfg.eval.iou_threshold = get_number(e, "eval", "iou_threshold", cfg.eval.iou_threshold);
    cfg.eval.confidence_floor =
        get_number(e, "eval", "confidence_floor", cfg.eval.confidence_floor);
    cfg.eval.nms_threshold = get_number(e, "eval", "nms_threshold", cfg.eval.nms_threshold);
    for (const char* key : {"iou_threshold", "confidence_floor", "nms_threshold"}) {
      const double v = get_number(e, "eval", key, 0.5);
      if (v < 0 || v > 1) fail(std::string("eval.") + key, "must be in [0,1]");
    }
    if (e.contains("report")) {
      if (!e.at("report").is_string()) fail("eval.report", "expected a string");
      cfg.eval.report = e.at("report").get<std::string>();
      if (cfg.eval.report != "best_f1" && cfg.eval.report != "fixed") {
        fail("eval.report", "must be 'best_f1' or 'fixed'");
      }
    }
    cfg.eval.fixed_threshold =
        get_number(e, "eval", "fixed_threshold", cfg.eval.fixed_threshold);
    if (cfg.eval.fixed_threshold < 0 || cfg.eval.fixed_threshold > 1) {
      fail("eval.fixed_threshold", "must be in [0,1]");
    }
  }

  if (root.contains("output")) {
    const json& o = root.at("output");
    if (!o.is_object()) fail("output", "expected an object");
    check_keys(o, "output", {"directory"});
    if (o.contains("directory")) {
      if (!o.at("directory").is_string()) fail("output.directory", "expected a string");
      cfg.output_directory = o.at("directory").get<std::string>();
    }
  }
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f.good()) throw ConfigError("cannot open config file " + path.string());
  json root;
  try {
    root = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(root);
}

nlohmann::json resolved_json(const AppConfig& cfg) {
  json out;
  json& d = out["data"];
  d["shift"] = cfg.data.shift;
  d["seed"] = cfg.data.seed;
  d["image_side"] = cfg.data.image_side;
  d["source_train"] = cfg.data.source_train;
  d["target_train"] = cfg.data.target_train;
  d["target_test"] = cfg.data.target_test;
  d["target_labels"] = cfg.data.target_labels;
  d["source"] = domain_json(cfg.data.source);
  d["target"] = domain_json(cfg.data.target);

  json& t = out["train"];
  json modes = json::array();
  for (TrainMode m : cfg.train.modes) modes.push_back(to_string(m));
  t["modes"] = std::move(modes);
  t["repetitions"] = cfg.train.repetitions;
  t["pretrain_iters"] = cfg.train.pretrain_iters;
  t["da_iters"] = cfg.train.da_iters;
  t["lr_model"] = cfg.train.lr_model;
  t["lr_da_model"] = cfg.train.lr_da_model;
  t["lr_disc"] = cfg.train.lr_disc;
  t["lr_disc_p"] = cfg.train.lr_disc_p;
  t["momentum"] = cfg.train.momentum;
  t["da_momentum"] = cfg.train.da_momentum;
  t["batch_source"] = cfg.train.batch_source;
  t["batch_target"] = cfg.train.batch_target;
  t["alpha"] = cfg.train.alpha ? json(*cfg.train.alpha) : json(nullptr);
  t["a"] = cfg.train.a ? json(*cfg.train.a) : json(nullptr);
  t["seed"] = cfg.train.seed;
  t["decay_milestones"] = cfg.train.decay_milestones;
  t["da_decay_milestones"] = cfg.train.da_decay_milestones;
  t["pred_det_warmup"] = cfg.train.pred_det_warmup;
  t["augment"] = cfg.train.augment;
  t["channels"] = cfg.train.channels;
  json templates = json::array();
  for (const BoxTemplate& tmpl : cfg.train.templates) {
    templates.push_back({tmpl.size, tmpl.aspect});
  }
  t["templates"] = std::move(templates);
  t["separate_heads"] = cfg.train.separate_heads;
  t["presoftmax_vectors"] = cfg.train.presoftmax_vectors;

  json& e = out["eval"];
  e["iou_threshold"] = cfg.eval.iou_threshold;
  e["confidence_floor"] = cfg.eval.confidence_floor;
  e["nms_threshold"] = cfg.eval.nms_threshold;
  e["report"] = cfg.eval.report;
  e["fixed_threshold"] = cfg.eval.fixed_threshold;

  out["output"]["directory"] = cfg.output_directory;
  return out;
}

DatasetBundle build_datasets(const DataConfig& data) {
  DatasetBundle bundle;
  bundle.source_train = generate_dataset(
      {DatasetRole::source_train, data.source_train, derive_seed(data.seed, 0)},
      data.source);
  bundle.target_train = generate_dataset(
      {DatasetRole::target_train_unlabeled, data.target_train,
       derive_seed(data.seed, 1)},
      data.target);
  bundle.target_test = generate_dataset(
      {DatasetRole::target_test, data.target_test, derive_seed(data.seed, 2)},
      data.target);
  bundle.target_labels = generate_dataset(
      {DatasetRole::target_labels, data.target_labels, derive_seed(data.seed, 3)},
      data.target);
  return bundle;
}

TrainConfig single_train_config(const AppConfig& cfg, TrainMode mode) {
  TrainConfig out;
  out.mode = mode;
  out.pretrain_iters = cfg.train.pretrain_iters;
  out.da_iters = cfg.train.da_iters;
  out.lr_model = cfg.train.lr_model;
  out.lr_da_model = cfg.train.lr_da_model;
  out.lr_disc = cfg.train.lr_disc;
  out.lr_disc_p = cfg.train.lr_disc_p;
  out.momentum = cfg.train.momentum;
  out.da_momentum = cfg.train.da_momentum;
  out.batch_source = cfg.train.batch_source;
  out.batch_target = cfg.train.batch_target;
  out.alpha = cfg.train.alpha.value_or(default_alpha(mode));
  out.a = cfg.train.a.value_or(default_class_hyper(mode));
  out.seed = cfg.train.seed;
  out.decay_milestones = cfg.train.decay_milestones;
  out.da_decay_milestones = cfg.train.da_decay_milestones;
  out.pred_det_warmup = cfg.train.pred_det_warmup;
  out.augment = cfg.train.augment;
  out.presoftmax_vectors = cfg.train.presoftmax_vectors;
  out.detector.image_side = cfg.data.image_side;
  out.detector.channels = cfg.train.channels;
  out.detector.templates = cfg.train.templates;
  out.detector.separate_heads = cfg.train.separate_heads;
  return out;
}

std::vector<TrainConfig> mode_train_configs(const AppConfig& cfg) {
  std::vector<TrainConfig> out;
  for (TrainMode mode : cfg.train.modes) {
    out.push_back(single_train_config(cfg, mode));
  }
  return out;
}

EvalConfig eval_config(const AppConfig& cfg) {
  EvalConfig out;
  out.iou_threshold = cfg.eval.iou_threshold;
  out.confidence_floor = cfg.eval.confidence_floor;
  out.nms_threshold = cfg.eval.nms_threshold;
  out.fixed_report = cfg.eval.report == "fixed";
  out.fixed_threshold = cfg.eval.fixed_threshold;
  return out;
}

}  // namespace paln
