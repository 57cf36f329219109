#include "invrisk/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <string>
#include <utility>

#include "invrisk/errors.hpp"
#include "invrisk/io.hpp"

namespace invrisk {
namespace {

MapMode mode_from_string(const std::string& name) {
  if (name == "hfl_gradient") return MapMode::kHflGradient;
  if (name == "vfl_embedding") return MapMode::kVflEmbedding;
  throw ConfigError("unknown map mode: " + name);
}

std::string to_string(MapMode mode) {
  return mode == MapMode::kHflGradient ? "hfl_gradient" : "vfl_embedding";
}

LossKind loss_from_string(const std::string& name) {
  if (name == "squared_error") return LossKind::kSquaredError;
  if (name == "cross_entropy") return LossKind::kCrossEntropy;
  throw ConfigError("unknown loss kind: " + name);
}

std::string to_string(LossKind kind) {
  return kind == LossKind::kSquaredError ? "squared_error" : "cross_entropy";
}

Distance distance_from_string(const std::string& name) {
  if (name == "l2") return Distance::kL2;
  if (name == "cosine") return Distance::kCosine;
  throw ConfigError("unknown attack distance: " + name);
}

std::string to_string(Distance d) {
  return d == Distance::kL2 ? "l2" : "cosine";
}

AttackInit init_from_string(const std::string& name) {
  if (name == "zeros") return AttackInit::kZeros;
  if (name == "gaussian") return AttackInit::kGaussian;
  throw ConfigError("unknown attack init: " + name);
}

std::string to_string(AttackInit init) {
  return init == AttackInit::kZeros ? "zeros" : "gaussian";
}

SkipMode skip_mode_from_string(const std::string& name) {
  if (name == "mass") return SkipMode::kMass;
  if (name == "count") return SkipMode::kCount;
  throw ConfigError("unknown skip mode: " + name);
}

std::string to_string(SkipMode mode) {
  return mode == SkipMode::kMass ? "mass" : "count";
}

void require_object(const nlohmann::json& doc, const std::string& what) {
  if (!doc.is_object()) {
    throw ConfigError(what + " must be a JSON object");
  }
}

void reject_unknown_keys(const nlohmann::json& doc,
                         std::initializer_list<const char*> allowed,
                         const std::string& what) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* key) {
          return it.key() == key;
        }) == allowed.end()) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + what);
    }
  }
}

template <typename T>
T get_or(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("invalid value for \"") + key + "\"");
  }
}

NetworkSource network_source_from_json(const nlohmann::json& doc) {
  require_object(doc, "network");
  reject_unknown_keys(
      doc, {"file", "input_dim", "hidden", "output_dim", "activation",
            "init_seed"},
      "network");
  NetworkSource src;
  if (doc.contains("file")) {
    src.file = get_or<std::string>(doc, "file", "");
    return src;
  }
  src.input_dim = get_or<Eigen::Index>(doc, "input_dim", 0);
  src.hidden = get_or<std::vector<Eigen::Index>>(doc, "hidden", {});
  src.output_dim = get_or<Eigen::Index>(doc, "output_dim", 0);
  src.activation = activation_from_string(
      get_or<std::string>(doc, "activation", "tanh"));
  src.init_seed = get_or<std::uint64_t>(doc, "init_seed", 0);
  return src;
}

nlohmann::json network_source_to_json(const NetworkSource& src) {
  nlohmann::json doc;
  if (src.file.has_value()) {
    doc["file"] = *src.file;
    return doc;
  }
  doc["input_dim"] = src.input_dim;
  doc["hidden"] = src.hidden;
  doc["output_dim"] = src.output_dim;
  doc["activation"] = invrisk::to_string(src.activation);
  doc["init_seed"] = src.init_seed;
  return doc;
}

MapSource map_source_from_json(const nlohmann::json& doc) {
  require_object(doc, "map");
  reject_unknown_keys(doc, {"mode", "network", "loss", "target", "label", "cut"},
                      "map");
  if (!doc.contains("network")) {
    throw ConfigError("map requires a network");
  }
  MapSource map;
  map.mode = mode_from_string(get_or<std::string>(doc, "mode", "vfl_embedding"));
  map.network = network_source_from_json(doc.at("network"));
  if (doc.contains("loss")) {
    map.loss = loss_from_string(get_or<std::string>(doc, "loss", ""));
  }
  if (doc.contains("target")) {
    map.target = get_or<std::vector<double>>(doc, "target", {});
  }
  if (doc.contains("label")) {
    map.label = get_or<int>(doc, "label", 0);
  }
  if (doc.contains("cut")) {
    map.cut = get_or<std::size_t>(doc, "cut", 0);
  }
  return map;
}

nlohmann::json map_source_to_json(const MapSource& map) {
  nlohmann::json doc;
  doc["mode"] = to_string(map.mode);
  doc["network"] = network_source_to_json(map.network);
  if (map.loss.has_value()) doc["loss"] = to_string(*map.loss);
  if (map.target.has_value()) doc["target"] = *map.target;
  if (map.label.has_value()) doc["label"] = *map.label;
  if (map.cut.has_value()) doc["cut"] = *map.cut;
  return doc;
}

DatasetSpec dataset_from_json(const nlohmann::json& doc) {
  require_object(doc, "dataset");
  reject_unknown_keys(doc,
                      {"generator", "tensor_file", "n_instances", "dim",
                       "slope_min", "slope_max"},
                      "dataset");
  DatasetSpec ds;
  if (doc.contains("generator")) {
    ds.generator =
        synthetic_kind_from_string(get_or<std::string>(doc, "generator", ""));
  }
  if (doc.contains("tensor_file")) {
    ds.tensor_file = get_or<std::string>(doc, "tensor_file", "");
  }
  ds.n_instances = get_or<std::size_t>(doc, "n_instances", 0);
  ds.dim = get_or<std::size_t>(doc, "dim", 0);
  ds.spectrum.slope_min = get_or<double>(doc, "slope_min", ds.spectrum.slope_min);
  ds.spectrum.slope_max = get_or<double>(doc, "slope_max", ds.spectrum.slope_max);
  return ds;
}

nlohmann::json dataset_to_json(const DatasetSpec& ds) {
  nlohmann::json doc;
  if (ds.generator.has_value()) {
    doc["generator"] = invrisk::to_string(*ds.generator);
    doc["dim"] = ds.dim;
    if (*ds.generator == SyntheticKind::kGrid) {
      doc["slope_min"] = ds.spectrum.slope_min;
      doc["slope_max"] = ds.spectrum.slope_max;
    }
  }
  if (ds.tensor_file.has_value()) doc["tensor_file"] = *ds.tensor_file;
  doc["n_instances"] = ds.n_instances;
  return doc;
}

}  // namespace

void NetworkSource::validate() const {
  if (file.has_value()) {
    if (file->empty()) {
      throw ConfigError("network file path must not be empty");
    }
    return;
  }
  if (input_dim < 1 || output_dim < 1) {
    throw ConfigError("network generator needs positive input and output dims");
  }
  for (Eigen::Index h : hidden) {
    if (h < 1) {
      throw ConfigError("network hidden widths must be positive");
    }
  }
}

Network NetworkSource::build() const {
  validate();
  if (file.has_value()) {
    return Network::from_json(parse_json(read_text_file(*file), "network file"));
  }
  return Network::seeded(input_dim, hidden, output_dim, activation, init_seed);
}

SharedMapSpec MapSource::build() const {
  SharedMapSpec spec(network.build());
  spec.mode = mode;
  if (mode == MapMode::kHflGradient) {
    spec.loss = loss.value_or(LossKind::kSquaredError);
    if (*spec.loss == LossKind::kSquaredError) {
      Eigen::VectorXd t = Eigen::VectorXd::Zero(spec.network.output_dim());
      if (target.has_value()) {
        t = Eigen::Map<const Eigen::VectorXd>(
            target->data(), static_cast<Eigen::Index>(target->size()));
      }
      spec.target = std::move(t);
    } else {
      spec.label = label;
    }
  } else {
    spec.cut = cut.value_or(spec.network.layer_count());
  }
  spec.validate();
  return spec;
}

void DatasetSpec::validate() const {
  if (generator.has_value() == tensor_file.has_value()) {
    throw ConfigError(
        "dataset needs exactly one of a generator or a tensor file");
  }
  if (generator.has_value()) {
    if (n_instances < 1) {
      throw ConfigError("dataset needs n_instances of at least one");
    }
    if (dim < 2) {
      throw ConfigError("dataset dim must be at least two");
    }
    if (!(spectrum.slope_min <= spectrum.slope_max) ||
        spectrum.slope_min < 0.0) {
      throw ConfigError("grid spectrum slopes must satisfy 0 <= min <= max");
    }
  } else if (tensor_file->empty()) {
    throw ConfigError("dataset tensor file path must not be empty");
  }
}

void ExperimentConfig::validate() const {
  map.network.validate();
  dataset.validate();
  if (defense.has_value()) defense->validate();
  if (attack.has_value()) {
    if (attack->iters < 1) {
      throw ConfigError("attack iterations must be at least one");
    }
    if (attack->step_size <= 0.0) {
      throw ConfigError("attack step size must be positive");
    }
    if (attack->tv_weight < 0.0) {
      throw ConfigError("attack tv weight must be nonnegative");
    }
    if (attack_tiers.empty()) {
      throw ConfigError("attack tiers must be non-empty");
    }
    for (int t : attack_tiers) {
      if (t < 1) {
        throw ConfigError("attack tiers must be positive iteration counts");
      }
    }
  }
  if (beta <= 0.0) {
    throw ConfigError("risk beta must be positive");
  }
  if (!(bands.minimal > 0.0 && bands.minimal < bands.high &&
        bands.high < 1.0)) {
    throw ConfigError("band thresholds must satisfy 0 < minimal < high < 1");
  }
  if (output_dir.empty()) {
    throw ConfigError("output directory must not be empty");
  }
}

nlohmann::json to_json(const AttackConfig& cfg) {
  nlohmann::json doc;
  doc["distance"] = to_string(cfg.distance);
  doc["tv_weight"] = cfg.tv_weight;
  doc["iters"] = cfg.iters;
  doc["step_size"] = cfg.step_size;
  doc["seed"] = cfg.seed;
  doc["init"] = to_string(cfg.init);
  return doc;
}

AttackConfig attack_config_from_json(const nlohmann::json& doc) {
  require_object(doc, "attack");
  reject_unknown_keys(
      doc, {"distance", "tv_weight", "iters", "step_size", "seed", "init",
            "tiers"},
      "attack");
  AttackConfig cfg;
  cfg.distance = distance_from_string(get_or<std::string>(doc, "distance", "l2"));
  cfg.tv_weight = get_or<double>(doc, "tv_weight", cfg.tv_weight);
  cfg.iters = get_or<int>(doc, "iters", cfg.iters);
  cfg.step_size = get_or<double>(doc, "step_size", cfg.step_size);
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.init = init_from_string(get_or<std::string>(doc, "init", "zeros"));
  return cfg;
}

nlohmann::json to_json(const DefenseSpec& spec) {
  nlohmann::json doc;
  doc["kind"] = to_string(spec.kind);
  if (spec.is_additive_noise()) doc["delta"] = spec.delta.value_or(0.0);
  if (spec.is_drop()) doc["lambda"] = spec.lambda.value_or(0.0);
  if (spec.is_adaptive()) {
    doc["spectral_keep"] = spec.spectral_keep;
    if (spec.kind != DefenseKind::kInvlDnp) {
      doc["spectral_skip"] = spec.spectral_skip;
      doc["skip_mode"] = to_string(spec.skip_mode);
    }
  }
  if (spec.is_additive_noise() || spec.kind == DefenseKind::kDropout) {
    doc["seed"] = spec.seed;
  }
  return doc;
}

DefenseSpec defense_spec_from_json(const nlohmann::json& doc) {
  require_object(doc, "defense");
  reject_unknown_keys(doc,
                      {"kind", "delta", "lambda", "spectral_keep",
                       "spectral_skip", "skip_mode", "seed"},
                      "defense");
  DefenseSpec spec;
  spec.kind = defense_kind_from_string(get_or<std::string>(doc, "kind", ""));
  if (doc.contains("delta")) spec.delta = get_or<double>(doc, "delta", 0.0);
  if (doc.contains("lambda")) spec.lambda = get_or<double>(doc, "lambda", 0.0);
  spec.spectral_keep = get_or<double>(doc, "spectral_keep", spec.spectral_keep);
  spec.spectral_skip = get_or<double>(doc, "spectral_skip", spec.spectral_skip);
  spec.skip_mode =
      skip_mode_from_string(get_or<std::string>(doc, "skip_mode", "mass"));
  spec.seed = get_or<std::uint64_t>(doc, "seed", 0);
  spec.validate();
  return spec;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json doc;
  doc["map"] = map_source_to_json(cfg.map);
  doc["dataset"] = dataset_to_json(cfg.dataset);
  if (cfg.defense.has_value()) doc["defense"] = to_json(*cfg.defense);
  if (cfg.attack.has_value()) {
    doc["attack"] = to_json(*cfg.attack);
    doc["attack"]["tiers"] = cfg.attack_tiers;
  }
  if (cfg.calibration.has_value()) doc["calibration"] = *cfg.calibration;
  doc["risk"] = {{"beta", cfg.beta},
                 {"minimal", cfg.bands.minimal},
                 {"high", cfg.bands.high}};
  doc["seed"] = cfg.seed;
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc) {
  require_object(doc, "config");
  reject_unknown_keys(doc,
                      {"map", "dataset", "defense", "attack", "calibration",
                       "risk", "seed", "output_dir"},
                      "config");
  if (!doc.contains("map") || !doc.contains("dataset")) {
    throw ConfigError("config requires both a map and a dataset");
  }
  ExperimentConfig cfg;
  cfg.map = map_source_from_json(doc.at("map"));
  cfg.dataset = dataset_from_json(doc.at("dataset"));
  if (doc.contains("defense")) {
    cfg.defense = defense_spec_from_json(doc.at("defense"));
  }
  if (doc.contains("attack")) {
    cfg.attack = attack_config_from_json(doc.at("attack"));
    cfg.attack_tiers =
        get_or<std::vector<int>>(doc.at("attack"), "tiers", cfg.attack_tiers);
  }
  if (doc.contains("calibration")) {
    cfg.calibration = get_or<std::string>(doc, "calibration", "");
  }
  if (doc.contains("risk")) {
    const nlohmann::json& risk = doc.at("risk");
    require_object(risk, "risk");
    reject_unknown_keys(risk, {"beta", "minimal", "high"}, "risk");
    cfg.beta = get_or<double>(risk, "beta", cfg.beta);
    cfg.bands.minimal = get_or<double>(risk, "minimal", cfg.bands.minimal);
    cfg.bands.high = get_or<double>(risk, "high", cfg.bands.high);
  }
  cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);
  cfg.output_dir = get_or<std::string>(doc, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed JSON in " + what + ": " + e.what());
  }
}

nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    return patch;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key())) {
      base[it.key()] = merge_json(base.at(it.key()), it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
  return base;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  const std::string canonical = dump_json(to_json(cfg), 0);
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return std::string(buf);
}

}  // namespace invrisk
