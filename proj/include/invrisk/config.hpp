#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "invrisk/attack.hpp"
#include "invrisk/defense.hpp"
#include "invrisk/risk.hpp"
#include "invrisk/shared_map.hpp"
#include "invrisk/synthetic.hpp"
#include "json.hpp"

namespace invrisk {

// Declarative network description: either a serialized network file or the
// parameters of a seeded generator.
struct NetworkSource {
  std::optional<std::string> file;
  Eigen::Index input_dim = 0;
  std::vector<Eigen::Index> hidden;
  Eigen::Index output_dim = 0;
  Activation activation = Activation::kTanh;
  std::uint64_t init_seed = 0;

  void validate() const;
  Network build() const;
};

// Declarative form of SharedMapSpec, kept separate so configs stay plain data
// that round-trips through JSON.
struct MapSource {
  MapMode mode = MapMode::kVflEmbedding;
  NetworkSource network;
  std::optional<LossKind> loss;
  std::optional<std::vector<double>> target;
  std::optional<int> label;
  std::optional<std::size_t> cut;

  SharedMapSpec build() const;
};

// Instance source: a synthetic generator, or a rank-2 IVT1 tensor file whose
// rows are instances. n_instances caps the rows taken from a file and is
// required for generators.
struct DatasetSpec {
  std::optional<SyntheticKind> generator;
  std::optional<std::string> tensor_file;
  std::size_t n_instances = 0;
  std::size_t dim = 0;
  GridSpectrum spectrum;

  void validate() const;
};

struct ExperimentConfig {
  MapSource map;
  DatasetSpec dataset;
  std::optional<DefenseSpec> defense;
  std::optional<AttackConfig> attack;
  std::vector<int> attack_tiers = {100, 500, 2000};
  std::optional<std::string> calibration;  // path to a calibration report
  double beta = 5.0;
  BandThresholds bands;
  std::uint64_t seed = 0;
  std::string output_dir = ".";

  void validate() const;
};

nlohmann::json to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const DefenseSpec& spec);
DefenseSpec defense_spec_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

// Parse with a ConfigError (not a library exception) on malformed text.
nlohmann::json parse_json(const std::string& text, const std::string& what);

// Recursive overlay: object keys of `patch` merge into `base`, everything
// else in `patch` replaces the base value. Used to let a config file override
// command-line flags.
nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& patch);

// FNV-1a hash of the canonical serialized config, as a hex string.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace invrisk
