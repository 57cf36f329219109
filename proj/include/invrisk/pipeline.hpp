#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "invrisk/config.hpp"
#include "invrisk/metrics.hpp"
#include "invrisk/risk.hpp"
#include "invrisk/tensor.hpp"
#include "json.hpp"

namespace invrisk {

// One scored instance. Attack fields are present when the run included the
// matching attack; ssim only when instances are square images. The seed field
// is the instance's whole entropy lineage: config seed xor instance index.
struct InstanceRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  RiskReport risk;
  std::optional<double> ic_bound;              // drop defenses only
  std::optional<Eigen::Index> effective_rank;  // of the dropped Jacobian
  std::optional<std::vector<double>> mse_by_tier;
  std::optional<double> expected_mse;
  std::optional<double> attack_mse;
  std::optional<double> attack_psnr;  // capped at kPsnrCapDb
  std::optional<double> attack_ssim;
};

struct Aggregates {
  double mean_invre = 0.0;
  std::optional<CorrelationResult> invre_vs_expected_mse;
  std::optional<CorrelationResult> invre_vs_ssim;
};

struct RunRecord {
  int schema = 1;
  std::string toolkit_version;
  std::string timestamp;  // the only field allowed to differ between
                          // identical runs
  std::string config_fingerprint;
  Calibration calibration;
  std::vector<int> tiers;
  std::vector<InstanceRecord> instances;
  Aggregates aggregate;

  nlohmann::json to_json() const;
};

// One grid point of a defense sweep: aggregates across the batch plus the
// per-instance scores that produced them. Attack means are absent when the
// sweep ran without an attack config.
struct SweepPoint {
  double defense_param = 0.0;
  double mean_invre = 0.0;
  std::optional<double> mean_mse;
  std::optional<double> mean_psnr;
  std::optional<double> mean_ssim;
  double utility_proxy = 0.0;
  std::vector<double> invre;
};

struct SweepResult {
  RunRecord baseline;  // clean-batch scoring that fixed the calibration
  std::string utility_kind;
  std::vector<SweepPoint> points;

  // Plot-ready table: a header row then one row per grid point, with empty
  // cells for metrics the run did not compute.
  std::string csv() const;
  nlohmann::json to_json() const;
};

// Materializes cfg.dataset: runs the generator or reads the tensor file
// (rank 2, rows = instances, optionally capped by n_instances).
Tensor load_dataset(const ExperimentConfig& cfg);

// Scores every instance: Jacobian at the raw instance, spectral profile of
// the unit-normalized instance, InvRE against a batch-calibrated alpha (or
// one loaded from cfg.calibration). A configured defense is scored through
// the matching noisy-bound family.
RunRecord run_score(const ExperimentConfig& cfg);

// run_score plus the matching attack at every iteration tier, with quality
// metrics against the ground-truth instance and the tier-weighted expected
// reconstruction error.
RunRecord run_attack_eval(const ExperimentConfig& cfg);

// Re-runs scoring (and the attack at cfg.attack.iters, when configured) for
// each defense strength in `grid`, holding the clean-batch calibration and
// all per-instance random draws fixed so points differ only in strength.
SweepResult run_defense_sweep(const ExperimentConfig& cfg,
                              const std::vector<double>& grid);

// Fills aggregate correlations from the per-instance fields. Requires at
// least ten instances carrying both invre and expected mse.
void correlate(RunRecord& record);

// Same computation over a serialized report, for the CLI.
Aggregates correlate_record_json(const nlohmann::json& record);

// Singular values and cumulative mass share of one instance's Jacobian.
struct SpectrumTable {
  Eigen::VectorXd sigma;
  Eigen::VectorXd cumulative_mass;
};
SpectrumTable spectrum_of_instance(const ExperimentConfig& cfg,
                                   std::size_t index);

// Worker count for instance fan-out: INVRISK_THREADS, or the hardware
// concurrency when the variable is unset or zero.
std::size_t thread_budget();

}  // namespace invrisk
