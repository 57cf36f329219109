#include "invrisk/pipeline.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <mutex>
#include <random>
#include <span>
#include <thread>
#include <utility>

#include "invrisk/attack.hpp"
#include "invrisk/defense.hpp"
#include "invrisk/errors.hpp"
#include "invrisk/io.hpp"
#include "invrisk/linalg.hpp"
#include "invrisk/shared_map.hpp"
#include "invrisk/synthetic.hpp"

#ifndef INVRISK_VERSION
#define INVRISK_VERSION "0.0.0"
#endif

namespace invrisk {
namespace {

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Fan instances out over the thread budget. Work items touch disjoint output
// slots, so the only shared state is the index counter.
void for_each_instance(std::size_t n,
                       const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t instance_seed(const ExperimentConfig& cfg, std::size_t index) {
  return cfg.seed ^ static_cast<std::uint64_t>(index);
}

// Everything batch-wide scoring needs, computed once on the clean data.
struct BatchContext {
  SharedMapSpec spec;
  Tensor data;
  std::size_t n = 0;
  Eigen::Index m = 0;
  Calibration cal;
  std::vector<Jacobian> jacobians;
  std::vector<Eigen::VectorXd> clean_shared;
  std::vector<SpectralProfile> clean_profiles;
  std::vector<int> labels;                  // two-class, from a seeded hyperplane
  std::optional<Jacobian> center_jacobian;  // class-center average, invl_gnp
};

Eigen::VectorXd unit_instance(const Eigen::VectorXd& x) {
  const double norm = x.norm();
  if (norm < 1e-300) {
    throw NumericError("cannot score an all-zero instance");
  }
  return x / norm;
}

// Two balanced-ish synthetic classes: a seeded random hyperplane through the
// batch mean. These labels drive the utility classifier and the class centers
// behind the averaged Jacobian.
std::vector<int> hyperplane_labels(const Tensor& data, std::uint64_t seed) {
  const std::size_t n = data.shape()[0];
  const auto m = static_cast<Eigen::Index>(data.shape()[1]);
  std::mt19937_64 rng(seed ^ 0xb5ad4eceda1ce2a9ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd w(m);
  for (Eigen::Index i = 0; i < m; ++i) w(i) = gauss(rng);
  Eigen::VectorXd proj(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    proj(static_cast<Eigen::Index>(i)) = w.dot(data.row(i));
  }
  const double bias = proj.mean();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = proj(static_cast<Eigen::Index>(i)) >= bias ? 1 : -1;
  }
  return labels;
}

Jacobian build_center_jacobian(const SharedMapSpec& spec, const Tensor& data,
                               const std::vector<int>& labels) {
  const std::size_t n = data.shape()[0];
  const auto m = static_cast<Eigen::Index>(data.shape()[1]);
  Eigen::VectorXd pos = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd neg = Eigen::VectorXd::Zero(m);
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 0) {
      pos += data.row(i);
      ++n_pos;
    } else {
      neg += data.row(i);
      ++n_neg;
    }
  }
  std::vector<Eigen::VectorXd> centers;
  if (n_pos > 0) centers.push_back(pos / static_cast<double>(n_pos));
  if (n_neg > 0) centers.push_back(neg / static_cast<double>(n_neg));
  return class_center_jacobian(spec, centers);
}

Calibration load_calibration(const std::string& path, double beta) {
  nlohmann::json doc = parse_json(read_text_file(path), "calibration file");
  if (doc.is_object() && doc.contains("calibration")) {
    doc = doc.at("calibration");
  }
  if (!doc.is_object() || !doc.contains("alpha") ||
      !doc.at("alpha").is_number()) {
    throw ConfigError("calibration file must carry a numeric alpha");
  }
  Calibration cal;
  cal.alpha = doc.at("alpha").get<double>();
  cal.beta = doc.contains("beta") ? doc.at("beta").get<double>() : beta;
  return cal;
}

BatchContext build_context(const ExperimentConfig& cfg) {
  BatchContext ctx{cfg.map.build(), load_dataset(cfg)};
  ctx.n = ctx.data.shape()[0];
  ctx.m = static_cast<Eigen::Index>(ctx.data.shape()[1]);
  if (ctx.m != ctx.spec.input_dim()) {
    throw ConfigError("dataset dimension does not match the network input");
  }
  ctx.jacobians.resize(ctx.n);
  ctx.clean_shared.resize(ctx.n);
  ctx.clean_profiles.resize(ctx.n);
  for_each_instance(ctx.n, [&](std::size_t i) {
    const Eigen::VectorXd x = ctx.data.row(i);
    ctx.jacobians[i] = jacobian(ctx.spec, x);
    ctx.clean_shared[i] = forward(ctx.spec, x);
    ctx.clean_profiles[i] = spectral_profile(ctx.jacobians[i], unit_instance(x));
  });
  ctx.labels = hyperplane_labels(ctx.data, cfg.seed);
  if (cfg.defense.has_value() && cfg.defense->kind == DefenseKind::kInvlGnp) {
    ctx.center_jacobian = build_center_jacobian(ctx.spec, ctx.data, ctx.labels);
  }
  if (cfg.calibration.has_value()) {
    ctx.cal = load_calibration(*cfg.calibration, cfg.beta);
  } else {
    ctx.cal = calibrate_alpha(ctx.clean_profiles);
    ctx.cal.beta = cfg.beta;
  }
  return ctx;
}

// One instance pushed through the configured defense: the risk report on the
// defended sharing, the artifact the attacker sees, and what the defense did
// to data and sharing for the utility proxies.
struct DefendedScore {
  RiskReport risk;
  Eigen::VectorXd shared;
  std::optional<Eigen::VectorXd> defended_input;
  double shared_distortion = 0.0;
  std::optional<double> ic_bound;
  std::optional<Eigen::Index> eff_rank;
};

DefendedScore score_instance(const BatchContext& ctx,
                             const ExperimentConfig& cfg, std::size_t i) {
  const Eigen::VectorXd x = ctx.data.row(i);
  const Eigen::VectorXd xu = unit_instance(x);
  DefendedScore out;
  if (!cfg.defense.has_value()) {
    out.risk = invre(ctx.clean_profiles[i], ctx.cal, cfg.bands);
    out.shared = ctx.clean_shared[i];
    return out;
  }

  DefenseSpec defense = *cfg.defense;
  defense.seed ^= instance_seed(cfg, i);
  const Jacobian& j = ctx.jacobians[i];
  switch (defense.kind) {
    case DefenseKind::kDnp: {
      const Eigen::VectorXd eps =
          gaussian_noise(ctx.m, *defense.delta, defense.seed);
      const SpectralProfile prof = spectral_profile(j, xu, eps);
      out.risk = invre(prof, ctx.cal, cfg.bands, BoundFamily::kDataNoise);
      out.defended_input = x + eps;
      out.shared = forward(ctx.spec, *out.defended_input);
      break;
    }
    case DefenseKind::kInvlDnp: {
      const AdaptiveNoise shaped = adaptive_noise_dnp(j, defense);
      const SpectralProfile prof = spectral_profile(j, xu, shaped.eps_hat);
      out.risk = invre(prof, ctx.cal, cfg.bands, BoundFamily::kDataNoise);
      out.defended_input = x + shaped.eps_hat;
      out.shared = forward(ctx.spec, *out.defended_input);
      break;
    }
    case DefenseKind::kGnp:
    case DefenseKind::kEnp: {
      const Eigen::VectorXd eps =
          gaussian_noise(j.g.rows(), *defense.delta, defense.seed);
      const SpectralProfile prof = spectral_profile(j, xu, eps);
      out.risk = invre(prof, ctx.cal, cfg.bands, BoundFamily::kSharingNoise);
      out.shared = ctx.clean_shared[i] + eps;
      break;
    }
    case DefenseKind::kInvlGnp:
    case DefenseKind::kInvlEnp: {
      // GNP shapes against the batch's class-center Jacobian (the scalable
      // variant); ENP shapes per instance.
      const Jacobian& shaping =
          defense.kind == DefenseKind::kInvlGnp && ctx.center_jacobian
              ? *ctx.center_jacobian
              : j;
      const AdaptiveNoise shaped = adaptive_noise_genp(shaping, defense);
      const SpectralProfile prof = spectral_profile(j, xu, shaped.eps_hat);
      out.risk = invre(prof, ctx.cal, cfg.bands, BoundFamily::kSharingNoise);
      out.shared = ctx.clean_shared[i] + shaped.eps_hat;
      break;
    }
    case DefenseKind::kPrune:
    case DefenseKind::kDropout: {
      const std::vector<Eigen::Index> drops =
          drop_indices(defense, ctx.clean_shared[i]);
      Jacobian dropped = j;
      Eigen::VectorXd shared = ctx.clean_shared[i];
      for (Eigen::Index idx : drops) {
        dropped.g.row(idx).setZero();
        shared(idx) = 0.0;
      }
      SpectralProfile prof = spectral_profile(dropped, xu);
      Eigen::Index rank = 0;
      if (prof.sigma.size() > 0) {
        const double cutoff = kSvTolerance * prof.sigma(0);
        for (Eigen::Index t = 0; t < prof.sigma.size(); ++t) {
          if (prof.sigma(t) > cutoff) ++rank;
        }
      }
      // Directions the dropped map no longer carries are not invertible at
      // any rank, so their energy belongs to the permanent residual rather
      // than to a recoverable band.
      for (Eigen::Index t = rank; t < prof.d; ++t) {
        prof.offspace_sq += prof.proj_x(t) * prof.proj_x(t);
        prof.proj_x(t) = 0.0;
      }
      out.risk = invre(prof, ctx.cal, cfg.bands);
      out.shared = std::move(shared);
      const Eigen::Index q =
          std::min<Eigen::Index>(static_cast<Eigen::Index>(drops.size()),
                                 ctx.clean_profiles[i].d);
      out.ic_bound = ic_lower_bound(ctx.clean_profiles[i], q);
      out.eff_rank = rank;
      break;
    }
  }
  const double clean_norm = std::max(ctx.clean_shared[i].norm(), 1e-300);
  out.shared_distortion = (out.shared - ctx.clean_shared[i]).norm() / clean_norm;
  return out;
}

struct AttackOutcome {
  std::vector<double> mse_by_tier;
  double expected = 0.0;
  double final_mse = 0.0;
  double psnr_capped = 0.0;
  std::optional<double> ssim_value;
};

bool is_square(Eigen::Index m) {
  const auto side = static_cast<Eigen::Index>(
      std::llround(std::sqrt(static_cast<double>(m))));
  return side >= 2 && side * side == m;
}

AttackOutcome attack_instance(const BatchContext& ctx,
                              const ExperimentConfig& cfg,
                              const Eigen::VectorXd& target,
                              const Eigen::VectorXd& truth,
                              std::uint64_t lineage,
                              std::span<const int> tiers) {
  AttackOutcome out;
  Eigen::VectorXd last_hat;
  for (int tier : tiers) {
    AttackConfig acfg = *cfg.attack;
    acfg.iters = tier;
    acfg.seed ^= lineage;
    const AttackResult res = matching_attack(ctx.spec, target, acfg);
    last_hat = res.x_hat;
    const std::vector<double> hat(res.x_hat.data(),
                                  res.x_hat.data() + res.x_hat.size());
    const std::vector<double> ref(truth.data(), truth.data() + truth.size());
    out.mse_by_tier.push_back(mse(hat, ref));
  }
  out.expected = expected_mse(out.mse_by_tier, tiers);
  out.final_mse = out.mse_by_tier.back();
  const std::vector<double> hat(last_hat.data(),
                                last_hat.data() + last_hat.size());
  const std::vector<double> ref(truth.data(), truth.data() + truth.size());
  out.psnr_capped = std::min(psnr(hat, ref), kPsnrCapDb);
  if (is_square(truth.size())) {
    out.ssim_value = ssim(hat, ref);
  }
  return out;
}

RunRecord make_record(const ExperimentConfig& cfg, const BatchContext& ctx) {
  RunRecord record;
  record.toolkit_version = INVRISK_VERSION;
  record.timestamp = utc_timestamp();
  record.config_fingerprint = config_fingerprint(cfg);
  record.calibration = ctx.cal;
  record.instances.resize(ctx.n);
  return record;
}

void fill_mean_invre(RunRecord& record) {
  double acc = 0.0;
  for (const InstanceRecord& inst : record.instances) acc += inst.risk.invre;
  record.aggregate.mean_invre =
      record.instances.empty() ? 0.0
                               : acc / static_cast<double>(record.instances.size());
}

nlohmann::json correlation_to_json(const std::optional<CorrelationResult>& c) {
  if (!c.has_value()) return nullptr;
  return {{"r", c->r}, {"p", c->p_value}, {"n", c->n}};
}

double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

std::string format_cell(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Tensor load_dataset(const ExperimentConfig& cfg) {
  cfg.dataset.validate();
  if (cfg.dataset.generator.has_value()) {
    return generate_synthetic(*cfg.dataset.generator, cfg.dataset.n_instances,
                              cfg.dataset.dim, cfg.seed,
                              cfg.dataset.spectrum);
  }
  Tensor t = read_tensor(*cfg.dataset.tensor_file);
  if (t.ndim() != 2) {
    throw ConfigError("dataset tensor must have rank 2 (instances by dim)");
  }
  const std::size_t rows = t.shape()[0];
  const std::size_t cols = t.shape()[1];
  if (rows < 1 || cols < 2) {
    throw ConfigError("dataset tensor needs at least one row and dim >= 2");
  }
  if (cfg.dataset.n_instances > 0 && cfg.dataset.n_instances < rows) {
    const std::size_t keep = cfg.dataset.n_instances;
    std::vector<double> head(t.data().begin(),
                             t.data().begin() +
                                 static_cast<std::ptrdiff_t>(keep * cols));
    return Tensor({keep, cols}, std::move(head));
  }
  return t;
}

RunRecord run_score(const ExperimentConfig& cfg) {
  cfg.validate();
  BatchContext ctx = build_context(cfg);
  RunRecord record = make_record(cfg, ctx);
  for_each_instance(ctx.n, [&](std::size_t i) {
    DefendedScore score = score_instance(ctx, cfg, i);
    InstanceRecord& inst = record.instances[i];
    inst.index = i;
    inst.seed = instance_seed(cfg, i);
    inst.risk = std::move(score.risk);
    inst.ic_bound = score.ic_bound;
    inst.effective_rank = score.eff_rank;
  });
  fill_mean_invre(record);
  return record;
}

RunRecord run_attack_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.attack.has_value()) {
    throw ConfigError("attack evaluation requires an attack config");
  }
  BatchContext ctx = build_context(cfg);
  RunRecord record = make_record(cfg, ctx);
  record.tiers = cfg.attack_tiers;
  for_each_instance(ctx.n, [&](std::size_t i) {
    DefendedScore score = score_instance(ctx, cfg, i);
    const AttackOutcome attack =
        attack_instance(ctx, cfg, score.shared, ctx.data.row(i),
                        instance_seed(cfg, i), cfg.attack_tiers);
    InstanceRecord& inst = record.instances[i];
    inst.index = i;
    inst.seed = instance_seed(cfg, i);
    inst.risk = std::move(score.risk);
    inst.ic_bound = score.ic_bound;
    inst.effective_rank = score.eff_rank;
    inst.mse_by_tier = attack.mse_by_tier;
    inst.expected_mse = attack.expected;
    inst.attack_mse = attack.final_mse;
    inst.attack_psnr = attack.psnr_capped;
    inst.attack_ssim = attack.ssim_value;
  });
  fill_mean_invre(record);
  if (ctx.n >= 10) {
    try {
      correlate(record);
    } catch (const NumericError&) {
      // Degenerate series (constant scores or errors) leave the aggregate
      // correlations unset; the per-instance data is still complete.
    }
  }
  return record;
}

void correlate(RunRecord& record) {
  std::vector<double> invre_vals;
  std::vector<double> mse_vals;
  std::vector<double> invre_for_ssim;
  std::vector<double> ssim_vals;
  for (const InstanceRecord& inst : record.instances) {
    if (inst.expected_mse.has_value()) {
      invre_vals.push_back(inst.risk.invre);
      mse_vals.push_back(*inst.expected_mse);
    }
    if (inst.attack_ssim.has_value()) {
      invre_for_ssim.push_back(inst.risk.invre);
      ssim_vals.push_back(*inst.attack_ssim);
    }
  }
  if (invre_vals.size() < 10) {
    throw ConfigError(
        "correlation needs at least ten instances with attack results");
  }
  record.aggregate.invre_vs_expected_mse = pearson(invre_vals, mse_vals);
  if (ssim_vals.size() >= 10) {
    try {
      record.aggregate.invre_vs_ssim = pearson(invre_for_ssim, ssim_vals);
    } catch (const NumericError&) {
      record.aggregate.invre_vs_ssim.reset();
    }
  }
}

Aggregates correlate_record_json(const nlohmann::json& record) {
  if (!record.is_object() || !record.contains("instances") ||
      !record.at("instances").is_array()) {
    throw ConfigError("report must carry an instances array");
  }
  RunRecord shim;
  for (const nlohmann::json& inst : record.at("instances")) {
    InstanceRecord rec;
    if (!inst.contains("invre") || !inst.at("invre").is_number()) {
      throw ConfigError("every instance needs a numeric invre");
    }
    rec.risk.invre = inst.at("invre").get<double>();
    if (inst.contains("attack") && inst.at("attack").is_object()) {
      const nlohmann::json& attack = inst.at("attack");
      if (attack.contains("expected_mse")) {
        rec.expected_mse = attack.at("expected_mse").get<double>();
      }
      if (attack.contains("ssim") && attack.at("ssim").is_number()) {
        rec.attack_ssim = attack.at("ssim").get<double>();
      }
    }
    shim.instances.push_back(std::move(rec));
  }
  correlate(shim);
  fill_mean_invre(shim);
  return shim.aggregate;
}

SweepResult run_defense_sweep(const ExperimentConfig& cfg,
                              const std::vector<double>& grid) {
  cfg.validate();
  if (!cfg.defense.has_value()) {
    throw ConfigError("defense sweep requires a defense config");
  }
  if (grid.empty()) {
    throw ConfigError("defense sweep requires a non-empty grid");
  }
  const bool noise_kind = cfg.defense->is_additive_noise();
  BatchContext ctx = build_context(cfg);

  SweepResult result;
  // Baseline: the clean batch under the shared calibration.
  {
    ExperimentConfig clean = cfg;
    clean.defense.reset();
    result.baseline = make_record(clean, ctx);
    for_each_instance(ctx.n, [&](std::size_t i) {
      DefendedScore score = score_instance(ctx, clean, i);
      InstanceRecord& inst = result.baseline.instances[i];
      inst.index = i;
      inst.seed = instance_seed(clean, i);
      inst.risk = std::move(score.risk);
    });
    fill_mean_invre(result.baseline);
  }

  const bool data_space = cfg.defense->acts_on_data();
  result.utility_kind = data_space ? "ridge_accuracy" : "relative_distortion";

  // Clean-trained ridge classifier for the data-space utility proxy. The
  // augmented column absorbs the intercept.
  Eigen::VectorXd ridge_w;
  if (data_space) {
    const auto n = static_cast<Eigen::Index>(ctx.n);
    Eigen::MatrixXd phi(n, ctx.m + 1);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      phi.row(i).head(ctx.m) = ctx.data.row(static_cast<std::size_t>(i));
      phi(i, ctx.m) = 1.0;
      y(i) = ctx.labels[static_cast<std::size_t>(i)];
    }
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += 1e-3 * static_cast<double>(ctx.n);
    ridge_w = gram.ldlt().solve(phi.transpose() * y);
  }

  for (double param : grid) {
    ExperimentConfig point_cfg = cfg;
    if (noise_kind) {
      point_cfg.defense->delta = param;
    } else {
      point_cfg.defense->lambda = param;
    }
    point_cfg.defense->validate();

    std::vector<DefendedScore> scores(ctx.n);
    std::vector<double> mses;
    std::vector<double> psnrs;
    std::vector<double> ssims;
    std::vector<std::optional<AttackOutcome>> attacks(ctx.n);
    for_each_instance(ctx.n, [&](std::size_t i) {
      scores[i] = score_instance(ctx, point_cfg, i);
      if (cfg.attack.has_value()) {
        const std::vector<int> single_tier{cfg.attack->iters};
        attacks[i] = attack_instance(ctx, point_cfg, scores[i].shared,
                                     ctx.data.row(i), instance_seed(cfg, i),
                                     single_tier);
      }
    });

    SweepPoint point;
    point.defense_param = param;
    std::vector<double> invre_vals;
    invre_vals.reserve(ctx.n);
    double distortion = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ctx.n; ++i) {
      invre_vals.push_back(scores[i].risk.invre);
      distortion += scores[i].shared_distortion;
      if (data_space) {
        const Eigen::VectorXd xd = scores[i].defended_input.has_value()
                                       ? *scores[i].defended_input
                                       : ctx.data.row(i);
        Eigen::VectorXd aug(ctx.m + 1);
        aug.head(ctx.m) = xd;
        aug(ctx.m) = 1.0;
        const int predicted = aug.dot(ridge_w) >= 0.0 ? 1 : -1;
        if (predicted == ctx.labels[i]) ++correct;
      }
      if (attacks[i].has_value()) {
        mses.push_back(attacks[i]->final_mse);
        psnrs.push_back(attacks[i]->psnr_capped);
        if (attacks[i]->ssim_value.has_value()) {
          ssims.push_back(*attacks[i]->ssim_value);
        }
      }
    }
    point.invre = invre_vals;
    point.mean_invre = mean_of(invre_vals);
    point.utility_proxy = data_space
                              ? static_cast<double>(correct) /
                                    static_cast<double>(ctx.n)
                              : distortion / static_cast<double>(ctx.n);
    if (!mses.empty()) {
      point.mean_mse = mean_of(mses);
      point.mean_psnr = mean_of(psnrs);
      if (!ssims.empty()) point.mean_ssim = mean_of(ssims);
    }
    result.points.push_back(std::move(point));
  }
  return result;
}

std::string SweepResult::csv() const {
  std::string out =
      "defense_param,mean_invre,mean_mse,mean_psnr,mean_ssim,utility_proxy\n";
  for (const SweepPoint& point : points) {
    out += format_cell(point.defense_param);
    out += ",";
    out += format_cell(point.mean_invre);
    out += ",";
    if (point.mean_mse.has_value()) out += format_cell(*point.mean_mse);
    out += ",";
    if (point.mean_psnr.has_value()) out += format_cell(*point.mean_psnr);
    out += ",";
    if (point.mean_ssim.has_value()) out += format_cell(*point.mean_ssim);
    out += ",";
    out += format_cell(point.utility_proxy);
    out += "\n";
  }
  return out;
}

nlohmann::json SweepResult::to_json() const {
  nlohmann::json doc;
  doc["schema"] = 1;
  doc["baseline"] = baseline.to_json();
  doc["utility_kind"] = utility_kind;
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepPoint& point : points) {
    nlohmann::json row;
    row["defense_param"] = point.defense_param;
    row["mean_invre"] = point.mean_invre;
    row["mean_mse"] =
        point.mean_mse.has_value() ? nlohmann::json(*point.mean_mse) : nullptr;
    row["mean_psnr"] = point.mean_psnr.has_value()
                           ? nlohmann::json(*point.mean_psnr)
                           : nullptr;
    row["mean_ssim"] = point.mean_ssim.has_value()
                           ? nlohmann::json(*point.mean_ssim)
                           : nullptr;
    row["utility_proxy"] = point.utility_proxy;
    row["invre"] = point.invre;
    rows.push_back(std::move(row));
  }
  doc["points"] = std::move(rows);
  return doc;
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json doc;
  doc["schema"] = schema;
  doc["toolkit_version"] = toolkit_version;
  doc["timestamp"] = timestamp;
  doc["config_fingerprint"] = config_fingerprint;
  doc["calibration"] = {{"alpha", calibration.alpha},
                        {"beta", calibration.beta}};
  if (!tiers.empty()) doc["tiers"] = tiers;
  nlohmann::json rows = nlohmann::json::array();
  for (const InstanceRecord& inst : instances) {
    nlohmann::json row;
    row["index"] = inst.index;
    row["seed"] = inst.seed;
    row["invre"] = inst.risk.invre;
    row["band"] = to_string(inst.risk.band);
    row["weighted_bound"] = inst.risk.weighted_bound;
    row["reciprocal_score"] = inst.risk.reciprocal_score;
    const std::size_t d = inst.risk.tau.empty() ? 0 : inst.risk.tau.size() - 1;
    row["tau_summary"] = {{"tau_0", inst.risk.tau.empty() ? 0.0
                                                          : inst.risk.tau.front()},
                          {"tau_d", inst.risk.tau.empty() ? 0.0
                                                          : inst.risk.tau.back()},
                          {"d", d}};
    if (inst.ic_bound.has_value()) row["ic_bound"] = *inst.ic_bound;
    if (inst.effective_rank.has_value()) {
      row["effective_rank"] = *inst.effective_rank;
    }
    if (inst.mse_by_tier.has_value()) {
      nlohmann::json attack;
      attack["mse_by_tier"] = *inst.mse_by_tier;
      attack["expected_mse"] = inst.expected_mse.value_or(0.0);
      attack["mse"] = inst.attack_mse.value_or(0.0);
      attack["psnr"] = inst.attack_psnr.value_or(0.0);
      if (inst.attack_ssim.has_value()) attack["ssim"] = *inst.attack_ssim;
      row["attack"] = std::move(attack);
    }
    rows.push_back(std::move(row));
  }
  doc["instances"] = std::move(rows);
  doc["aggregate"] = {
      {"mean_invre", aggregate.mean_invre},
      {"pearson_invre_mse", correlation_to_json(aggregate.invre_vs_expected_mse)},
      {"pearson_invre_ssim", correlation_to_json(aggregate.invre_vs_ssim)}};
  return doc;
}

SpectrumTable spectrum_of_instance(const ExperimentConfig& cfg,
                                   std::size_t index) {
  cfg.validate();
  const Tensor data = load_dataset(cfg);
  if (index >= data.shape()[0]) {
    throw ConfigError("spectrum instance index is out of range");
  }
  const SharedMapSpec spec = cfg.map.build();
  const Jacobian j = jacobian(spec, data.row(index));
  const SvdBundle s = svd(j.g);
  SpectrumTable table;
  table.sigma = s.sigma;
  table.cumulative_mass = Eigen::VectorXd::Zero(s.sigma.size());
  const double total = s.sigma.sum();
  double cum = 0.0;
  for (Eigen::Index i = 0; i < s.sigma.size(); ++i) {
    cum += s.sigma(i);
    table.cumulative_mass(i) = total > 0.0 ? cum / total : 0.0;
  }
  return table;
}

std::size_t thread_budget() {
  const char* raw = std::getenv("INVRISK_THREADS");
  std::size_t budget = 0;
  if (raw != nullptr && *raw != '\0') {
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(raw, &end, 10);
    if (end == raw || *end != '\0') {
      throw ConfigError("INVRISK_THREADS must be a nonnegative integer");
    }
    budget = static_cast<std::size_t>(std::min<unsigned long long>(parsed, 256));
  }
  if (budget == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    budget = hw == 0 ? 1 : hw;
  }
  return budget;
}

}  // namespace invrisk
