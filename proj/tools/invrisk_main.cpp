// invrisk: score, attack, defend, and sweep shared-artifact reconstruction
// risk from the command line. Flags mirror the experiment config document;
// a --config file overlays (and therefore overrides) whatever flags set.
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "invrisk/config.hpp"
#include "invrisk/errors.hpp"
#include "invrisk/io.hpp"
#include "invrisk/pipeline.hpp"
#include "invrisk/synthetic.hpp"
#include "json.hpp"

namespace {

using invrisk::ConfigError;

// Every value a flag can set, with presence tracked by CLI11 option counts.
// Only one subcommand parses, so sharing the storage across subcommands is
// safe.
struct Flags {
  std::string config_path;

  std::string mode;
  std::string network_file;
  long long input_dim = 0;
  std::vector<long long> hidden;
  long long output_dim = 0;
  std::string activation;
  std::uint64_t init_seed = 0;
  std::string loss;
  std::vector<double> target;
  int label = 0;
  std::uint64_t cut = 0;

  std::string generator;
  std::string tensor_file;
  std::uint64_t n_instances = 0;
  std::uint64_t dim = 0;
  double slope_min = 0.0;
  double slope_max = 0.0;

  std::string defense_kind;
  double delta = 0.0;
  double lambda = 0.0;
  double keep = 0.0;
  double skip = 0.0;
  std::string skip_mode;
  std::uint64_t defense_seed = 0;

  std::string distance;
  double tv_weight = 0.0;
  int iters = 0;
  double step_size = 0.0;
  std::uint64_t attack_seed = 0;
  std::string attack_init;
  std::vector<int> tiers;

  std::string calibration;
  double beta = 0.0;
  double band_minimal = 0.0;
  double band_high = 0.0;
  std::uint64_t seed = 0;
  std::string output_dir;
};

void add_experiment_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path,
                  "JSON config file; its values override flags");

  sub->add_option("--mode", f.mode, "hfl_gradient or vfl_embedding");
  sub->add_option("--network-file", f.network_file,
                  "serialized network JSON");
  sub->add_option("--input-dim", f.input_dim, "network input width");
  sub->add_option("--hidden", f.hidden, "hidden widths, comma separated")
      ->delimiter(',');
  sub->add_option("--output-dim", f.output_dim, "network output width");
  sub->add_option("--activation", f.activation,
                  "tanh, relu, sigmoid, or identity");
  sub->add_option("--init-seed", f.init_seed, "network weight seed");
  sub->add_option("--loss", f.loss,
                  "hfl loss: squared_error or cross_entropy");
  sub->add_option("--target", f.target, "hfl target vector")->delimiter(',');
  sub->add_option("--label", f.label, "hfl cross-entropy label");
  sub->add_option("--cut", f.cut, "vfl cut layer");

  sub->add_option("--generator", f.generator,
                  "synthetic dataset: gaussian or grid");
  sub->add_option("--tensor-file", f.tensor_file, "IVT1 dataset file");
  sub->add_option("--n", f.n_instances, "instance count");
  sub->add_option("--dim", f.dim, "instance dimension");
  sub->add_option("--slope-min", f.slope_min,
                  "grid generator: lowest decay exponent");
  sub->add_option("--slope-max", f.slope_max,
                  "grid generator: highest decay exponent");

  sub->add_option("--defense", f.defense_kind,
                  "dnp, gnp, enp, prune, dropout, invl_dnp, invl_gnp, "
                  "or invl_enp");
  sub->add_option("--delta", f.delta, "noise variance");
  sub->add_option("--lambda", f.lambda, "drop fraction");
  sub->add_option("--keep", f.keep, "adaptive: spectral keep fraction");
  sub->add_option("--skip", f.skip, "adaptive: spectral skip fraction");
  sub->add_option("--skip-mode", f.skip_mode, "mass or count");
  sub->add_option("--defense-seed", f.defense_seed, "defense noise seed");

  sub->add_option("--distance", f.distance, "attack distance: l2 or cosine");
  sub->add_option("--tv-weight", f.tv_weight,
                  "attack total-variation weight");
  sub->add_option("--iters", f.iters, "attack iterations");
  sub->add_option("--step-size", f.step_size, "attack step size");
  sub->add_option("--attack-seed", f.attack_seed, "attack seed");
  sub->add_option("--init", f.attack_init, "attack init: zeros or gaussian");
  sub->add_option("--tiers", f.tiers,
                  "attack effort tiers, comma separated iteration counts")
      ->delimiter(',');

  sub->add_option("--calibration", f.calibration,
                  "calibration file with alpha (and optional beta)");
  sub->add_option("--beta", f.beta, "score sharpness");
  sub->add_option("--band-minimal", f.band_minimal,
                  "risk band: minimal threshold");
  sub->add_option("--band-high", f.band_high, "risk band: high threshold");
  sub->add_option("--seed", f.seed, "experiment seed");
  sub->add_option("--output-dir", f.output_dir, "where reports are written");
}

// Flags become the base document; the config file (if any) merges on top.
nlohmann::json flags_to_json(const CLI::App& sub, const Flags& f) {
  nlohmann::json doc = nlohmann::json::object();
  const auto set = [&](const char* flag, const char* pointer,
                       nlohmann::json value) {
    if (sub.count(flag) > 0) {
      doc[nlohmann::json::json_pointer(pointer)] = std::move(value);
    }
  };
  set("--mode", "/map/mode", f.mode);
  set("--network-file", "/map/network/file", f.network_file);
  set("--input-dim", "/map/network/input_dim", f.input_dim);
  set("--hidden", "/map/network/hidden", f.hidden);
  set("--output-dim", "/map/network/output_dim", f.output_dim);
  set("--activation", "/map/network/activation", f.activation);
  set("--init-seed", "/map/network/init_seed", f.init_seed);
  set("--loss", "/map/loss", f.loss);
  set("--target", "/map/target", f.target);
  set("--label", "/map/label", f.label);
  set("--cut", "/map/cut", f.cut);

  set("--generator", "/dataset/generator", f.generator);
  set("--tensor-file", "/dataset/tensor_file", f.tensor_file);
  set("--n", "/dataset/n_instances", f.n_instances);
  set("--dim", "/dataset/dim", f.dim);
  set("--slope-min", "/dataset/slope_min", f.slope_min);
  set("--slope-max", "/dataset/slope_max", f.slope_max);

  set("--defense", "/defense/kind", f.defense_kind);
  set("--delta", "/defense/delta", f.delta);
  set("--lambda", "/defense/lambda", f.lambda);
  set("--keep", "/defense/spectral_keep", f.keep);
  set("--skip", "/defense/spectral_skip", f.skip);
  set("--skip-mode", "/defense/skip_mode", f.skip_mode);
  set("--defense-seed", "/defense/seed", f.defense_seed);

  set("--distance", "/attack/distance", f.distance);
  set("--tv-weight", "/attack/tv_weight", f.tv_weight);
  set("--iters", "/attack/iters", f.iters);
  set("--step-size", "/attack/step_size", f.step_size);
  set("--attack-seed", "/attack/seed", f.attack_seed);
  set("--init", "/attack/init", f.attack_init);
  set("--tiers", "/attack/tiers", f.tiers);

  set("--calibration", "/calibration", f.calibration);
  set("--beta", "/risk/beta", f.beta);
  set("--band-minimal", "/risk/minimal", f.band_minimal);
  set("--band-high", "/risk/high", f.band_high);
  set("--seed", "/seed", f.seed);
  set("--output-dir", "/output_dir", f.output_dir);
  return doc;
}

nlohmann::json merged_config(const CLI::App& sub, const Flags& f) {
  nlohmann::json doc = flags_to_json(sub, f);
  if (!f.config_path.empty()) {
    const nlohmann::json overlay = invrisk::parse_json(
        invrisk::read_text_file(f.config_path), "config file");
    doc = invrisk::merge_json(std::move(doc), overlay);
  }
  return doc;
}

void ensure_output_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw invrisk::IoError("cannot create output directory: " + dir);
  }
}

void write_report(const std::string& dir, const std::string& name,
                  const nlohmann::json& doc) {
  ensure_output_dir(dir);
  invrisk::write_text_file((std::filesystem::path(dir) / name).string(),
                           invrisk::dump_json(doc));
}

void print_json(const nlohmann::json& doc) {
  std::fputs(invrisk::dump_json(doc).c_str(), stdout);
}

int run_report_command(const CLI::App& sub, const Flags& f,
                       const std::string& report_name, bool need_defense,
                       bool need_attack) {
  nlohmann::json doc = merged_config(sub, f);
  if (need_attack && !doc.contains("attack")) {
    doc["attack"] = nlohmann::json::object();
  }
  const invrisk::ExperimentConfig cfg =
      invrisk::experiment_config_from_json(doc);
  if (need_defense && !cfg.defense.has_value()) {
    throw ConfigError("this subcommand requires a defense");
  }
  // `attack` always evaluates the attack; `defend` does when one is
  // configured; `score` never does.
  const bool with_attack =
      need_attack || (need_defense && cfg.attack.has_value());
  const invrisk::RunRecord record =
      with_attack ? invrisk::run_attack_eval(cfg) : invrisk::run_score(cfg);
  const nlohmann::json out = record.to_json();
  write_report(cfg.output_dir, report_name, out);
  if (report_name == "score_report.json") {
    write_report(cfg.output_dir, "calibration.json",
                 {{"alpha", record.calibration.alpha},
                  {"beta", record.calibration.beta}});
  }
  print_json(out);
  return 0;
}

int run_sweep(const CLI::App& sub, const Flags& f,
              const std::vector<double>& grid) {
  const nlohmann::json doc = merged_config(sub, f);
  const invrisk::ExperimentConfig cfg =
      invrisk::experiment_config_from_json(doc);
  const invrisk::SweepResult result = invrisk::run_defense_sweep(cfg, grid);
  const nlohmann::json out = result.to_json();
  write_report(cfg.output_dir, "sweep_report.json", out);
  ensure_output_dir(cfg.output_dir);
  invrisk::write_text_file(
      (std::filesystem::path(cfg.output_dir) / "sweep_table.csv").string(),
      result.csv());
  print_json(out);
  return 0;
}

int run_correlate(const std::string& report_path) {
  const nlohmann::json doc = invrisk::parse_json(
      invrisk::read_text_file(report_path), "report file");
  const invrisk::Aggregates agg = invrisk::correlate_record_json(doc);
  nlohmann::json out;
  out["mean_invre"] = agg.mean_invre;
  if (agg.invre_vs_expected_mse.has_value()) {
    out["pearson_invre_mse"] = {{"r", agg.invre_vs_expected_mse->r},
                                {"p", agg.invre_vs_expected_mse->p_value},
                                {"n", agg.invre_vs_expected_mse->n}};
  }
  if (agg.invre_vs_ssim.has_value()) {
    out["pearson_invre_ssim"] = {{"r", agg.invre_vs_ssim->r},
                                 {"p", agg.invre_vs_ssim->p_value},
                                 {"n", agg.invre_vs_ssim->n}};
  }
  print_json(out);
  return 0;
}

int run_spectrum(const CLI::App& sub, const Flags& f, std::size_t instance) {
  const nlohmann::json doc = merged_config(sub, f);
  const invrisk::ExperimentConfig cfg =
      invrisk::experiment_config_from_json(doc);
  const invrisk::SpectrumTable table =
      invrisk::spectrum_of_instance(cfg, instance);
  std::string out = "index,sigma,cumulative_mass\n";
  char buf[96];
  for (Eigen::Index i = 0; i < table.sigma.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n",
                  static_cast<long long>(i), table.sigma(i),
                  table.cumulative_mass(i));
    out += buf;
  }
  std::fputs(out.c_str(), stdout);
  return 0;
}

int run_gen_data(const CLI::App& sub, const Flags& f,
                 const std::string& out_path) {
  const nlohmann::json doc = merged_config(sub, f);
  if (!doc.contains("dataset") || !doc.at("dataset").is_object()) {
    throw ConfigError("gen-data needs dataset settings");
  }
  const nlohmann::json& ds = doc.at("dataset");
  if (!ds.contains("generator")) {
    throw ConfigError("gen-data needs a generator kind");
  }
  const invrisk::SyntheticKind kind = invrisk::synthetic_kind_from_string(
      ds.at("generator").get<std::string>());
  const auto n = ds.contains("n_instances")
                     ? ds.at("n_instances").get<std::size_t>()
                     : 0;
  const auto dim = ds.contains("dim") ? ds.at("dim").get<std::size_t>() : 0;
  invrisk::GridSpectrum spectrum;
  if (ds.contains("slope_min")) {
    spectrum.slope_min = ds.at("slope_min").get<double>();
  }
  if (ds.contains("slope_max")) {
    spectrum.slope_max = ds.at("slope_max").get<double>();
  }
  const std::uint64_t seed =
      doc.contains("seed") ? doc.at("seed").get<std::uint64_t>() : 0;
  const invrisk::Tensor t =
      invrisk::generate_synthetic(kind, n, dim, seed, spectrum);
  invrisk::write_tensor(out_path, t);
  print_json({{"path", out_path},
              {"shape", t.shape()},
              {"kind", invrisk::to_string(kind)}});
  return 0;
}

void print_error(const char* code, const std::string& message) {
  nlohmann::json doc;
  doc["error"] = {{"code", code}, {"message", message}};
  std::fputs((invrisk::dump_json(doc, 0) + "\n").c_str(), stderr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction-risk toolkit for shared learning artifacts"};
  app.require_subcommand(1);

  Flags flags;
  std::vector<double> grid;
  std::size_t spectrum_instance = 0;
  std::string report_path;
  std::string gen_out;

  CLI::App* score = app.add_subcommand(
      "score", "Score a batch: per-instance InvRE and risk bands");
  CLI::App* attack = app.add_subcommand(
      "attack", "Score plus the matching attack at every effort tier");
  CLI::App* defend = app.add_subcommand(
      "defend", "Score a batch under a configured defense");
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Re-run scoring across a defense strength grid");
  CLI::App* correlate = app.add_subcommand(
      "correlate", "Recompute aggregate correlations from a report");
  CLI::App* spectrum = app.add_subcommand(
      "spectrum", "Dump one instance's singular values and mass shares");
  CLI::App* gen_data = app.add_subcommand(
      "gen-data", "Write a synthetic dataset as an IVT1 tensor file");

  for (CLI::App* sub : {score, attack, defend, sweep, spectrum, gen_data}) {
    add_experiment_flags(sub, flags);
  }
  sweep->add_option("--grid", grid,
                    "defense strengths to sweep, comma separated")
      ->delimiter(',')
      ->required();
  spectrum->add_option("--instance", spectrum_instance, "instance index");
  correlate->add_option("--report", report_path, "report JSON to correlate")
      ->required();
  gen_data->add_option("--out", gen_out, "output tensor path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", e.what());
    return 2;
  }

  try {
    if (score->parsed()) {
      return run_report_command(*score, flags, "score_report.json", false,
                                false);
    }
    if (attack->parsed()) {
      return run_report_command(*attack, flags, "attack_report.json", false,
                                true);
    }
    if (defend->parsed()) {
      return run_report_command(*defend, flags, "defend_report.json", true,
                                false);
    }
    if (sweep->parsed()) return run_sweep(*sweep, flags, grid);
    if (correlate->parsed()) return run_correlate(report_path);
    if (spectrum->parsed()) {
      return run_spectrum(*spectrum, flags, spectrum_instance);
    }
    if (gen_data->parsed()) return run_gen_data(*gen_data, flags, gen_out);
    print_error("config", "no subcommand given");
    return 2;
  } catch (const ConfigError& e) {
    print_error("config", e.what());
    return 2;
  } catch (const invrisk::NumericError& e) {
    print_error("numeric", e.what());
    return 3;
  } catch (const invrisk::IoError& e) {
    print_error("io", e.what());
    return 4;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}
