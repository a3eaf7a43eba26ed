#include "stpp/pipeline.hpp"

#include <fstream>

#include "stpp/config_json.hpp"
#include "stpp/csv.hpp"
#include "stpp/dataset_io.hpp"
#include "stpp/manifest.hpp"
#include "stpp/rng.hpp"
#include "stpp/simulate.hpp"

namespace stpp::pipeline {

using nlohmann::json;

cluster::ClusteringReport cluster_embeddings(const tpp::TppParams& params, const Dataset& data,
                                             int k, std::uint64_t seed) {
  std::vector<const EventSequence*> all;
  all.reserve(data.sequences.size());
  for (const EventSequence& s : data.sequences) all.push_back(&s);
  const std::vector<tpp::EncodedSequence> encodings = tpp::encode_batch(params, all);
  const double sigma = tpp::median_embedding_bandwidth(encodings);
  const KernelMatrix kernel = tpp::embedding_kernel(encodings, sigma);
  return cluster::score_labels(cluster::spectral_cluster(kernel, k, seed), data, k);
}

namespace {

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failure on " + path.string());
}

const json& stage_block(const json& config, const char* name) {
  if (!config.contains(name))
    throw ConfigError(std::string("pipeline config: missing stage block '") + name + "'");
  return config.at(name);
}

std::string tau_dir_name(double tau) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "tau_%g", tau);
  return buf;
}

json epochs_to_json(const train::TrainReport& report) {
  json rows = json::array();
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    const train::EpochStats& e = report.epochs[i];
    rows.push_back({{"epoch", i},
                    {"mean_nll", e.mean_nll},
                    {"gw_squared", e.gw_squared},
                    {"objective", e.objective}});
  }
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, const train::TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,mean_nll,gw_squared,objective\n";
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    const train::EpochStats& e = report.epochs[i];
    out << i << "," << csvio::format_double(e.mean_nll) << ","
        << csvio::format_double(e.gw_squared) << "," << csvio::format_double(e.objective)
        << "\n";
  }
}

}  // namespace

json run_pipeline(const json& config, const std::filesystem::path& out_dir,
                  std::optional<std::uint64_t> seed_override) {
  if (!config.is_object()) throw ConfigError("pipeline config: expected a JSON object");
  for (const char* stage : {"simulate", "train", "evaluate", "cluster"}) stage_block(config, stage);
  const std::uint64_t seed =
      seed_override ? *seed_override : config.value("seed", std::uint64_t(0));

  std::filesystem::create_directories(out_dir);

  // simulate
  const json& sim_block = stage_block(config, "simulate");
  if (!sim_block.contains("plan"))
    throw ConfigError("pipeline config: simulate stage needs a 'plan' object");
  RunManifest sim_manifest("simulate", sim_block, seed);
  sim_manifest.write_started(out_dir / "simulate.manifest.json");
  Dataset data;
  {
    const json& plan_json = sim_block.at("plan");
    const auto plan_path = out_dir / "plan.json";
    write_json_file(plan_path, plan_json);
    sim::SyntheticPlan plan = sim::load_plan(plan_path);
    plan.seed = seed;
    data = sim::make_synthetic(plan);
    save_dataset(data, out_dir / "data.jsonl");
  }
  sim_manifest.add_input(out_dir / "plan.json");
  sim_manifest.write_finished(out_dir / "simulate.manifest.json", true);

  // train / evaluate / cluster per tau
  const json& train_block = stage_block(config, "train");
  json train_cfg_json = train_block;
  std::vector<double> taus;
  if (train_cfg_json.contains("taus")) {
    taus = train_cfg_json.at("taus").get<std::vector<double>>();
    train_cfg_json.erase("taus");
  }
  train::TrainConfig base_config = train_config_from_json(train_cfg_json);
  base_config.seed = seed;
  if (taus.empty()) taus.push_back(base_config.tau);

  const json& cluster_block = stage_block(config, "cluster");
  if (!cluster_block.contains("k"))
    throw ConfigError("pipeline config: cluster stage needs 'k'");
  const int k = cluster_block.at("k").get<int>();

  json runs = json::array();
  for (double tau : taus) {
    train::TrainConfig cfg = base_config;
    cfg.tau = tau;
    const auto run_dir = out_dir / tau_dir_name(tau);
    std::filesystem::create_directories(run_dir);

    RunManifest train_manifest("train", train_config_to_json(cfg), seed);
    train_manifest.add_input(out_dir / "data.jsonl");
    train_manifest.write_started(run_dir / "train.manifest.json");
    train::FitResult fit = train::fit(data, cfg);
    const auto checkpoint = run_dir / "checkpoint.json";
    tpp::save_checkpoint(fit.params, checkpoint);
    fit.report.checkpoint_path = checkpoint.string();
    write_metrics_csv(run_dir / "metrics.csv", fit.report);
    write_json_file(run_dir / "report.json",
                    json{{"epochs", epochs_to_json(fit.report)},
                         {"checkpoint", fit.report.checkpoint_path},
                         {"wall_seconds", fit.report.wall_seconds}});
    train_manifest.write_finished(run_dir / "train.manifest.json", true);

    RunManifest eval_manifest("evaluate", stage_block(config, "evaluate"), seed);
    eval_manifest.add_input(checkpoint);
    eval_manifest.write_started(run_dir / "evaluate.manifest.json");
    const train::EvalResult eval = train::evaluate_model(fit.params, data);
    write_json_file(run_dir / "eval.json", json{{"ell", eval.ell}, {"acc", eval.acc}});
    eval_manifest.write_finished(run_dir / "evaluate.manifest.json", true);

    RunManifest cluster_manifest("cluster", cluster_block, seed);
    cluster_manifest.write_started(run_dir / "cluster.manifest.json");
    const cluster::ClusteringReport report = cluster_embeddings(fit.params, data, k, seed);
    write_json_file(run_dir / "cluster.json",
                    json{{"labels", report.predicted_labels},
                         {"nmi", report.nmi},
                         {"rand_index", report.rand_index},
                         {"k", report.k}});
    cluster_manifest.write_finished(run_dir / "cluster.manifest.json", true);

    runs.push_back({{"tau", tau},
                    {"ell", eval.ell},
                    {"acc", eval.acc},
                    {"nmi", report.nmi},
                    {"rand_index", report.rand_index}});
  }

  const cluster::ClusteringReport baseline =
      cluster::dis_sc_baseline(data, k, base_config.subset_mode, seed);
  write_json_file(out_dir / "dis_sc.json",
                  json{{"labels", baseline.predicted_labels},
                       {"nmi", baseline.nmi},
                       {"rand_index", baseline.rand_index},
                       {"k", baseline.k}});

  json summary;
  summary["seed"] = seed;
  summary["runs"] = std::move(runs);
  summary["dis_sc"] = {{"nmi", baseline.nmi}, {"rand_index", baseline.rand_index}};
  write_json_file(out_dir / "summary.json", summary);
  return summary;
}

}  // namespace stpp::pipeline
