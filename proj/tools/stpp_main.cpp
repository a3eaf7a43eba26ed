// stpp: simulate, fit, and cluster event-sequence models from the command
// line. Subcommands write a manifest next to their outputs so any run can be
// reproduced from its artifacts.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stpp/cluster.hpp"
#include "stpp/config_json.hpp"
#include "stpp/csv.hpp"
#include "stpp/dataset_io.hpp"
#include "stpp/errors.hpp"
#include "stpp/gw.hpp"
#include "stpp/manifest.hpp"
#include "stpp/pipeline.hpp"
#include "stpp/simulate.hpp"
#include "stpp/threads.hpp"
#include "stpp/tpp.hpp"
#include "stpp/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = all cores
};

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw stpp::ConfigError("cannot open " + what + ": " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw stpp::ConfigError(what + " is not valid JSON: " + path.string());
  return j;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw stpp::DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw stpp::DataError("write failure on " + path.string());
}

// Manifest path for commands whose output is a single file.
fs::path manifest_for(const fs::path& out_file) {
  fs::path p = out_file;
  p += ".manifest.json";
  return p;
}

int run_simulate(const GlobalOpts& g, const fs::path& plan_path, const fs::path& out) {
  stpp::sim::SyntheticPlan plan = stpp::sim::load_plan(plan_path);
  plan.seed = g.seed;
  stpp::RunManifest manifest("simulate", json{{"plan", plan_path.string()}, {"out", out.string()}},
                             g.seed);
  manifest.add_input(plan_path);
  manifest.write_started(manifest_for(out));
  stpp::Dataset data = stpp::sim::make_synthetic(plan);
  stpp::save_dataset(data, out);
  manifest.write_finished(manifest_for(out), true);
  std::cout << "wrote " << data.sequences.size() << " sequences to " << out.string() << "\n";
  return kExitOk;
}

int run_kernel(const GlobalOpts& g, const fs::path& data_path, const std::string& mode_str,
               const std::string& sigma_str, bool squared, std::optional<int> num_types,
               std::optional<double> horizon, const fs::path& out) {
  const auto mode = stpp::subset_mode_from_string(mode_str);
  stpp::Dataset data = stpp::load_dataset(data_path, num_types, horizon);
  stpp::RunManifest manifest("kernel",
                             json{{"data", data_path.string()},
                                  {"mode", mode_str},
                                  {"sigma", sigma_str},
                                  {"squared", squared}},
                             g.seed);
  manifest.add_input(data_path);
  manifest.write_started(manifest_for(out));
  stpp::seqdist::DistanceMatrix d =
      stpp::seqdist::distance_matrix(data.sequences, mode, data.num_types, data.horizon);
  double sigma;
  if (sigma_str == "auto") {
    sigma = stpp::seqdist::median_bandwidth(d);
  } else {
    try {
      sigma = std::stod(sigma_str);
    } catch (const std::exception&) {
      throw stpp::ConfigError("--sigma must be 'auto' or a number");
    }
  }
  stpp::KernelMatrix kernel = stpp::seqdist::kernel_from_distances(d, sigma, squared);
  std::vector<std::string> ids;
  for (const auto& s : data.sequences) ids.push_back(s.id);
  stpp::csvio::write_matrix(out, kernel.entries(), ids);
  manifest.write_finished(manifest_for(out), true);
  std::cout << "wrote " << kernel.size() << "x" << kernel.size() << " kernel (sigma "
            << stpp::csvio::format_double(sigma) << ") to " << out.string() << "\n";
  return kExitOk;
}

stpp::KernelMatrix kernel_from_csv(const fs::path& path) {
  const auto named = stpp::csvio::read_matrix(path);
  return stpp::KernelMatrix(named.matrix);
}

int run_gw(const GlobalOpts& g, const fs::path& k1_path, const fs::path& k2_path,
           const stpp::gw::GwConfig& cfg, const fs::path& out) {
  stpp::KernelMatrix k1 = kernel_from_csv(k1_path);
  stpp::KernelMatrix k2 = kernel_from_csv(k2_path);
  stpp::RunManifest manifest("gw",
                             json{{"k1", k1_path.string()},
                                  {"k2", k2_path.string()},
                                  {"gw", stpp::gw_config_to_json(cfg)}},
                             g.seed);
  manifest.add_input(k1_path);
  manifest.add_input(k2_path);
  manifest.write_started(manifest_for(out));
  const Eigen::Index m = k1.entries().rows();
  const Eigen::Index l = k2.entries().rows();
  const Eigen::VectorXd mu = Eigen::VectorXd::Constant(m, 1.0 / double(m));
  const Eigen::VectorXd nu = Eigen::VectorXd::Constant(l, 1.0 / double(l));
  stpp::gw::GwResult result = stpp::gw::solve(k1, k2, mu, nu, cfg);
  stpp::csvio::write_plan(out, result.plan);
  manifest.write_finished(manifest_for(out), true);
  std::cout << "gw_squared " << stpp::csvio::format_double(result.gw_squared) << " after "
            << result.objective_trace.size() << " iterations; plan written to " << out.string()
            << "\n";
  return kExitOk;
}

int run_train(const GlobalOpts& g, const fs::path& data_path, const fs::path& config_path,
              std::optional<int> num_types, std::optional<double> horizon, const fs::path& out_dir,
              bool seed_given) {
  json config_json = read_json_file(config_path, "train config");
  stpp::train::TrainConfig config = stpp::train_config_from_json(config_json);
  if (seed_given) config.seed = g.seed;
  stpp::Dataset data = stpp::load_dataset(data_path, num_types, horizon);
  fs::create_directories(out_dir);
  stpp::RunManifest manifest("train", stpp::train_config_to_json(config), config.seed);
  manifest.add_input(data_path);
  manifest.add_input(config_path);
  const fs::path manifest_path = out_dir / "manifest.json";
  manifest.write_started(manifest_path);

  stpp::train::FitResult fit;
  try {
    fit = stpp::train::fit(data, config);
  } catch (const stpp::train::TrainAbort& abort) {
    const fs::path last_good = out_dir / "last_good_checkpoint.json";
    stpp::tpp::save_checkpoint(abort.last_good, last_good);
    manifest.write_finished(manifest_path, false);
    std::string ids;
    for (const auto& id : abort.batch_ids) ids += (ids.empty() ? "" : ", ") + id;
    std::cerr << "error: " << abort.what() << " (batch: " << ids << "); last good parameters in "
              << last_good.string() << "\n";
    return kExitNumeric;
  }

  const fs::path checkpoint = out_dir / "checkpoint.json";
  stpp::tpp::save_checkpoint(fit.params, checkpoint);
  fit.report.checkpoint_path = checkpoint.string();

  std::ofstream metrics(out_dir / "metrics.csv");
  metrics << "epoch,mean_nll,gw_squared,objective\n";
  json epochs = json::array();
  for (std::size_t i = 0; i < fit.report.epochs.size(); ++i) {
    const auto& e = fit.report.epochs[i];
    metrics << i << "," << stpp::csvio::format_double(e.mean_nll) << ","
            << stpp::csvio::format_double(e.gw_squared) << ","
            << stpp::csvio::format_double(e.objective) << "\n";
    epochs.push_back({{"epoch", i},
                      {"mean_nll", e.mean_nll},
                      {"gw_squared", e.gw_squared},
                      {"objective", e.objective}});
  }
  write_json_file(out_dir / "report.json", json{{"epochs", epochs},
                                                {"checkpoint", fit.report.checkpoint_path},
                                                {"wall_seconds", fit.report.wall_seconds}});
  manifest.write_finished(manifest_path, true);
  std::cout << "trained " << config.epochs << " epochs; final mean NLL "
            << stpp::csvio::format_double(fit.report.epochs.back().mean_nll) << "; outputs in "
            << out_dir.string() << "\n";
  return kExitOk;
}

int run_evaluate(const GlobalOpts& g, const fs::path& data_path, const fs::path& model_path,
                 std::optional<int> num_types, std::optional<double> horizon,
                 const fs::path& out) {
  stpp::Dataset data = stpp::load_dataset(data_path, num_types, horizon);
  stpp::tpp::TppParams params = stpp::tpp::load_checkpoint(model_path);
  if (params.dims.num_types != data.num_types)
    throw stpp::DataError("checkpoint and dataset disagree on the number of event types");
  stpp::RunManifest manifest(
      "evaluate", json{{"data", data_path.string()}, {"model", model_path.string()}}, g.seed);
  manifest.add_input(data_path);
  manifest.add_input(model_path);
  manifest.write_started(manifest_for(out));
  const stpp::train::EvalResult eval = stpp::train::evaluate_model(params, data);
  write_json_file(out, json{{"ell", eval.ell}, {"acc", eval.acc}});
  manifest.write_finished(manifest_for(out), true);
  std::cout << "ell " << stpp::csvio::format_double(eval.ell) << " acc "
            << stpp::csvio::format_double(eval.acc) << "\n";
  return kExitOk;
}

int run_cluster(const GlobalOpts& g, const fs::path& kernel_path, int k,
                const std::optional<fs::path>& labels_path, std::optional<int> num_types,
                std::optional<double> horizon, const fs::path& out) {
  const auto named = stpp::csvio::read_matrix(kernel_path);
  stpp::KernelMatrix kernel(named.matrix);
  stpp::RunManifest manifest("cluster", json{{"kernel", kernel_path.string()}, {"k", k}}, g.seed);
  manifest.add_input(kernel_path);
  manifest.write_started(manifest_for(out));
  std::vector<int> labels = stpp::cluster::spectral_cluster(kernel, k, g.seed);
  json report{{"labels", labels}, {"k", k}};
  if (labels_path) {
    stpp::Dataset data = stpp::load_dataset(*labels_path, num_types, horizon);
    if (data.sequences.size() != labels.size())
      throw stpp::DataError("kernel size does not match the labeled dataset size");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (data.sequences[i].id != named.column_ids[i])
        throw stpp::DataError("kernel header ids do not match the dataset sequence order");
    const auto scored = stpp::cluster::score_labels(labels, data, k);
    report["nmi"] = scored.nmi;
    report["rand_index"] = scored.rand_index;
  }
  write_json_file(out, report);
  manifest.write_finished(manifest_for(out), true);
  if (report.contains("nmi"))
    std::cout << "nmi " << stpp::csvio::format_double(report["nmi"].get<double>()) << " ri "
              << stpp::csvio::format_double(report["rand_index"].get<double>()) << "\n";
  else
    std::cout << "wrote labels to " << out.string() << "\n";
  return kExitOk;
}

int run_embed(const GlobalOpts& g, const fs::path& model_path, const fs::path& data_path,
              std::optional<int> num_types, std::optional<double> horizon, const fs::path& out) {
  stpp::Dataset data = stpp::load_dataset(data_path, num_types, horizon);
  stpp::tpp::TppParams params = stpp::tpp::load_checkpoint(model_path);
  if (params.dims.num_types != data.num_types)
    throw stpp::DataError("checkpoint and dataset disagree on the number of event types");
  stpp::RunManifest manifest(
      "embed", json{{"model", model_path.string()}, {"data", data_path.string()}}, g.seed);
  manifest.add_input(model_path);
  manifest.add_input(data_path);
  manifest.write_started(manifest_for(out));
  std::vector<const stpp::EventSequence*> all;
  std::vector<std::string> ids;
  bool all_labeled = true;
  for (const auto& s : data.sequences) {
    all.push_back(&s);
    ids.push_back(s.id);
    all_labeled = all_labeled && s.label.has_value();
  }
  const auto encodings = stpp::tpp::encode_batch(params, all);
  Eigen::MatrixXd h(Eigen::Index(encodings.size()), params.dims.hidden_dim);
  for (std::size_t i = 0; i < encodings.size(); ++i)
    h.row(Eigen::Index(i)) = encodings[i].sequence_embedding.transpose();
  std::optional<std::vector<int>> labels;
  if (all_labeled) {
    labels.emplace();
    for (const auto& s : data.sequences) labels->push_back(*s.label);
  }
  stpp::csvio::write_embeddings(out, ids, labels, h);
  manifest.write_finished(manifest_for(out), true);
  std::cout << "wrote " << encodings.size() << " embeddings to " << out.string() << "\n";
  return kExitOk;
}

int run_pipeline_cmd(const GlobalOpts& g, const fs::path& config_path, const fs::path& out_dir,
                     bool seed_given) {
  json config = read_json_file(config_path, "pipeline config");
  std::optional<std::uint64_t> seed_override;
  if (seed_given) seed_override = g.seed;
  fs::create_directories(out_dir);
  stpp::RunManifest manifest("pipeline", config,
                             seed_given ? g.seed : config.value("seed", std::uint64_t(0)));
  manifest.add_input(config_path);
  const fs::path manifest_path = out_dir / "manifest.json";
  manifest.write_started(manifest_path);
  json summary = stpp::pipeline::run_pipeline(config, out_dir, seed_override);
  manifest.write_finished(manifest_path, true);
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structure-enhanced temporal point process toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  bool seed_given = false;
  app.add_option("--seed", g.seed, "random seed (default 0)")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--threads", g.threads, "worker threads; 1 = fully serial (default: all cores)");

  auto* sim_cmd = app.add_subcommand("simulate", "generate a labeled synthetic dataset");
  fs::path sim_plan, sim_out;
  sim_cmd->add_option("--plan", sim_plan, "plan JSON file")->required();
  sim_cmd->add_option("--out", sim_out, "output JSONL path")->required();

  auto* ker_cmd = app.add_subcommand("kernel", "nonparametric sequence kernel as CSV");
  fs::path ker_data, ker_out;
  std::string ker_mode = "singleton", ker_sigma = "auto";
  bool ker_squared = false;
  std::optional<int> ker_types;
  std::optional<double> ker_horizon;
  ker_cmd->add_option("--data", ker_data, "dataset JSONL")->required();
  ker_cmd->add_option("--mode", ker_mode, "subset mode: singleton|full");
  ker_cmd->add_option("--sigma", ker_sigma, "bandwidth: auto|<value>");
  ker_cmd->add_flag("--squared", ker_squared, "use squared distances in the exponent");
  ker_cmd->add_option("--num-types", ker_types, "event type count (overrides sidecar)");
  ker_cmd->add_option("--horizon", ker_horizon, "time horizon (overrides sidecar)");
  ker_cmd->add_option("--out", ker_out, "output CSV path")->required();

  auto* gw_cmd = app.add_subcommand("gw", "Gromov-Wasserstein coupling of two kernels");
  fs::path gw_k1, gw_k2, gw_out;
  stpp::gw::GwConfig gw_cfg;
  gw_cmd->add_option("--k1", gw_k1, "first kernel CSV")->required();
  gw_cmd->add_option("--k2", gw_k2, "second kernel CSV")->required();
  gw_cmd->add_option("--proximal-weight", gw_cfg.proximal_weight, "proximal weight");
  gw_cmd->add_option("--outer-iters", gw_cfg.outer_iters, "outer iterations");
  gw_cmd->add_option("--sinkhorn-iters", gw_cfg.sinkhorn_iters, "inner scaling iterations");
  gw_cmd->add_option("--tolerance", gw_cfg.tolerance, "outer stopping tolerance");
  gw_cmd->add_option("--out", gw_out, "output plan CSV")->required();

  auto* train_cmd = app.add_subcommand("train", "fit the model by regularized MLE");
  fs::path train_data, train_config, train_out;
  std::optional<int> train_types;
  std::optional<double> train_horizon;
  train_cmd->add_option("--data", train_data, "dataset JSONL")->required();
  train_cmd->add_option("--config", train_config, "train config JSON")->required();
  train_cmd->add_option("--num-types", train_types, "event type count (overrides sidecar)");
  train_cmd->add_option("--horizon", train_horizon, "time horizon (overrides sidecar)");
  train_cmd->add_option("--out", train_out, "output run directory")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "log-likelihood per event and type accuracy");
  fs::path eval_data, eval_model, eval_out;
  std::optional<int> eval_types;
  std::optional<double> eval_horizon;
  eval_cmd->add_option("--data", eval_data, "dataset JSONL")->required();
  eval_cmd->add_option("--model", eval_model, "model checkpoint JSON")->required();
  eval_cmd->add_option("--num-types", eval_types, "event type count (overrides sidecar)");
  eval_cmd->add_option("--horizon", eval_horizon, "time horizon (overrides sidecar)");
  eval_cmd->add_option("--out", eval_out, "output report JSON")->required();

  auto* clu_cmd = app.add_subcommand("cluster", "spectral clustering of a kernel CSV");
  fs::path clu_kernel, clu_out;
  std::optional<fs::path> clu_labels;
  std::optional<int> clu_types;
  std::optional<double> clu_horizon;
  int clu_k = 2;
  clu_cmd->add_option("--kernel", clu_kernel, "kernel CSV")->required();
  clu_cmd->add_option("--k", clu_k, "number of clusters")->required();
  clu_cmd->add_option("--labels", clu_labels, "labeled dataset JSONL for metrics");
  clu_cmd->add_option("--num-types", clu_types, "event type count (overrides sidecar)");
  clu_cmd->add_option("--horizon", clu_horizon, "time horizon (overrides sidecar)");
  clu_cmd->add_option("--out", clu_out, "output report JSON")->required();

  auto* emb_cmd = app.add_subcommand("embed", "export sequence embeddings as CSV");
  fs::path emb_model, emb_data, emb_out;
  std::optional<int> emb_types;
  std::optional<double> emb_horizon;
  emb_cmd->add_option("--model", emb_model, "model checkpoint JSON")->required();
  emb_cmd->add_option("--data", emb_data, "dataset JSONL")->required();
  emb_cmd->add_option("--num-types", emb_types, "event type count (overrides sidecar)");
  emb_cmd->add_option("--horizon", emb_horizon, "time horizon (overrides sidecar)");
  emb_cmd->add_option("--out", emb_out, "output CSV path")->required();

  auto* pipe_cmd = app.add_subcommand("pipeline", "simulate -> train -> evaluate -> cluster");
  fs::path pipe_config, pipe_out;
  pipe_cmd->add_option("--config", pipe_config, "pipeline config JSON")->required();
  pipe_cmd->add_option("--out", pipe_out, "output run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  stpp::threads::set_count(g.threads == 0 ? int(std::thread::hardware_concurrency()) : g.threads);

  try {
    if (*sim_cmd) return run_simulate(g, sim_plan, sim_out);
    if (*ker_cmd)
      return run_kernel(g, ker_data, ker_mode, ker_sigma, ker_squared, ker_types, ker_horizon,
                        ker_out);
    if (*gw_cmd) return run_gw(g, gw_k1, gw_k2, gw_cfg, gw_out);
    if (*train_cmd)
      return run_train(g, train_data, train_config, train_types, train_horizon, train_out,
                       seed_given);
    if (*eval_cmd)
      return run_evaluate(g, eval_data, eval_model, eval_types, eval_horizon, eval_out);
    if (*clu_cmd)
      return run_cluster(g, clu_kernel, clu_k, clu_labels, clu_types, clu_horizon, clu_out);
    if (*emb_cmd) return run_embed(g, emb_model, emb_data, emb_types, emb_horizon, emb_out);
    if (*pipe_cmd) return run_pipeline_cmd(g, pipe_config, pipe_out, seed_given);
  } catch (const stpp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const stpp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const stpp::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
