#include "stpp/config_json.hpp"

#include <set>
#include <string>

namespace stpp {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError(context + ": unknown key '" + key + "'");
}

}  // namespace

seqdist::SubsetMode subset_mode_from_string(const std::string& s) {
  if (s == "singleton") return seqdist::SubsetMode::Singleton;
  if (s == "full") return seqdist::SubsetMode::Full;
  throw ConfigError("unknown subset_mode '" + s + "' (use 'singleton' or 'full')");
}

std::string subset_mode_to_string(seqdist::SubsetMode mode) {
  return mode == seqdist::SubsetMode::Singleton ? "singleton" : "full";
}

gw::GwConfig gw_config_from_json(const json& j) {
  reject_unknown_keys(j, {"proximal_weight", "outer_iters", "sinkhorn_iters", "tolerance"},
                      "gw config");
  gw::GwConfig cfg;
  cfg.proximal_weight = j.value("proximal_weight", cfg.proximal_weight);
  cfg.outer_iters = j.value("outer_iters", cfg.outer_iters);
  cfg.sinkhorn_iters = j.value("sinkhorn_iters", cfg.sinkhorn_iters);
  cfg.tolerance = j.value("tolerance", cfg.tolerance);
  return cfg;
}

json gw_config_to_json(const gw::GwConfig& config) {
  return json{{"proximal_weight", config.proximal_weight},
              {"outer_iters", config.outer_iters},
              {"sinkhorn_iters", config.sinkhorn_iters},
              {"tolerance", config.tolerance}};
}

train::TrainConfig train_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"tau", "reference_l", "subset_mode", "batch_size", "epochs",
                       "learning_rate", "optimizer", "seed", "resample_reference_each_epoch",
                       "embed_dim", "hidden_dim", "gw"},
                      "train config");
  train::TrainConfig cfg;
  cfg.tau = j.value("tau", cfg.tau);
  cfg.reference_l = j.value("reference_l", cfg.reference_l);
  if (j.contains("subset_mode"))
    cfg.subset_mode = subset_mode_from_string(j.at("subset_mode").get<std::string>());
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  if (j.contains("optimizer")) {
    const std::string opt = j.at("optimizer").get<std::string>();
    if (opt == "sgd")
      cfg.optimizer = train::Optimizer::Sgd;
    else if (opt == "adam")
      cfg.optimizer = train::Optimizer::Adam;
    else
      throw ConfigError("unknown optimizer '" + opt + "' (use 'sgd' or 'adam')");
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.resample_reference_each_epoch =
      j.value("resample_reference_each_epoch", cfg.resample_reference_each_epoch);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  if (j.contains("gw")) cfg.gw = gw_config_from_json(j.at("gw"));
  cfg.validate();
  return cfg;
}

json train_config_to_json(const train::TrainConfig& config) {
  return json{{"tau", config.tau},
              {"reference_l", config.reference_l},
              {"subset_mode", subset_mode_to_string(config.subset_mode)},
              {"batch_size", config.batch_size},
              {"epochs", config.epochs},
              {"learning_rate", config.learning_rate},
              {"optimizer", config.optimizer == train::Optimizer::Adam ? "adam" : "sgd"},
              {"seed", config.seed},
              {"resample_reference_each_epoch", config.resample_reference_each_epoch},
              {"embed_dim", config.embed_dim},
              {"hidden_dim", config.hidden_dim},
              {"gw", gw_config_to_json(config.gw)}};
}

}  // namespace stpp
