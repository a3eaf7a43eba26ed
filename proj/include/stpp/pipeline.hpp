#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "stpp/cluster.hpp"
#include "stpp/tpp.hpp"
#include "stpp/train.hpp"
#include "stpp/types.hpp"

namespace stpp::pipeline {

// Spectral clustering of the model's sequence-embedding kernel (median
// bandwidth), scored against the dataset labels.
cluster::ClusteringReport cluster_embeddings(const tpp::TppParams& params, const Dataset& data,
                                             int k, std::uint64_t seed);

// Runs simulate -> train -> evaluate -> cluster from one config, writing all
// stage outputs plus summary.json under out_dir. Returns the summary. A
// failing stage halts the pipeline and leaves completed artifacts in place.
nlohmann::json run_pipeline(const nlohmann::json& config, const std::filesystem::path& out_dir,
                            std::optional<std::uint64_t> seed_override);

}  // namespace stpp::pipeline
