#pragma once

#include <filesystem>
#include <optional>

#include "stpp/types.hpp"

namespace stpp {

// Sidecar header for a JSONL dataset: "<file>.meta.json" next to the data.
std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

// Reads a JSON Lines dataset, one {"id", "events": [{"t","c"},...], "label"?}
// object per line. num_types and horizon come from the sidecar and/or the
// explicit arguments; when both are given they must agree. All invariants are
// validated; parse failures carry the line number.
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<int> num_types = std::nullopt,
                     std::optional<double> horizon = std::nullopt);

// Writes the JSONL file and its sidecar header. load_dataset reads the result
// back to an equal dataset.
void save_dataset(const Dataset& data, const std::filesystem::path& path);

}  // namespace stpp
