#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stpp/gw.hpp"

namespace stpp::csvio {

// Doubles are formatted with 17 significant digits so files round-trip
// exactly.
std::string format_double(double v);

// Square or rectangular matrix with a header row of column ids.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                  const std::vector<std::string>& column_ids);

struct NamedMatrix {
  Eigen::MatrixXd matrix;
  std::vector<std::string> column_ids;
};
NamedMatrix read_matrix(const std::filesystem::path& path);

// Transport plan with its marginals carried as '# mu,...' / '# nu,...'
// metadata lines before the numeric rows.
void write_plan(const std::filesystem::path& path, const gw::TransportPlan& plan);
gw::TransportPlan read_plan(const std::filesystem::path& path);

// One row per sequence: id[,label],h_1..h_D.
void write_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const std::optional<std::vector<int>>& labels, const Eigen::MatrixXd& h);

}  // namespace stpp::csvio
