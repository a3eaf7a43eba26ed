#include "stpp/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "stpp/errors.hpp"

namespace stpp::csvio {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t consumed = 0;
    const double v = std::stod(s, &consumed);
    if (consumed != s.size()) throw DataError(context + ": malformed number '" + s + "'");
    return v;
  } catch (const std::exception&) {
    throw DataError(context + ": malformed number '" + s + "'");
  }
}

}  // namespace

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                  const std::vector<std::string>& column_ids) {
  if (Eigen::Index(column_ids.size()) != m.cols())
    throw DataError("write_matrix: header length must match columns");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write csv: " + path.string());
  for (std::size_t j = 0; j < column_ids.size(); ++j)
    out << (j ? "," : "") << column_ids[j];
  out << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << format_double(m(i, j));
    out << "\n";
  }
  if (!out) throw DataError("write failure on csv: " + path.string());
}

NamedMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty csv: " + path.string());
  NamedMatrix out;
  out.column_ids = split_csv(line);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != out.column_ids.size())
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      " has the wrong number of cells");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells)
      row.push_back(parse_double(c, path.string() + ": line " + std::to_string(line_no)));
    rows.push_back(std::move(row));
  }
  out.matrix.resize(Eigen::Index(rows.size()), Eigen::Index(out.column_ids.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out.matrix(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  return out;
}

void write_plan(const std::filesystem::path& path, const gw::TransportPlan& plan) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write plan csv: " + path.string());
  out << "# mu";
  for (Eigen::Index i = 0; i < plan.row_marginal.size(); ++i)
    out << "," << format_double(plan.row_marginal[i]);
  out << "\n# nu";
  for (Eigen::Index j = 0; j < plan.col_marginal.size(); ++j)
    out << "," << format_double(plan.col_marginal[j]);
  out << "\n";
  for (Eigen::Index i = 0; i < plan.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.matrix.cols(); ++j)
      out << (j ? "," : "") << format_double(plan.matrix(i, j));
    out << "\n";
  }
  if (!out) throw DataError("write failure on plan csv: " + path.string());
}

gw::TransportPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open plan csv: " + path.string());
  std::string line;
  gw::TransportPlan plan;
  auto read_marginal = [&](const std::string& tag) {
    if (!std::getline(in, line) || line.rfind("# " + tag, 0) != 0)
      throw DataError(path.string() + ": expected '# " + tag + "' metadata line");
    auto cells = split_csv(line);
    Eigen::VectorXd v(Eigen::Index(cells.size()) - 1);
    for (std::size_t i = 1; i < cells.size(); ++i)
      v[Eigen::Index(i) - 1] = parse_double(cells[i], path.string());
    return v;
  };
  plan.row_marginal = read_marginal("mu");
  plan.col_marginal = read_marginal("nu");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    std::vector<double> row;
    for (const std::string& c : cells) row.push_back(parse_double(c, path.string()));
    rows.push_back(std::move(row));
  }
  if (Eigen::Index(rows.size()) != plan.row_marginal.size())
    throw DataError(path.string() + ": plan row count does not match mu");
  plan.matrix.resize(plan.row_marginal.size(), plan.col_marginal.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (Eigen::Index(rows[i].size()) != plan.col_marginal.size())
      throw DataError(path.string() + ": plan column count does not match nu");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      plan.matrix(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  }
  return plan;
}

void write_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const std::optional<std::vector<int>>& labels, const Eigen::MatrixXd& h) {
  if (Eigen::Index(ids.size()) != h.rows())
    throw DataError("write_embeddings: id count must match rows");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embeddings csv: " + path.string());
  out << "id";
  if (labels) out << ",label";
  for (Eigen::Index d = 0; d < h.cols(); ++d) out << ",h_" << (d + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    out << ids[std::size_t(i)];
    if (labels) out << "," << (*labels)[std::size_t(i)];
    for (Eigen::Index d = 0; d < h.cols(); ++d) out << "," << format_double(h(i, d));
    out << "\n";
  }
  if (!out) throw DataError("write failure on embeddings csv: " + path.string());
}

}  // namespace stpp::csvio
