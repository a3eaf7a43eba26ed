#include "stpp/dataset_io.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

namespace stpp {

using nlohmann::json;

std::filesystem::path sidecar_path(const std::filesystem::path& data_path) {
  std::filesystem::path p = data_path;
  p += ".meta.json";
  return p;
}

namespace {

json parse_strict(const std::string& text, const std::string& context) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError(context + ": invalid JSON");
  return j;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, std::optional<int> num_types,
                     std::optional<double> horizon) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::optional<int> meta_types;
  std::optional<double> meta_horizon;
  const auto meta_path = sidecar_path(path);
  if (std::filesystem::exists(meta_path)) {
    std::ifstream mf(meta_path);
    std::string text((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    json meta = parse_strict(text, "sidecar " + meta_path.string());
    if (!meta.contains("num_types") || !meta.contains("horizon"))
      throw DataError("sidecar " + meta_path.string() + ": needs num_types and horizon");
    meta_types = meta.at("num_types").get<int>();
    meta_horizon = meta.at("horizon").get<double>();
  }

  if (num_types && meta_types && *num_types != *meta_types)
    throw DataError("num_types disagrees between sidecar and explicit value");
  if (horizon && meta_horizon && *horizon != *meta_horizon)
    throw DataError("horizon disagrees between sidecar and explicit value");

  Dataset data;
  if (num_types)
    data.num_types = *num_types;
  else if (meta_types)
    data.num_types = *meta_types;
  else
    throw DataError("dataset header missing: provide a sidecar file or num_types/horizon");
  if (horizon)
    data.horizon = *horizon;
  else if (meta_horizon)
    data.horizon = *meta_horizon;
  else
    throw DataError("dataset header missing: provide a sidecar file or num_types/horizon");

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError("parse error at line " + std::to_string(line_no) + " of " + path.string());
    EventSequence seq;
    seq.horizon = data.horizon;
    try {
      seq.id = j.at("id").get<std::string>();
      for (const json& je : j.at("events")) {
        Event e;
        e.time = je.at("t").get<double>();
        e.type_id = je.at("c").get<int>();
        seq.events.push_back(e);
      }
      if (j.contains("label")) seq.label = j.at("label").get<int>();
    } catch (const json::exception& ex) {
      throw DataError("line " + std::to_string(line_no) + " of " + path.string() + ": " +
                      ex.what());
    }
    validate_sequence(seq, data.num_types, data.horizon);
    data.sequences.push_back(std::move(seq));
  }
  validate_dataset(data);
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path.string());
  for (const EventSequence& seq : data.sequences) {
    json j;
    j["id"] = seq.id;
    json events = json::array();
    for (const Event& e : seq.events) events.push_back({{"t", e.time}, {"c", e.type_id}});
    j["events"] = std::move(events);
    if (seq.label) j["label"] = *seq.label;
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failure on dataset file: " + path.string());

  std::ofstream mf(sidecar_path(path));
  if (!mf) throw DataError("cannot write sidecar file: " + sidecar_path(path).string());
  json meta{{"num_types", data.num_types}, {"horizon", data.horizon}};
  mf << meta.dump(2) << "\n";
  if (!mf) throw DataError("write failure on sidecar file: " + sidecar_path(path).string());
}

}  // namespace stpp
