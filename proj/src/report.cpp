#include "hvf/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace hvf {

Json to_json(const Summary& s) {
  Json j;
  j["schema"] = kSchemaVersion;
  j["system"] = s.system;
  j["operation"] = s.operation;
  j["parameters"] = s.parameters;
  j["estimate"] = s.estimate;
  j["ci"] = s.ci;
  j["resolution"] = s.resolution;
  j["seed"] = s.seed;
  return j;
}

std::string dump_summary(const Summary& s) { return to_json(s).dump(2) + "\n"; }

void Table::add(std::vector<Json> row) {
  if (row.size() != columns.size()) {
    throw Error("table row has " + std::to_string(row.size()) + " cells, expected " + std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

namespace {

std::string csv_cell(const Json& v) {
  if (v.is_null()) return "";
  if (!v.is_string()) return v.dump();
  const std::string& s = v.get_ref<const std::string&>();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

void write_csv(std::ostream& out, const Table& t) {
  for (size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << csv_cell(t.columns[i]);
  out << "\n";
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
    out << "\n";
  }
}

OutputFormat parse_format(const std::string& text) {
  if (text == "csv") return OutputFormat::Csv;
  if (text == "json") return OutputFormat::Json;
  if (text == "both") return OutputFormat::Both;
  throw Error("unknown output format '" + text + "' (expected csv, json or both)");
}

std::vector<std::string> write_report(const std::string& dir, const std::string& stem, const Summary& s,
                                      const Table* table, OutputFormat format) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto open = [&](const std::string& ext) {
    std::string path = (fs::path(dir) / (stem + ext)).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    written.push_back(path);
    return f;
  };
  if (table && format != OutputFormat::Json) {
    auto f = open(".csv");
    write_csv(f, *table);
  }
  if (format != OutputFormat::Csv || !table) {
    auto f = open(".json");
    f << dump_summary(s);
  }
  return written;
}

Json point_json(const Point& x) {
  Json a = Json::array();
  for (int i = 0; i < x.size(); ++i) a.push_back(number(x[i]));
  return a;
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace hvf
