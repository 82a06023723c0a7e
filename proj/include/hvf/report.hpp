#pragma once

#include "hvf/core.hpp"

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace hvf {

// Keys keep insertion order so equal inputs serialize to equal bytes.
using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct Summary {
  std::string system;
  std::string operation;
  Json parameters = Json::object();
  Json estimate = Json::object();
  Json ci = nullptr;
  Json resolution = Json::object();
  uint64_t seed = 0;
};

Json to_json(const Summary& s);
// Two-space indented JSON with a trailing newline.
std::string dump_summary(const Summary& s);

// One row per radius or per pair; cells are numbers, strings, booleans or null.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;

  void add(std::vector<Json> row);
};
void write_csv(std::ostream& out, const Table& t);

enum class OutputFormat { Csv, Json, Both };
OutputFormat parse_format(const std::string& text);

// Writes dir/stem.csv and/or dir/stem.json and returns the paths written.
std::vector<std::string> write_report(const std::string& dir, const std::string& stem, const Summary& s,
                                      const Table* table, OutputFormat format);

Json point_json(const Point& x);
// NaN and infinities become null.
Json number(double v);

}  // namespace hvf
