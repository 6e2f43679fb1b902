#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stockrl/inventory_env.hpp"

namespace stockrl {

/// Schema or content error in an input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CatalogRecord {
  std::int64_t id = 0;
  double b = 0.0;
  double mu = 0.0;
  double p = 0.0;
  double cost_order = 0.0;
  double cost_hold = 0.0;
  double cost_short = 0.0;
  double volume = 1.0;

  ItemSpec to_item() const {
    return ItemSpec{id, DemandModel{b, mu}, LeadTimeModel{p}, cost_order, cost_hold, cost_short, volume};
  }
};

/// Fitted demand/lead-time parameters and unit costs per product.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::vector<CatalogRecord> records) : records_(std::move(records)) { validate(); }

  const std::vector<CatalogRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  const CatalogRecord& at(std::int64_t id) const {
    for (const auto& r : records_)
      if (r.id == id) return r;
    throw ConfigError("item id " + std::to_string(id) + " not in catalog");
  }

  ItemSpec item(std::int64_t id) const { return at(id).to_item(); }

  std::vector<ItemSpec> items(const std::vector<std::int64_t>& ids) const {
    std::vector<ItemSpec> out;
    for (auto id : ids) out.push_back(item(id));
    return out;
  }

  void validate() const {
    std::set<std::int64_t> seen;
    for (const auto& r : records_) {
      if (!seen.insert(r.id).second) throw ParseError("duplicate item id " + std::to_string(r.id));
      try {
        r.to_item().validate();
      } catch (const std::invalid_argument& e) {
        throw ParseError("item " + std::to_string(r.id) + ": " + e.what());
      }
    }
  }

 private:
  std::vector<CatalogRecord> records_;
};

inline nlohmann::json to_json(const CatalogRecord& r) {
  nlohmann::json j{{"id", r.id},
                   {"b", r.b},
                   {"mu", r.mu},
                   {"p", r.p},
                   {"C_o", r.cost_order},
                   {"C_h", r.cost_hold},
                   {"C_s", r.cost_short}};
  if (r.volume != 1.0) j["volume"] = r.volume;
  return j;
}

inline nlohmann::json to_json(const ItemCatalog& c) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& r : c.records()) items.push_back(to_json(r));
  return nlohmann::json{{"items", items}};
}

/// Parses {"items": [{id, b, mu, p, C_o, C_h, C_s[, volume]}, ...]}; a bare
/// array of records is accepted as well.
inline ItemCatalog catalog_from_json(const nlohmann::json& j) {
  const nlohmann::json* items = &j;
  if (j.is_object()) {
    if (!j.contains("items")) throw ParseError("catalog: missing 'items' array");
    items = &j.at("items");
  }
  if (!items->is_array()) throw ParseError("catalog: 'items' must be an array");
  std::vector<CatalogRecord> recs;
  std::size_t row = 0;
  for (const auto& it : *items) {
    auto field = [&](const char* name) -> double {
      if (!it.is_object() || !it.contains(name))
        throw ParseError("catalog row " + std::to_string(row) + ": missing field '" + name + "'");
      const auto& v = it.at(name);
      if (!v.is_number())
        throw ParseError("catalog row " + std::to_string(row) + ": field '" + name + "' is not a number");
      return v.get<double>();
    };
    CatalogRecord r;
    const double id = field("id");
    if (id != static_cast<double>(static_cast<std::int64_t>(id)))
      throw ParseError("catalog row " + std::to_string(row) + ": field 'id' is not an integer");
    r.id = static_cast<std::int64_t>(id);
    r.b = field("b");
    r.mu = field("mu");
    r.p = field("p");
    r.cost_order = field("C_o");
    r.cost_hold = field("C_h");
    r.cost_short = field("C_s");
    if (it.contains("volume")) r.volume = field("volume");
    recs.push_back(r);
    ++row;
  }
  return ItemCatalog(std::move(recs));
}

inline ItemCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open catalog '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("catalog '" + path + "': " + e.what());
  }
  return catalog_from_json(j);
}

inline void save_catalog(const ItemCatalog& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write catalog '" + path + "'");
  out << to_json(c).dump(2) << '\n';
}

/// The 50 products of the reference warehouse data set:
/// id, b, mu, p, C_o, C_h, C_s.
inline ItemCatalog builtin_catalog() {
  static constexpr std::array<std::array<double, 7>, 50> rows{{
      {0, 0.33, 6.23, 0.12, 1010, 57, 11097},   {1, 0.12, 17.33, 0.17, 1092, 125, 11800},
      {2, 0.21, 11.0, 0.17, 1363, 159, 14887},  {3, 0.24, 9.04, 0.11, 1125, 131, 12881},
      {4, 0.17, 12.0, 0.11, 1007, 119, 14758},  {5, 0.31, 6.87, 0.11, 1174, 65, 15954},
      {6, 0.17, 12.5, 0.12, 1280, 104, 18109},  {7, 0.12, 17.25, 0.12, 1220, 71, 14450},
      {8, 0.18, 11.82, 0.19, 2250, 269, 23984}, {9, 0.29, 8.46, 0.13, 1356, 129, 13998},
      {10, 0.29, 8.08, 0.15, 1597, 170, 21512}, {11, 0.11, 22.0, 0.14, 1069, 100, 14184},
      {12, 0.4, 8.25, 0.2, 1020, 112, 15244},   {13, 0.17, 16.25, 0.15, 1342, 149, 14059},
      {14, 0.15, 20.59, 0.12, 1080, 112, 11352}, {15, 0.08, 24.0, 0.41, 3380, 298, 37941},
      {16, 0.24, 9.83, 0.1, 1857, 194, 23874},  {17, 0.12, 26.67, 0.14, 1042, 107, 11000},
      {18, 0.12, 20.0, 0.1, 1360, 174, 17718},  {19, 0.4, 7.07, 0.12, 1690, 215, 20403},
      {20, 0.08, 40.0, 0.15, 1110, 95, 12873},  {21, 0.38, 9.5, 0.12, 1270, 181, 13578},
      {22, 0.08, 32.67, 0.1, 1276, 184, 16441}, {23, 0.17, 23.58, 0.2, 1170, 60, 15026},
      {24, 0.14, 20.4, 0.11, 2084, 270, 25725}, {25, 0.08, 40.0, 0.12, 1371, 177, 14804},
      {26, 0.11, 32.5, 0.09, 1092, 152, 12305}, {27, 0.08, 32.0, 0.11, 2104, 135, 24015},
      {28, 0.11, 36.5, 0.15, 1252, 139, 14186}, {29, 0.39, 7.81, 0.1, 1792, 93, 25279},
      {30, 0.28, 15.25, 0.1, 1085, 77, 14038},  {31, 0.08, 40.0, 0.08, 1445, 164, 14742},
      {32, 0.19, 18.3, 0.11, 2284, 304, 23957}, {33, 0.26, 19.73, 0.16, 1142, 138, 13926},
      {34, 0.17, 26.0, 0.15, 1342, 196, 16559}, {35, 0.33, 10.39, 0.07, 1851, 267, 19626},
      {36, 0.14, 26.0, 0.15, 1765, 225, 25052}, {37, 0.1, 35.67, 0.11, 2070, 130, 20910},
      {38, 0.12, 30.17, 0.09, 1380, 204, 20550}, {39, 0.33, 6.58, 0.06, 4470, 456, 51326},
      {40, 0.29, 18.14, 0.17, 1689, 158, 22534}, {41, 0.08, 50.0, 0.1, 1329, 141, 17654},
      {42, 0.22, 20.77, 0.13, 2312, 257, 29177}, {43, 0.44, 14.33, 0.1, 1308, 100, 15170},
      {44, 0.08, 70.0, 0.1, 1308, 179, 13718},  {45, 0.17, 34.0, 0.18, 3590, 328, 38035},
      {46, 0.08, 108.0, 0.12, 1011, 87, 10134}, {47, 0.19, 111.0, 0.12, 1049, 100, 15621},
      {48, 0.18, 97.88, 0.11, 1851, 171, 20451}, {49, 0.08, 217.0, 0.11, 1851, 114, 25362},
  }};
  std::vector<CatalogRecord> recs;
  for (const auto& r : rows)
    recs.push_back({static_cast<std::int64_t>(r[0]), r[1], r[2], r[3], r[4], r[5], r[6], 1.0});
  return ItemCatalog(std::move(recs));
}

}  // namespace stockrl
