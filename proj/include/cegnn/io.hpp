#pragma once

// File helpers: behaviour CSV with a JSON sidecar, settings as JSON, plain CSV tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cegnn/plant.hpp"
#include "json.hpp"

namespace cegnn::io {

using Json = nlohmann::json;

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

/// Accumulates rows of a comma-separated table.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw std::invalid_argument("csv row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
  }

  void save(const std::filesystem::path& path) const { write_text(path, str()); }
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    out.push_back(std::move(cells));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Settings

inline Json to_json(const ControlSetting& s) {
  return Json{{"x0", s.x0}, {"ref", s.ref}, {"dist", s.dist}, {"horizon", s.horizon}};
}

inline ControlSetting setting_from_json(const Json& j) {
  ControlSetting s;
  s.x0 = j.at("x0").get<std::vector<double>>();
  s.ref = j.at("ref").get<std::vector<std::vector<double>>>();
  if (j.contains("dist")) s.dist = j.at("dist").get<std::vector<std::vector<double>>>();
  s.horizon = j.at("horizon").get<double>();
  return s;
}

// ---------------------------------------------------------------------------
// Behaviours: <stem>.csv with columns t, r*, y*, u*, nu*, x* and <stem>.json

inline void save_behaviour(const std::filesystem::path& stem, const Behaviour& b) {
  std::vector<std::string> header{"t"};
  auto cols = [&](const stl::SampledSignal& s, const char* name) {
    for (std::size_t c = 0; c < s.dim(); ++c) header.push_back(name + std::to_string(c));
  };
  cols(b.r, "r");
  cols(b.y, "y");
  cols(b.u, "u");
  cols(b.nu, "nu");
  cols(b.x, "x");
  CsvTable t(header);
  for (std::size_t k = 0; k < b.size(); ++k) {
    std::vector<std::string> row{fmt(static_cast<double>(k) * b.step())};
    for (const auto* s : {&b.r, &b.y, &b.u, &b.nu, &b.x}) {
      for (std::size_t c = 0; c < s->dim(); ++c) row.push_back(fmt(s->at(k, c)));
    }
    t.add(std::move(row));
  }
  std::filesystem::path csv = stem, meta = stem;
  csv += ".csv";
  meta += ".json";
  t.save(csv);
  write_json(meta, Json{{"schema", "cegnn.behaviour.v1"},
                        {"step", b.step()},
                        {"samples", b.size()},
                        {"dims", {{"r", b.r.dim()}, {"y", b.y.dim()}, {"u", b.u.dim()}, {"nu", b.nu.dim()}, {"x", b.x.dim()}}},
                        {"setting", to_json(b.setting)}});
}

inline Behaviour load_behaviour(const std::filesystem::path& stem) {
  std::filesystem::path csv = stem, meta = stem;
  csv += ".csv";
  meta += ".json";
  const Json j = read_json(meta);
  if (j.value("schema", "") != "cegnn.behaviour.v1") throw std::runtime_error(meta.string() + ": unknown schema");
  const double step = j.at("step").get<double>();
  const auto rows = parse_csv(read_text(csv));
  if (rows.size() < 2) throw std::runtime_error(csv.string() + ": no samples");
  const auto& dims = j.at("dims");
  const std::size_t dr = dims.at("r"), dy = dims.at("y"), du = dims.at("u"), dn = dims.at("nu"), dx = dims.at("x");
  const std::size_t width = 1 + dr + dy + du + dn + dx;
  std::vector<double> r, y, u, nu, x;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw std::runtime_error(csv.string() + ": bad row width");
    std::size_t c = 1;
    auto take = [&](std::vector<double>& dst, std::size_t n) {
      for (std::size_t q = 0; q < n; ++q) dst.push_back(std::stod(rows[i][c++]));
    };
    take(r, dr);
    take(y, dy);
    take(u, du);
    take(nu, dn);
    take(x, dx);
  }
  Behaviour b;
  b.setting = setting_from_json(j.at("setting"));
  b.r = stl::SampledSignal("r", step, dr, std::move(r));
  b.y = stl::SampledSignal("y", step, dy, std::move(y));
  b.u = stl::SampledSignal("u", step, du, std::move(u));
  b.nu = stl::SampledSignal("nu", step, dn, std::move(nu));
  b.x = stl::SampledSignal("x", step, dx, std::move(x));
  return b;
}

}  // namespace cegnn::io
