#pragma once

// NDJSON scan files: one scan per line,
// {"volunteer":int,"visit":int,"side":"L"|"R","label":"H"|"T","tumour_pos":[x,y,z]|null,
//  "dt":float,"signals":{"tx-rx":[floats...]}}

#include <filesystem>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "emdscan/atomic_file.hpp"
#include "emdscan/error.hpp"
#include "emdscan/signal.hpp"

namespace emdscan {

inline nlohmann::json scan_to_json(const Scan& s) {
  nlohmann::json j;
  j["volunteer"] = s.volunteer;
  j["visit"] = s.visit;
  j["side"] = std::string(1, side_code(s.side));
  j["label"] = std::string(1, label_code(s.label));
  if (s.tumour_pos)
    j["tumour_pos"] = {(*s.tumour_pos)[0], (*s.tumour_pos)[1], (*s.tumour_pos)[2]};
  else
    j["tumour_pos"] = nullptr;
  j["dt"] = s.signals.empty() ? 25e-12 : s.signals.begin()->second.dt;
  auto& sig = j["signals"] = nlohmann::json::object();
  for (const auto& [pair, ts] : s.signals) sig[pair.str()] = ts.samples;
  return j;
}

namespace detail {

template <class T>
T required(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(line, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline Scan scan_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "record is not a JSON object");
  Scan s;
  s.volunteer = detail::required<int>(j, "volunteer", line);
  s.visit = detail::required<int>(j, "visit", line);
  const auto side = detail::required<std::string>(j, "side", line);
  if (side == "L")
    s.side = Side::Left;
  else if (side == "R")
    s.side = Side::Right;
  else
    throw ParseError(line, "side must be \"L\" or \"R\"");
  const auto label = detail::required<std::string>(j, "label", line);
  if (label == "H")
    s.label = Label::Healthy;
  else if (label == "T")
    s.label = Label::Tumour;
  else
    throw ParseError(line, "label must be \"H\" or \"T\"");
  auto pos = j.find("tumour_pos");
  if (pos == j.end()) throw ParseError(line, "missing field 'tumour_pos'");
  if (!pos->is_null()) {
    auto v = detail::required<std::vector<double>>(j, "tumour_pos", line);
    if (v.size() != 3) throw ParseError(line, "tumour_pos must have 3 coordinates");
    s.tumour_pos = Vec3{v[0], v[1], v[2]};
  }
  const double dt = detail::required<double>(j, "dt", line);
  auto sig = j.find("signals");
  if (sig == j.end() || !sig->is_object()) throw ParseError(line, "missing or malformed field 'signals'");
  for (const auto& [key, val] : sig->items()) {
    AntennaPairId pair;
    try {
      pair = AntennaPairId::parse(key);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line, e.what());
    }
    std::vector<double> samples;
    try {
      samples = val.get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(line, "signal " + key + " is not a list of numbers");
    }
    s.signals.emplace(pair, TimeSeries(std::move(samples), dt));
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(line, e.what());
  }
  return s;
}

inline std::vector<Scan> read_scans(std::istream& in) {
  std::vector<Scan> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    out.push_back(scan_from_json(j, line));
  }
  return out;
}

inline std::vector<Scan> read_scans(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path.string());
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_scans(in);
}

inline void write_scans(std::span<const Scan> scans, std::ostream& out) {
  for (const auto& s : scans) out << scan_to_json(s).dump() << '\n';
}

inline void write_scans(std::span<const Scan> scans, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) { write_scans(scans, out); });
}

}  // namespace emdscan
