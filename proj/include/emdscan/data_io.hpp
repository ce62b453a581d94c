#pragma once

// On-disk layout of one generated dataset:
//   <dir>/scans.ndjson     every scan, tumour-bearing ones already injected
//   <dir>/carriers.ndjson  the healthy recordings the tumours were injected into
//   <dir>/meta.json        seed, response attenuation, geometry, permittivities, tumour sites
//   <dir>/splits.json      [{train_volunteers, test_volunteers, test_augment_positions}]

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "emdscan/atomic_file.hpp"
#include "emdscan/dataset.hpp"
#include "emdscan/error.hpp"
#include "emdscan/scan_io.hpp"

namespace emdscan {

inline nlohmann::json vec3_json(const Vec3& v) { return {v[0], v[1], v[2]}; }

inline Vec3 vec3_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::runtime_error("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

inline nlohmann::json debye_json(const DebyeParams& p) {
  return {{"eps_inf", p.eps_inf}, {"delta_eps", p.delta_eps}, {"tau", p.tau}, {"sigma_s", p.sigma_s}};
}

inline DebyeParams debye_from(const nlohmann::json& j) {
  DebyeParams p;
  p.eps_inf = j.at("eps_inf").get<double>();
  p.delta_eps = j.at("delta_eps").get<double>();
  p.tau = j.at("tau").get<double>();
  p.sigma_s = j.at("sigma_s").get<double>();
  return p;
}

inline nlohmann::json geometry_json(const Geometry& g) {
  nlohmann::json ants = nlohmann::json::array();
  for (const auto& a : g.antennas) ants.push_back(vec3_json(a));
  return {{"breast_radius", g.breast_radius}, {"eps_im", g.eps_im}, {"antennas", ants}};
}

inline Geometry geometry_from(const nlohmann::json& j) {
  Geometry g;
  g.breast_radius = j.at("breast_radius").get<double>();
  g.eps_im = j.at("eps_im").get<double>();
  const auto& ants = j.at("antennas");
  if (ants.size() != g.antennas.size()) throw std::runtime_error("geometry needs 16 antennas");
  for (std::size_t i = 0; i < g.antennas.size(); ++i) g.antennas[i] = vec3_from(ants[i]);
  g.validate();
  return g;
}

inline nlohmann::json splits_json(std::span<const Split> splits) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : splits) {
    nlohmann::json aug = nlohmann::json::array();
    for (const auto& a : s.augments)
      aug.push_back({{"volunteer", a.volunteer},
                     {"visit", a.visit},
                     {"side", std::string(1, side_code(a.side))},
                     {"pos", vec3_json(a.pos)}});
    out.push_back({{"train_volunteers", s.train_volunteers},
                   {"test_volunteers", {s.test_volunteers[0], s.test_volunteers[1]}},
                   {"test_augment_positions", aug}});
  }
  return out;
}

inline std::vector<Split> splits_from(const nlohmann::json& j) {
  std::vector<Split> out;
  for (const auto& e : j) {
    Split s;
    s.train_volunteers = e.at("train_volunteers").get<std::vector<int>>();
    const auto test = e.at("test_volunteers").get<std::vector<int>>();
    if (test.size() != 2) throw std::runtime_error("a split needs exactly 2 test volunteers");
    s.test_volunteers = {test[0], test[1]};
    for (const auto& a : e.at("test_augment_positions")) {
      const auto side = a.at("side").get<std::string>();
      if (side != "L" && side != "R") throw std::runtime_error("side must be \"L\" or \"R\"");
      s.augments.push_back({a.at("volunteer").get<int>(), a.at("visit").get<int>(),
                            side == "L" ? Side::Left : Side::Right, vec3_from(a.at("pos"))});
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path.string());
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  atomic_write(path, [&](std::ostream& out) { out << j.dump(1) << '\n'; });
}

inline void write_dataset(const Dataset& d, std::span<const Split> splits, const std::filesystem::path& dir) {
  nlohmann::json meta;
  meta["index"] = d.index;
  meta["seed"] = d.seed;
  meta["gamma"] = d.gamma;
  meta["geometry"] = geometry_json(d.geometry);
  auto& deb = meta["debye"] = nlohmann::json::object();
  for (const auto& [v, p] : d.debye) deb[std::to_string(v)] = debye_json(p);
  auto& tum = meta["tumours"] = nlohmann::json::array();
  for (const auto& t : d.tumours) tum.push_back({{"scan_index", t.scan_index}, {"pos", vec3_json(t.pos)}});
  write_scans(d.scans, dir / "scans.ndjson");
  write_scans(d.carriers, dir / "carriers.ndjson");
  write_json(dir / "splits.json", splits_json(splits));
  write_json(dir / "meta.json", meta);
}

struct StoredDataset {
  Dataset dataset;
  std::vector<Split> splits;
};

inline StoredDataset read_dataset(const std::filesystem::path& dir) {
  for (const char* f : {"meta.json", "scans.ndjson", "carriers.ndjson", "splits.json"})
    if (!std::filesystem::exists(dir / f)) throw MissingArtifact((dir / f).string(), "run `emd gen` first");
  StoredDataset out;
  auto& d = out.dataset;
  const auto meta = read_json(dir / "meta.json");
  try {
    d.index = meta.at("index").get<int>();
    d.seed = meta.at("seed").get<std::uint64_t>();
    d.gamma = meta.at("gamma").get<double>();
    d.geometry = geometry_from(meta.at("geometry"));
    for (const auto& [k, v] : meta.at("debye").items()) d.debye[std::stoi(k)] = debye_from(v);
    for (const auto& t : meta.at("tumours"))
      d.tumours.push_back({t.at("scan_index").get<std::size_t>(), vec3_from(t.at("pos"))});
    out.splits = splits_from(read_json(dir / "splits.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(dir.string() + ": malformed dataset metadata: " + e.what());
  }
  d.scans = read_scans(dir / "scans.ndjson");
  d.carriers = read_scans(dir / "carriers.ndjson");
  if (d.carriers.size() != d.tumours.size()) throw std::runtime_error(dir.string() + ": carriers do not match tumours");
  for (const auto& t : d.tumours)
    if (t.scan_index >= d.scans.size()) throw std::runtime_error(dir.string() + ": tumour scan index out of range");
  return out;
}

/// `data/ds<k>` directories in ascending k.
inline std::vector<std::filesystem::path> dataset_dirs(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw MissingArtifact(root.string(), "run `emd gen` first");
  std::vector<std::pair<int, std::filesystem::path>> found;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.size() < 3 || name.rfind("ds", 0) != 0) continue;
    if (name.find_first_not_of("0123456789", 2) != std::string::npos) continue;
    found.emplace_back(std::stoi(name.substr(2)), e.path());
  }
  std::sort(found.begin(), found.end());
  if (found.empty()) throw MissingArtifact((root / "ds1").string(), "run `emd gen` first");
  std::vector<std::filesystem::path> out;
  for (auto& [_, p] : found) out.push_back(std::move(p));
  return out;
}

}  // namespace emdscan
