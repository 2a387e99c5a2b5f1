#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli/config.hpp"
#include "cli/sha256.hpp"

namespace swapcalc::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Reproducibility record written next to every emitted CSV: the resolved
/// configuration, wall-clock duration, and checksums of the outputs.
struct RunManifest {
  std::string command;
  Config config;
  std::uint64_t seed = 0;
  int threads = 1;
  double duration_ms = 0.0;
  std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256

  void add_output(const std::string& path, const std::string& content) {
    outputs.push_back({path, sha256_hex(content)});
  }

  void write(const std::string& path) const {
    nlohmann::json j;
    j["tool"] = "swapcalc";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["threads"] = threads;
    j["duration_ms"] = duration_ms;
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& [k, v] : config.values()) cfg[k] = v;
    j["config"] = cfg;
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& [p, digest] : outputs) outs.push_back({{"path", p}, {"sha256", digest}});
    j["outputs"] = outs;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
  }
};

}  // namespace swapcalc::cli
