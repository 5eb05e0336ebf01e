#pragma once

#include <openssl/evp.h>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/io.hpp"

namespace rfm::cli {

inline constexpr const char* tool_version = "0.1.0";

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Record of one command run: enough to rerun it and check the outputs.
struct Manifest {
  std::string command;
  std::vector<std::string> args;  // full argument list after the program name
  std::string config;             // resolved option values
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> outputs;
  std::string started;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = "rfm";
    j["version"] = tool_version;
    j["command"] = command;
    j["args"] = args;
    j["cwd"] = std::filesystem::current_path().string();
    j["config"] = config;
    j["seeds"] = seeds;
    j["versions"] = {{"rfm", tool_version},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__}};
    j["timestamps"] = {{"started", started}, {"finished", utc_now()}};
    nlohmann::json out = nlohmann::json::object();
    for (const auto& p : outputs) out[p] = file_sha256(p);
    j["outputs"] = out;
    if (!extra.empty()) j["extra"] = extra;
    return j;
  }
};

inline std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

}  // namespace rfm::cli
