#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

namespace repsim {

std::string_view toolkit_version();

/// Provenance block embedded in every JSON output.
struct RunMetadata {
  std::string version{toolkit_version()};
  std::string subcommand;
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::string manifest_digest;                       // empty when no manifest was read
  std::optional<std::uint64_t> seed;
  double wall_time_seconds = 0.0;
};

nlohmann::ordered_json to_json(const RunMetadata& meta);
RunMetadata metadata_from_json(const nlohmann::json& doc);

/// Measures elapsed wall time from construction.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace repsim
