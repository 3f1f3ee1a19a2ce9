#include "repsim/run_metadata.hpp"

#include "repsim/error.hpp"

namespace repsim {

std::string_view toolkit_version() { return REPSIM_VERSION; }

nlohmann::ordered_json to_json(const RunMetadata& meta) {
  nlohmann::ordered_json doc;
  doc["toolkit"] = "repsim";
  doc["version"] = meta.version;
  doc["subcommand"] = meta.subcommand;
  doc["flags"] = meta.flags;
  doc["input_digests"] = meta.input_digests;
  doc["manifest_digest"] = meta.manifest_digest;
  doc["seed"] = meta.seed ? nlohmann::ordered_json(*meta.seed) : nlohmann::ordered_json(nullptr);
  doc["wall_time_seconds"] = meta.wall_time_seconds;
  return doc;
}

RunMetadata metadata_from_json(const nlohmann::json& doc) {
  RunMetadata meta;
  try {
    meta.version = doc.at("version").get<std::string>();
    meta.subcommand = doc.at("subcommand").get<std::string>();
    meta.flags = doc.at("flags");
    meta.input_digests = doc.at("input_digests").get<std::map<std::string, std::string>>();
    meta.manifest_digest = doc.at("manifest_digest").get<std::string>();
    if (!doc.at("seed").is_null()) meta.seed = doc.at("seed").get<std::uint64_t>();
    meta.wall_time_seconds = doc.at("wall_time_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed run metadata: ") + e.what());
  }
  return meta;
}

}  // namespace repsim
