#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsim/linear_probe.hpp"
#include "repsim/neighbors.hpp"
#include "repsim/run_metadata.hpp"
#include "repsim/simmetrics.hpp"

namespace repsim {

// Each analysis artifact is a JSON object with a "kind" field and an
// embedded "metadata" block. These writers and readers are inverses up to
// the fields the in-memory types carry.

nlohmann::ordered_json similarity_to_json(const SimilarityMatrix& matrix,
                                          const SimilarityOptions& options,
                                          const RunMetadata& meta);
SimilarityMatrix similarity_from_json(const nlohmann::json& doc);

nlohmann::ordered_json probe_to_json(const ProbeReport& report, const RunMetadata& meta);
ProbeReport probe_from_json(const nlohmann::json& doc);

nlohmann::ordered_json purity_to_json(const PurityReport& report, const RunMetadata& meta);
PurityReport purity_from_json(const nlohmann::json& doc);

struct Artifact {
  std::filesystem::path source;
  nlohmann::json doc;
  std::string kind;
};

/// Reads an artifact. A `.csv` path resolves to its JSON twin (same stem).
Artifact load_artifact(const std::filesystem::path& path);

/// Merges artifacts into one document. Throws ValidationError when the
/// list is empty or the artifacts come from different manifests.
nlohmann::ordered_json build_report(std::span<const Artifact> artifacts);

/// Plain-text rendering of a merged report.
std::string render_report_text(const nlohmann::ordered_json& report);

}  // namespace repsim
