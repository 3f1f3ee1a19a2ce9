#include "repsim/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "repsim/digest.hpp"
#include "repsim/error.hpp"
#include "repsim/npy.hpp"

namespace repsim {
namespace fs = std::filesystem;

std::string_view variant_name(Variant variant) {
  switch (variant) {
    case Variant::Original: return "original";
    case Variant::Foreground: return "foreground";
    case Variant::Background: return "background";
    case Variant::Center: return "center";
    case Variant::Border: return "border";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (const Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

namespace {

void check_sample_id(const std::string& id) {
  if (id.empty()) throw ValidationError("empty sample_id");
  if (id.find_first_of(",\"\r\n") != std::string::npos) {
    throw ValidationError("sample_id '" + id + "' contains a comma, quote or line break");
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

FeatureMatrix::FeatureMatrix(RowMatrixF data, std::vector<std::string> sample_ids,
                             std::vector<std::int64_t> labels, Variant variant)
    : data_(std::move(data)),
      sample_ids_(std::move(sample_ids)),
      labels_(std::move(labels)),
      variant_(variant) {
  const auto n = static_cast<std::size_t>(data_.rows());
  if (n == 0) throw ValidationError("feature matrix has no rows");
  if (data_.cols() < 1) throw ValidationError("feature matrix has dim 0");
  if (labels_.size() != n) {
    throw ValidationError("label count " + std::to_string(labels_.size()) + " != sample count " +
                          std::to_string(n));
  }
  if (sample_ids_.size() != n) {
    throw ValidationError("sample_id count " + std::to_string(sample_ids_.size()) +
                          " != sample count " + std::to_string(n));
  }
  for (Eigen::Index r = 0; r < data_.rows(); ++r) {
    for (Eigen::Index c = 0; c < data_.cols(); ++c) {
      if (!std::isfinite(data_(r, c))) {
        throw ValidationError("non-finite value at (" + std::to_string(r) + ", " +
                              std::to_string(c) + ")");
      }
    }
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(n);
  for (const auto& id : sample_ids_) {
    check_sample_id(id);
    if (!seen.insert(id).second) throw ValidationError("duplicate sample_id '" + id + "'");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels_[i] < 0) {
      throw ValidationError("negative label " + std::to_string(labels_[i]) + " for sample '" +
                            sample_ids_[i] + "'");
    }
  }
}

Eigen::MatrixXd FeatureMatrix::to_double() const { return data_.cast<double>(); }

FeatureMatrix FeatureMatrix::with_variant(Variant variant) const {
  FeatureMatrix copy = *this;
  copy.variant_ = variant;
  return copy;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> order) const {
  RowMatrixF data(static_cast<Eigen::Index>(order.size()), data_.cols());
  std::vector<std::string> ids;
  std::vector<std::int64_t> labels;
  ids.reserve(order.size());
  labels.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= rows()) throw ValidationError("row index out of range");
    data.row(static_cast<Eigen::Index>(i)) = data_.row(static_cast<Eigen::Index>(order[i]));
    ids.push_back(sample_ids_[order[i]]);
    labels.push_back(labels_[order[i]]);
  }
  return FeatureMatrix(std::move(data), std::move(ids), std::move(labels), variant_);
}

FeatureMatrix FeatureMatrix::canonical() const {
  std::vector<std::size_t> order(rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sample_ids_[a] < sample_ids_[b]; });
  return select_rows(order);
}

bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.variant_ != b.variant_ || a.sample_ids_ != b.sample_ids_ || a.labels_ != b.labels_ ||
      a.data_.rows() != b.data_.rows() || a.data_.cols() != b.data_.cols()) {
    return false;
  }
  // Bitwise comparison so that -0.0 and 0.0 are distinguished.
  return std::memcmp(a.data_.data(), b.data_.data(),
                     static_cast<std::size_t>(a.data_.size()) * sizeof(float)) == 0;
}

fs::path labels_path_for(const fs::path& features_path) {
  fs::path out = features_path;
  out.replace_extension();
  out += ".labels.csv";
  return out;
}

std::vector<LabelRow> read_labels_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open labels file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty labels file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != "sample_id,label") {
    throw IoError(path.string() + ": expected header 'sample_id,label', got '" + line + "'");
  }
  std::vector<LabelRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 'sample_id,label'");
    }
    LabelRow row;
    row.sample_id = line.substr(0, comma);
    const std::string label = line.substr(comma + 1);
    std::size_t used = 0;
    try {
      row.label = std::stoll(label, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != label.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + label + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_labels_csv(std::span<const LabelRow> rows, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "sample_id,label\n";
  for (const auto& row : rows) {
    check_sample_id(row.sample_id);
    out << row.sample_id << ',' << row.label << '\n';
  }
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

void write_features(const FeatureMatrix& matrix, const fs::path& path,
                    std::optional<fs::path> labels_path) {
  const auto& data = matrix.data();
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      if (!std::isfinite(data(r, c))) {
        throw ValidationError("non-finite value at (" + std::to_string(r) + ", " +
                              std::to_string(c) + ")");
      }
    }
  }
  std::vector<LabelRow> rows;
  rows.reserve(matrix.rows());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    rows.push_back({matrix.sample_ids()[i], matrix.labels()[i]});
  }
  npy::write(path, matrix.rows(), matrix.dim(),
             std::span<const float>(data.data(), static_cast<std::size_t>(data.size())));
  write_labels_csv(rows, labels_path.value_or(labels_path_for(path)));
}

FeatureMatrix read_features(const fs::path& path, std::optional<fs::path> labels_path,
                            Variant variant) {
  npy::Array2D array = npy::read(path);
  const fs::path sidecar = labels_path.value_or(labels_path_for(path));
  std::vector<LabelRow> rows = read_labels_csv(sidecar);
  if (rows.size() != array.rows) {
    throw ValidationError(path.string() + ": label count " + std::to_string(rows.size()) +
                          " != sample count " + std::to_string(array.rows));
  }
  RowMatrixF data = Eigen::Map<const RowMatrixF>(array.values.data(),
                                                 static_cast<Eigen::Index>(array.rows),
                                                 static_cast<Eigen::Index>(array.cols));
  std::vector<std::string> ids;
  std::vector<std::int64_t> labels;
  ids.reserve(rows.size());
  labels.reserve(rows.size());
  for (auto& row : rows) {
    ids.push_back(std::move(row.sample_id));
    labels.push_back(row.label);
  }
  try {
    return FeatureMatrix(std::move(data), std::move(ids), std::move(labels), variant);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

VariantManifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("manifest must be a JSON object");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  VariantManifest manifest;
  try {
    manifest.model_name = doc.at("model").get<std::string>();
    manifest.dataset_name = doc.at("dataset").get<std::string>();
    const auto& variants = doc.at("variants");
    if (!variants.is_object() || variants.empty()) {
      throw ValidationError("manifest 'variants' must be a non-empty object");
    }
    for (const auto& [key, entry] : variants.items()) {
      const auto variant = parse_variant(key);
      if (!variant) throw ValidationError("manifest names unknown variant '" + key + "'");
      VariantFiles files;
      files.features = resolve(entry.at("features").get<std::string>());
      files.labels = entry.contains("labels") ? resolve(entry.at("labels").get<std::string>())
                                              : labels_path_for(files.features);
      manifest.entries.emplace(*variant, std::move(files));
    }
    if (doc.contains("class_names") && !doc.at("class_names").is_null()) {
      manifest.class_names = doc.at("class_names").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return manifest;
}

void write_manifest(const VariantManifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  auto relative = [&](const fs::path& p) {
    std::error_code ec;
    const fs::path rel = fs::relative(p, base, ec);
    return (ec || rel.empty()) ? p.generic_string() : rel.generic_string();
  };
  nlohmann::ordered_json doc;
  doc["model"] = manifest.model_name;
  doc["dataset"] = manifest.dataset_name;
  doc["variants"] = nlohmann::ordered_json::object();
  for (const auto& [variant, files] : manifest.entries) {
    doc["variants"][std::string(variant_name(variant))] = {
        {"features", relative(files.features)}, {"labels", relative(files.labels)}};
  }
  if (!manifest.class_names.empty()) doc["class_names"] = manifest.class_names;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
}

void require_aligned(std::span<const FeatureMatrix> matrices) {
  if (matrices.empty()) return;
  const auto& reference = matrices.front();
  for (const auto& m : matrices.subspan(1)) {
    if (m.rows() != reference.rows()) {
      throw ValidationError("alignment violation: " + std::string(variant_name(m.variant())) +
                            " has " + std::to_string(m.rows()) + " rows, " +
                            std::string(variant_name(reference.variant())) + " has " +
                            std::to_string(reference.rows()));
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (m.sample_ids()[i] != reference.sample_ids()[i]) {
        throw ValidationError("alignment violation at row " + std::to_string(i) + ": '" +
                              reference.sample_ids()[i] + "' vs '" + m.sample_ids()[i] + "'");
      }
    }
  }
}

namespace {

void check_same_ids(const FeatureMatrix& a, const FeatureMatrix& b) {
  // Both sorted; report the first id of either side absent from the other.
  const auto& ids_a = a.sample_ids();
  const auto& ids_b = b.sample_ids();
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < ids_a.size() || j < ids_b.size()) {
    if (j == ids_b.size() || (i < ids_a.size() && ids_a[i] < ids_b[j])) {
      throw ValidationError("sample_id '" + ids_a[i] + "' of " +
                            std::string(variant_name(a.variant())) + " is missing from " +
                            std::string(variant_name(b.variant())));
    }
    if (i == ids_a.size() || ids_b[j] < ids_a[i]) {
      throw ValidationError("sample_id '" + ids_b[j] + "' of " +
                            std::string(variant_name(b.variant())) + " is missing from " +
                            std::string(variant_name(a.variant())));
    }
    if (a.labels()[i] != b.labels()[j]) {
      throw ValidationError("label mismatch for sample_id '" + ids_a[i] + "': " +
                            std::to_string(a.labels()[i]) + " in " +
                            std::string(variant_name(a.variant())) + ", " +
                            std::to_string(b.labels()[j]) + " in " +
                            std::string(variant_name(b.variant())));
    }
    ++i;
    ++j;
  }
}

}  // namespace

LoadedManifest load_manifest(const fs::path& path) {
  const std::string text = read_text(path);
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();

  LoadedManifest loaded;
  loaded.manifest = parse_manifest(text, base);

  std::string digest_input = "manifest:" + sha256_hex(text) + "\n";
  for (const auto& [variant, files] : loaded.manifest.entries) {
    FeatureMatrix m = read_features(files.features, files.labels, variant).canonical();
    for (const auto& p : {files.features, files.labels}) {
      const std::string d = sha256_file(p);
      loaded.file_digests[p.string()] = d;
      digest_input += std::string(variant_name(variant)) + ":" + d + "\n";
    }
    if (!loaded.matrices.empty()) {
      const auto& first = loaded.matrices.front();
      if (m.dim() != first.dim()) {
        throw ValidationError("dim mismatch: " + std::string(variant_name(first.variant())) +
                              " has dim " + std::to_string(first.dim()) + ", " +
                              std::string(variant_name(variant)) + " has dim " +
                              std::to_string(m.dim()));
      }
      check_same_ids(first, m);
    }
    loaded.matrices.push_back(std::move(m));
  }
  loaded.file_digests[path.string()] = sha256_hex(text);
  loaded.digest = sha256_hex(digest_input);
  return loaded;
}

}  // namespace repsim
