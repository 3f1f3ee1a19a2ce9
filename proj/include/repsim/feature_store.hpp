#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace repsim {

/// The five dataset views. Declaration order is the canonical order used
/// for matrix layouts and neighbour tie-breaking.
enum class Variant : std::uint8_t { Original, Foreground, Background, Center, Border };

inline constexpr std::array<Variant, 5> kAllVariants = {
    Variant::Original, Variant::Foreground, Variant::Background, Variant::Center,
    Variant::Border};

/// Lowercase manifest key: "original", "foreground", ...
std::string_view variant_name(Variant variant);
std::optional<Variant> parse_variant(std::string_view name);

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n x d embedding matrix with one sample id and class label per row.
/// Construction validates every invariant; instances are immutable.
class FeatureMatrix {
 public:
  FeatureMatrix(RowMatrixF data, std::vector<std::string> sample_ids,
                std::vector<std::int64_t> labels, Variant variant = Variant::Original);

  const RowMatrixF& data() const { return data_; }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<std::int64_t>& labels() const { return labels_; }
  Variant variant() const { return variant_; }
  std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }

  /// Copy of the embeddings widened to double for analysis.
  Eigen::MatrixXd to_double() const;

  FeatureMatrix with_variant(Variant variant) const;

  /// Rows permuted (or selected) so that row i of the result is row order[i].
  FeatureMatrix select_rows(std::span<const std::size_t> order) const;

  /// Rows sorted lexicographically by sample id.
  FeatureMatrix canonical() const;

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b);

 private:
  RowMatrixF data_;
  std::vector<std::string> sample_ids_;
  std::vector<std::int64_t> labels_;
  Variant variant_;
};

/// `<dir>/<stem>.labels.csv` for `<dir>/<stem>.npy`.
std::filesystem::path labels_path_for(const std::filesystem::path& features_path);

/// Writes the .npy payload and its labels sidecar. Non-finite values are
/// rejected before anything touches the disk.
void write_features(const FeatureMatrix& matrix, const std::filesystem::path& path,
                    std::optional<std::filesystem::path> labels_path = std::nullopt);

FeatureMatrix read_features(const std::filesystem::path& path,
                            std::optional<std::filesystem::path> labels_path = std::nullopt,
                            Variant variant = Variant::Original);

struct LabelRow {
  std::string sample_id;
  std::int64_t label = 0;
};

/// CSV with header `sample_id,label`, LF line endings.
std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(std::span<const LabelRow> rows, const std::filesystem::path& path);

struct VariantFiles {
  std::filesystem::path features;
  std::filesystem::path labels;
};

struct VariantManifest {
  std::string model_name;
  std::string dataset_name;
  std::map<Variant, VariantFiles> entries;  // iterates in canonical variant order
  std::vector<std::string> class_names;
};

/// Parses manifest JSON text. Relative paths are resolved against base_dir;
/// a missing `labels` entry defaults to the features file's sidecar.
VariantManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);

/// Serialises a manifest with paths written relative to the manifest's directory when possible.
void write_manifest(const VariantManifest& manifest, const std::filesystem::path& path);

struct LoadedManifest {
  VariantManifest manifest;
  std::vector<FeatureMatrix> matrices;  // canonical variant order, canonical row order
  std::string digest;                   // content hash of manifest + every referenced file
  std::map<std::string, std::string> file_digests;  // path -> sha256
};

/// Loads every variant, verifies sample-id sets, labels and dims agree
/// across variants, and row-aligns all matrices in lexicographic id order.
LoadedManifest load_manifest(const std::filesystem::path& path);

/// Throws ValidationError unless all matrices share the same sample ids in
/// the same row order.
void require_aligned(std::span<const FeatureMatrix> matrices);

}  // namespace repsim
