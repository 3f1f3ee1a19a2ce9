#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "repsim/feature_store.hpp"
#include "repsim/random.hpp"

namespace repsim::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("repsim_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

inline Eigen::MatrixXd random_orthogonal(Rng& rng, Eigen::Index n) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(rng, n, n));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

/// Invertible matrix Q1 diag(s) Q2 with singular values in [1, max_cond].
inline Eigen::MatrixXd random_conditioned(Rng& rng, Eigen::Index n, double max_cond) {
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s(i) = 1.0 + (max_cond - 1.0) * rng.uniform();
  return random_orthogonal(rng, n) * s.asDiagonal() * random_orthogonal(rng, n);
}

inline std::vector<std::string> numbered_ids(std::size_t n, const std::string& prefix = "s") {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%05zu", i);
    ids.push_back(prefix + buf);
  }
  return ids;
}

inline FeatureMatrix make_features(const Eigen::MatrixXd& x, std::vector<std::int64_t> labels,
                                   Variant variant = Variant::Original,
                                   std::vector<std::string> ids = {}) {
  if (ids.empty()) ids = numbered_ids(static_cast<std::size_t>(x.rows()));
  return FeatureMatrix(x.cast<float>(), std::move(ids), std::move(labels), variant);
}

inline FeatureMatrix make_features(const Eigen::MatrixXd& x, Variant variant = Variant::Original) {
  return make_features(x, std::vector<std::int64_t>(static_cast<std::size_t>(x.rows()), 0),
                       variant);
}

/// Writes one NPY file and labels sidecar per variant plus a manifest, and
/// returns the manifest path.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                           const std::map<Variant, Eigen::MatrixXd>& features,
                                           const std::vector<std::int64_t>& labels,
                                           const std::string& model = "model",
                                           const std::string& dataset = "dataset") {
  std::filesystem::create_directories(dir);
  VariantManifest manifest;
  manifest.model_name = model;
  manifest.dataset_name = dataset;
  for (const auto& [variant, x] : features) {
    const std::filesystem::path npy = dir / (std::string(variant_name(variant)) + ".npy");
    write_features(make_features(x, labels, variant), npy);
    manifest.entries[variant] = {npy, labels_path_for(npy)};
  }
  const std::filesystem::path path = dir / "manifest.json";
  write_manifest(manifest, path);
  return path;
}

}  // namespace repsim::testing
