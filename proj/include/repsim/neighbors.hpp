#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "repsim/feature_store.hpp"

namespace repsim {

enum class Distance { Euclidean, Cosine };

std::string_view distance_name(Distance distance);

struct PurityReport {
  int k = 0;
  Distance distance = Distance::Euclidean;
  std::vector<Variant> variants;   // input order
  std::vector<double> per_variant;  // diagonal of confusion
  Eigen::MatrixXd confusion;        // row u: share of u-query neighbour slots held by each variant
};

struct PooledPoint {
  std::size_t variant_slot;  // index into the input variant list
  std::size_t row;           // row within that variant's matrix
};

/// One query's neighbours, nearest first.
using NeighborList = std::vector<PooledPoint>;

/// Exact k-nearest-neighbour lists over all variants pooled together. The
/// query itself is excluded; equal distances are ordered by variant
/// (canonical enum order) and then by sample id. Queries are returned in
/// pooled order (variant slot major, row minor).
std::vector<NeighborList> pooled_neighbors(std::span<const FeatureMatrix> matrices, int k,
                                           Distance distance);

/// Share of neighbour slots that each variant's points give to each variant.
PurityReport knn_variant_purity(std::span<const FeatureMatrix> matrices, int k,
                                Distance distance = Distance::Euclidean);

struct ProjectedPoint {
  double x = 0.0;
  double y = 0.0;
  Variant variant = Variant::Original;
  std::string sample_id;
};

struct Projection {
  std::vector<ProjectedPoint> points;
  /// The subsampled vectors in the same order as `points`.
  Eigen::MatrixXd raw;
  std::vector<std::int64_t> labels;
};

/// Seeded subsample of round(sample_fraction * n) rows (the same rows for
/// every variant), projected onto the top two principal components of the
/// pooled subsample. Each component's sign is fixed so its largest-magnitude
/// loading is positive.
Projection project_2d(std::span<const FeatureMatrix> matrices, double sample_fraction,
                      std::uint64_t seed);

}  // namespace repsim
