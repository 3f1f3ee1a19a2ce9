#include "repsim/neighbors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "repsim/error.hpp"
#include "repsim/parallel.hpp"
#include "repsim/random.hpp"

namespace repsim {

std::string_view distance_name(Distance distance) {
  return distance == Distance::Euclidean ? "euclidean" : "cosine";
}

namespace {

struct Pool {
  Eigen::MatrixXd points;  // row per pooled point
  std::vector<PooledPoint> origin;
};

Pool build_pool(std::span<const FeatureMatrix> matrices, Distance distance) {
  Pool pool;
  std::size_t total = 0;
  for (const auto& m : matrices) total += m.rows();
  pool.points.resize(static_cast<Eigen::Index>(total),
                     static_cast<Eigen::Index>(matrices.front().dim()));
  pool.origin.reserve(total);
  Eigen::Index r = 0;
  for (std::size_t s = 0; s < matrices.size(); ++s) {
    const auto& data = matrices[s].data();
    pool.points.middleRows(r, data.rows()) = data.cast<double>();
    for (std::size_t i = 0; i < matrices[s].rows(); ++i) pool.origin.push_back({s, i});
    r += data.rows();
  }
  if (distance == Distance::Cosine) {
    for (Eigen::Index i = 0; i < pool.points.rows(); ++i) {
      const double norm = pool.points.row(i).norm();
      if (norm == 0.0) {
        const auto& o = pool.origin[static_cast<std::size_t>(i)];
        throw ValidationError("cosine distance undefined for zero vector '" +
                              matrices[o.variant_slot].sample_ids()[o.row] + "' (" +
                              std::string(variant_name(matrices[o.variant_slot].variant())) + ")");
      }
      pool.points.row(i) /= norm;
    }
  }
  return pool;
}

void check_inputs(std::span<const FeatureMatrix> matrices, int k) {
  if (matrices.empty()) throw ValidationError("knn: no variants");
  require_aligned(matrices);
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    for (std::size_t j = i + 1; j < matrices.size(); ++j) {
      if (matrices[i].variant() == matrices[j].variant()) {
        throw ValidationError("knn: variant '" + std::string(variant_name(matrices[i].variant())) +
                              "' appears twice");
      }
    }
  }
  std::size_t total = 0;
  for (const auto& m : matrices) total += m.rows();
  if (k < 1 || static_cast<std::size_t>(k) >= total) {
    throw ValidationError("k must lie in [1, " + std::to_string(total) + "), got " +
                          std::to_string(k));
  }
}

}  // namespace

std::vector<NeighborList> pooled_neighbors(std::span<const FeatureMatrix> matrices, int k,
                                           Distance distance) {
  check_inputs(matrices, k);
  const Pool pool = build_pool(matrices, distance);
  const auto total = static_cast<std::size_t>(pool.points.rows());
  const auto kk = static_cast<std::size_t>(k);

  // Tie-break key: canonical variant order, then sample id.
  auto tie_less = [&](std::size_t a, std::size_t b) {
    const auto& oa = pool.origin[a];
    const auto& ob = pool.origin[b];
    const Variant va = matrices[oa.variant_slot].variant();
    const Variant vb = matrices[ob.variant_slot].variant();
    if (va != vb) return va < vb;
    return matrices[oa.variant_slot].sample_ids()[oa.row] <
           matrices[ob.variant_slot].sample_ids()[ob.row];
  };

  std::vector<NeighborList> result(total);
  parallel_for(total, [&](std::size_t q) {
    const Eigen::RowVectorXd query = pool.points.row(static_cast<Eigen::Index>(q));
    std::vector<double> dist(total);
    for (std::size_t j = 0; j < total; ++j) {
      const auto row = pool.points.row(static_cast<Eigen::Index>(j));
      dist[j] = distance == Distance::Euclidean ? (row - query).squaredNorm()
                                                : 1.0 - row.dot(query);
    }
    std::vector<std::size_t> candidates;
    candidates.reserve(total - 1);
    for (std::size_t j = 0; j < total; ++j) {
      if (j != q) candidates.push_back(j);
    }
    auto less = [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return tie_less(a, b);
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(kk),
                      candidates.end(), less);
    NeighborList& out = result[q];
    out.reserve(kk);
    for (std::size_t i = 0; i < kk; ++i) out.push_back(pool.origin[candidates[i]]);
  });
  return result;
}

PurityReport knn_variant_purity(std::span<const FeatureMatrix> matrices, int k,
                                Distance distance) {
  const std::vector<NeighborList> neighbors = pooled_neighbors(matrices, k, distance);
  const auto v = static_cast<Eigen::Index>(matrices.size());
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(v, v);
  std::size_t q = 0;
  for (std::size_t s = 0; s < matrices.size(); ++s) {
    for (std::size_t i = 0; i < matrices[s].rows(); ++i, ++q) {
      for (const auto& nb : neighbors[q]) {
        counts(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(nb.variant_slot)) += 1.0;
      }
    }
  }
  PurityReport report;
  report.k = k;
  report.distance = distance;
  report.confusion = counts;
  for (Eigen::Index u = 0; u < v; ++u) {
    report.confusion.row(u) /= counts.row(u).sum();
    report.variants.push_back(matrices[static_cast<std::size_t>(u)].variant());
    report.per_variant.push_back(report.confusion(u, u));
  }
  return report;
}

Projection project_2d(std::span<const FeatureMatrix> matrices, double sample_fraction,
                      std::uint64_t seed) {
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw ValidationError("sample_fraction must lie in (0, 1], got " +
                          std::to_string(sample_fraction));
  }
  if (matrices.empty()) throw ValidationError("project: no variants");
  require_aligned(matrices);
  const std::size_t n = matrices.front().rows();
  const auto per_variant = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::llround(sample_fraction * static_cast<double>(n))));
  const std::size_t total = per_variant * matrices.size();
  if (total < 3) {
    throw ValidationError("subsample has " + std::to_string(total) + " points, need at least 3");
  }
  const std::vector<std::size_t> rows = sample_indices(n, per_variant, seed);

  Projection out;
  const auto d = static_cast<Eigen::Index>(matrices.front().dim());
  out.raw.resize(static_cast<Eigen::Index>(total), d);
  Eigen::Index r = 0;
  for (const auto& m : matrices) {
    for (const std::size_t row : rows) {
      out.raw.row(r++) = m.data().row(static_cast<Eigen::Index>(row)).cast<double>();
      out.points.push_back({0.0, 0.0, m.variant(), m.sample_ids()[row]});
      out.labels.push_back(m.labels()[row]);
    }
  }

  const Eigen::MatrixXd centered = out.raw.rowwise() - out.raw.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(d, 2);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, v.cols()); ++c) {
    Eigen::VectorXd axis = v.col(c);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0.0) axis = -axis;
    axes.col(c) = axis;
  }
  const Eigen::MatrixXd coords = centered * axes;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    out.points[static_cast<std::size_t>(i)].x = coords(i, 0);
    out.points[static_cast<std::size_t>(i)].y = coords(i, 1);
  }
  return out;
}

}  // namespace repsim
