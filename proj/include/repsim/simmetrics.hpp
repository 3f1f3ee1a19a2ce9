#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "repsim/feature_store.hpp"

namespace repsim {

/// Singular values below this multiple of the largest are treated as zero
/// when estimating the column-space rank for CCA.
inline constexpr double kRankTolerance = 1e-10;

/// Clamping larger than this marks a score as ill-conditioned.
inline constexpr double kClampWarning = 1e-7;

/// Copy of x with every column mean subtracted. Requires at least 2 rows.
Eigen::MatrixXd center_columns(const Eigen::MatrixXd& x);

struct CcaResult {
  std::vector<double> correlations;  // descending, clamped to [0, 1]
  double r2_cca = 0.0;               // mean of squared correlations
  int effective_rank_x = 0;
  int effective_rank_y = 0;
  double max_clamp = 0.0;            // largest correction applied by clamping
  bool ill_conditioned = false;      // max_clamp > kClampWarning
};

/// Mean squared canonical correlation between the column spaces of the
/// centred inputs. Canonical correlations are the singular values of
/// Qx^T Qy, where Qx, Qy are orthonormal bases from a thin SVD truncated
/// at kRankTolerance. Throws ValidationError on row mismatch or zero rank.
CcaResult cca_r2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct CkaKernel {
  enum class Kind { Linear, Rbf };
  Kind kind = Kind::Linear;
  /// RBF only: sigma as a fraction of the median pairwise Euclidean distance.
  double bandwidth = 1.0;

  static CkaKernel linear() { return {}; }
  static CkaKernel rbf(double bandwidth) { return {Kind::Rbf, bandwidth}; }
};

/// Centred kernel alignment in [0, 1]. Throws ValidationError on row
/// mismatch or an input whose centred Gram matrix is zero.
double cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, CkaKernel kernel = {});

enum class Metric { CcaR2, CkaLinear, CkaRbf };

std::string_view metric_name(Metric metric);
std::optional<Metric> parse_metric(std::string_view name);

struct SimilarityOptions {
  Metric metric = Metric::CkaLinear;
  double rbf_bandwidth = 1.0;
  /// Scale every row to unit Euclidean norm first (zero rows are left alone).
  bool l2_normalize = false;
  /// 0 keeps all samples; otherwise a seeded subsample of this many rows,
  /// the same rows for every variant.
  std::size_t max_samples = 0;
  std::uint64_t seed = 17;
};

struct SimilarityMatrix {
  Metric metric = Metric::CkaLinear;
  std::vector<Variant> variants;
  Eigen::MatrixXd values;  // symmetric, unit diagonal
  std::size_t samples_used = 0;
  bool ill_conditioned = false;  // any CCA pair exceeded kClampWarning
};

/// Pairwise scores for every (i, j), i <= j, mirrored. The diagonal is
/// computed and checked against 1. Matrices must be row-aligned.
SimilarityMatrix similarity_matrix(std::span<const FeatureMatrix> matrices,
                                   const SimilarityOptions& options);

/// Rows of x scaled to unit norm.
Eigen::MatrixXd l2_normalize_rows(const Eigen::MatrixXd& x);

/// CSV with a header row and first column of variant names; values are
/// printed with 17 significant digits.
std::string similarity_to_csv(const SimilarityMatrix& matrix);
SimilarityMatrix similarity_from_csv(std::string_view csv, Metric metric);

}  // namespace repsim
