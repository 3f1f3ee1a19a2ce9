#include "repsim/simmetrics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "repsim/error.hpp"
#include "repsim/parallel.hpp"
#include "repsim/random.hpp"

namespace repsim {

Eigen::MatrixXd center_columns(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) {
    throw ValidationError("centering needs at least 2 rows, got " + std::to_string(x.rows()));
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return x.rowwise() - mean;
}

namespace {

void require_same_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) {
    throw ValidationError("sample count mismatch: " + std::to_string(x.rows()) + " vs " +
                          std::to_string(y.rows()));
  }
}

struct Basis {
  Eigen::MatrixXd q;
  int rank = 0;
};

Basis column_basis(const Eigen::MatrixXd& centered, const char* side) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const Eigen::VectorXd& s = svd.singularValues();
  const double largest = s.size() > 0 ? s(0) : 0.0;
  int rank = 0;
  if (largest > 0.0) {
    while (rank < s.size() && s(rank) > kRankTolerance * largest) ++rank;
  }
  if (rank == 0) {
    throw ValidationError(std::string("degenerate input: ") + side +
                          " has zero effective rank (all features constant)");
  }
  return {svd.matrixU().leftCols(rank), rank};
}

double clamp_unit(double v, double& max_clamp) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  max_clamp = std::max(max_clamp, std::abs(clamped - v));
  return clamped;
}

Eigen::MatrixXd double_centered(Eigen::MatrixXd gram) {
  const Eigen::VectorXd row_mean = gram.rowwise().mean();
  const Eigen::RowVectorXd col_mean = gram.colwise().mean();
  const double grand = gram.mean();
  gram.colwise() -= row_mean;
  gram.rowwise() -= col_mean;
  gram.array() += grand;
  return gram;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * (x * x.transpose());
  d.colwise() += norms;
  d.rowwise() += norms.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x, double bandwidth, const char* side) {
  const Eigen::MatrixXd d2 = squared_distances(x);
  const Eigen::Index n = x.rows();
  std::vector<double> distances;
  distances.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 1; j < n; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) distances.push_back(std::sqrt(d2(i, j)));
  }
  const auto mid = distances.begin() + static_cast<std::ptrdiff_t>(distances.size() / 2);
  std::nth_element(distances.begin(), mid, distances.end());
  double median = *mid;
  if (distances.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(distances.begin(), mid));
  }
  const double sigma = bandwidth * median;
  if (!(sigma > 0.0)) {
    throw ValidationError(std::string("degenerate input: ") + side +
                          " has zero median pairwise distance");
  }
  return (-d2.array() / (2.0 * sigma * sigma)).exp().matrix();
}

double aligned_gram_cka(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
  const Eigen::MatrixXd hk = double_centered(k);
  const Eigen::MatrixXd hl = double_centered(l);
  const double nk = hk.norm();
  const double nl = hl.norm();
  if (nk == 0.0 || nl == 0.0) {
    throw ValidationError("degenerate input: centred Gram matrix has zero norm");
  }
  return std::clamp(hk.cwiseProduct(hl).sum() / (nk * nl), 0.0, 1.0);
}

}  // namespace

CcaResult cca_r2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  require_same_rows(x, y);
  const Basis bx = column_basis(center_columns(x), "X");
  const Basis by = column_basis(center_columns(y), "Y");

  const Eigen::MatrixXd cross = bx.q.transpose() * by.q;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  const Eigen::VectorXd& s = svd.singularValues();

  CcaResult result;
  result.effective_rank_x = bx.rank;
  result.effective_rank_y = by.rank;
  const int c = std::min(bx.rank, by.rank);
  result.correlations.reserve(static_cast<std::size_t>(c));
  double sum_sq = 0.0;
  for (int i = 0; i < c; ++i) {
    const double rho = clamp_unit(s(i), result.max_clamp);
    result.correlations.push_back(rho);
    sum_sq += rho * rho;
  }
  result.r2_cca = std::clamp(sum_sq / c, 0.0, 1.0);
  result.ill_conditioned = result.max_clamp > kClampWarning;
  return result;
}

double cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, CkaKernel kernel) {
  require_same_rows(x, y);
  const Eigen::MatrixXd xc = center_columns(x);
  const Eigen::MatrixXd yc = center_columns(y);

  if (kernel.kind == CkaKernel::Kind::Rbf) {
    if (!(kernel.bandwidth > 0.0)) throw ValidationError("RBF bandwidth must be positive");
    return aligned_gram_cka(rbf_gram(xc, kernel.bandwidth, "X"),
                            rbf_gram(yc, kernel.bandwidth, "Y"));
  }

  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (xx == 0.0 || yy == 0.0) {
    throw ValidationError(std::string("degenerate input: centred ") + (xx == 0.0 ? "X" : "Y") +
                          " is all zero");
  }
  const double cross = (yc.transpose() * xc).squaredNorm();
  return std::clamp(cross / (xx * yy), 0.0, 1.0);
}

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::CcaR2: return "cca_r2";
    case Metric::CkaLinear: return "cka_linear";
    case Metric::CkaRbf: return "cka_rbf";
  }
  return "unknown";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (const Metric m : {Metric::CcaR2, Metric::CkaLinear, Metric::CkaRbf}) {
    if (metric_name(m) == name) return m;
  }
  return std::nullopt;
}

Eigen::MatrixXd l2_normalize_rows(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

SimilarityMatrix similarity_matrix(std::span<const FeatureMatrix> matrices,
                                   const SimilarityOptions& options) {
  if (matrices.size() < 2) {
    throw ValidationError("similarity analysis needs at least 2 variants, got " +
                          std::to_string(matrices.size()));
  }
  require_aligned(matrices);

  const std::size_t n = matrices.front().rows();
  std::vector<std::size_t> rows;
  if (options.max_samples > 0 && options.max_samples < n) {
    rows = sample_indices(n, options.max_samples, options.seed);
  }

  std::vector<Eigen::MatrixXd> inputs;
  inputs.reserve(matrices.size());
  for (const auto& m : matrices) {
    Eigen::MatrixXd x = rows.empty() ? m.to_double() : m.select_rows(rows).to_double();
    if (options.l2_normalize) x = l2_normalize_rows(x);
    inputs.push_back(std::move(x));
  }

  SimilarityMatrix out;
  out.metric = options.metric;
  out.samples_used = rows.empty() ? n : rows.size();
  for (const auto& m : matrices) out.variants.push_back(m.variant());
  const auto v = static_cast<Eigen::Index>(matrices.size());
  out.values = Eigen::MatrixXd::Zero(v, v);

  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < v; ++i) {
    for (Eigen::Index j = i; j < v; ++j) pairs.emplace_back(i, j);
  }
  std::vector<char> flagged(pairs.size(), 0);

  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    const auto& xi = inputs[static_cast<std::size_t>(i)];
    const auto& xj = inputs[static_cast<std::size_t>(j)];
    double score = 0.0;
    try {
      switch (options.metric) {
        case Metric::CcaR2: {
          const CcaResult r = cca_r2(xi, xj);
          score = r.r2_cca;
          flagged[k] = r.ill_conditioned ? 1 : 0;
          break;
        }
        case Metric::CkaLinear:
          score = cka(xi, xj, CkaKernel::linear());
          break;
        case Metric::CkaRbf:
          score = cka(xi, xj, CkaKernel::rbf(options.rbf_bandwidth));
          break;
      }
    } catch (const ValidationError& e) {
      throw ValidationError("pair (" + std::string(variant_name(out.variants[i])) + ", " +
                            std::string(variant_name(out.variants[j])) + "): " + e.what());
    }
    out.values(i, j) = score;
    out.values(j, i) = score;
  });

  for (Eigen::Index i = 0; i < v; ++i) {
    if (std::abs(out.values(i, i) - 1.0) > 1e-9) {
      throw ValidationError("self-similarity of " + std::string(variant_name(out.variants[i])) +
                            " is " + std::to_string(out.values(i, i)) + ", expected 1");
    }
  }
  out.ill_conditioned = std::any_of(flagged.begin(), flagged.end(), [](char f) { return f; });
  return out;
}

std::string similarity_to_csv(const SimilarityMatrix& matrix) {
  std::ostringstream out;
  out << "variant";
  for (const Variant v : matrix.variants) out << ',' << variant_name(v);
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < matrix.variants.size(); ++i) {
    out << variant_name(matrix.variants[i]);
    for (std::size_t j = 0; j < matrix.variants.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g",
                    matrix.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

SimilarityMatrix similarity_from_csv(std::string_view csv, Metric metric) {
  std::istringstream in{std::string(csv)};
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("similarity CSV is empty");
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "variant") {
    throw ValidationError("similarity CSV header must start with 'variant'");
  }
  SimilarityMatrix out;
  out.metric = metric;
  for (std::size_t j = 1; j < header.size(); ++j) {
    const auto v = parse_variant(header[j]);
    if (!v) throw ValidationError("unknown variant '" + header[j] + "' in similarity CSV");
    out.variants.push_back(*v);
  }
  const auto size = static_cast<Eigen::Index>(out.variants.size());
  out.values = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    if (!std::getline(in, line)) throw ValidationError("similarity CSV has too few rows");
    const auto cells = split(line);
    if (cells.size() != header.size() ||
        cells[0] != variant_name(out.variants[static_cast<std::size_t>(i)])) {
      throw ValidationError("similarity CSV row " + std::to_string(i + 1) + " is malformed");
    }
    for (Eigen::Index j = 0; j < size; ++j) {
      out.values(i, j) = std::stod(cells[static_cast<std::size_t>(j) + 1]);
    }
  }
  return out;
}

}  // namespace repsim
