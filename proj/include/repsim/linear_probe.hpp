#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "repsim/feature_store.hpp"

namespace repsim {

struct ProbeConfig {
  int n_folds = 5;
  double l2_penalty = 1e-4;
  int max_iterations = 500;
  double convergence_tol = 1e-6;
  std::uint64_t seed = 17;
};

struct Fold {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// Class-stratified k-fold split. Each class is shuffled with the seed and
/// dealt round-robin across folds, continuing from where the previous
/// class stopped, so every fold gets floor or ceil of its share of each
/// class. Throws ValidationError naming the first class with fewer than
/// n_folds members.
std::vector<Fold> stratified_folds(std::span<const std::int64_t> labels, int n_folds,
                                   std::uint64_t seed);

/// Per-dimension affine map to zero mean and unit variance, fitted on
/// training rows. Dimensions with zero variance are only centred.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Mean softmax cross-entropy plus (l2 / 2) * ||W||^2 (bias unpenalised).
/// Parameters are packed as K rows of [w_k (d values), b_k].
class SoftmaxObjective {
 public:
  /// `targets` are compact class indices in [0, n_classes).
  SoftmaxObjective(const Eigen::MatrixXd& x, std::span<const int> targets, int n_classes,
                   double l2_penalty);

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(n_classes_) * static_cast<std::size_t>(x_.cols() + 1);
  }

  /// Loss at params; fills grad (resized as needed).
  double evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& grad) const;

 private:
  const Eigen::MatrixXd& x_;
  std::vector<int> targets_;
  int n_classes_;
  double l2_penalty_;
};

struct LinearModel {
  std::vector<std::int64_t> classes;  // original label per output row
  Eigen::MatrixXd weights;            // K x d
  Eigen::VectorXd bias;               // K
  bool converged = false;
  int iterations = 0;
  double loss = 0.0;
  double gradient_norm = 0.0;
  std::vector<double> loss_history;   // loss after each accepted step, starting at the initial point

  /// Arg-max class per row; ties go to the lower output index.
  std::vector<std::int64_t> predict(const Eigen::MatrixXd& x) const;
};

/// Multinomial logistic regression fitted by L-BFGS with a backtracking
/// Armijo line search. Runs to ||grad||_2 <= convergence_tol or
/// max_iterations; non-convergence is reported, not thrown.
LinearModel fit_linear_classifier(const Eigen::MatrixXd& x, std::span<const std::int64_t> y,
                                  const ProbeConfig& config);

/// Mean per-class recall over the classes present in y_true.
double balanced_accuracy(std::span<const std::int64_t> y_true,
                         std::span<const std::int64_t> y_pred, std::int64_t n_classes);

struct VariantScore {
  std::vector<double> per_fold;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<bool> converged;
};

struct ProbeReport {
  std::string model_name;
  std::string dataset_name;
  ProbeConfig config;
  std::map<Variant, VariantScore> per_variant;
};

/// k-fold linear evaluation with one fold assignment shared by all
/// variants. Standardisation statistics come from each training fold only.
ProbeReport run_probe(std::span<const FeatureMatrix> matrices, const ProbeConfig& config,
                      std::string model_name = {}, std::string dataset_name = {});

/// `mean_(std)`, both rounded to two decimals with trailing zeros dropped
/// (at least one decimal kept), e.g. "0.59_(0.0)".
std::string format_mean_std(double mean, double std);

/// Plain-text table with one header row of variant names and one row for
/// the model.
std::string probe_table(const ProbeReport& report);

}  // namespace repsim
