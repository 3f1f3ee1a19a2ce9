#include "repsim/linear_probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "repsim/error.hpp"
#include "repsim/parallel.hpp"
#include "repsim/random.hpp"

namespace repsim {

std::vector<Fold> stratified_folds(std::span<const std::int64_t> labels, int n_folds,
                                   std::uint64_t seed) {
  if (n_folds < 2) throw ValidationError("n_folds must be at least 2, got " + std::to_string(n_folds));
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, members] : by_class) {
    if (members.size() < static_cast<std::size_t>(n_folds)) {
      throw ValidationError("class " + std::to_string(label) + " has " +
                            std::to_string(members.size()) + " < " + std::to_string(n_folds) +
                            " members");
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> fold_of(labels.size());
  std::size_t position = 0;
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    for (const std::size_t idx : members) {
      fold_of[idx] = position++ % static_cast<std::size_t>(n_folds);
    }
  }

  std::vector<Fold> folds(static_cast<std::size_t>(n_folds));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < folds.size(); ++f) {
      (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
    }
  }
  return folds;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  s.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean;
  s.scale = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

SoftmaxObjective::SoftmaxObjective(const Eigen::MatrixXd& x, std::span<const int> targets,
                                   int n_classes, double l2_penalty)
    : x_(x), targets_(targets.begin(), targets.end()), n_classes_(n_classes), l2_penalty_(l2_penalty) {
  if (static_cast<std::size_t>(x.rows()) != targets_.size()) {
    throw ValidationError("objective: row count does not match target count");
  }
  if (x.rows() == 0) throw ValidationError("objective: no training rows");
}

double SoftmaxObjective::evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& grad) const {
  const Eigen::Index d = x_.cols();
  const Eigen::Index k = n_classes_;
  const Eigen::Index n = x_.rows();
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> packed(params.data(), k, d + 1);
  const auto w = packed.leftCols(d);
  const auto b = packed.col(d);

  Eigen::MatrixXd logits = x_ * w.transpose();  // n x K
  logits.rowwise() += b.transpose();

  double loss = 0.0;
  Eigen::MatrixXd residual(n, k);  // softmax - onehot
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - top).exp().matrix();
    const double z = e.sum();
    residual.row(i) = e / z;
    const int t = targets_[static_cast<std::size_t>(i)];
    loss += std::log(z) - (logits(i, t) - top);
    residual(i, t) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss = loss * inv_n + 0.5 * l2_penalty_ * w.squaredNorm();

  grad.resize(params.size());
  Eigen::Map<RowMajor> g(grad.data(), k, d + 1);
  g.leftCols(d) = inv_n * (residual.transpose() * x_) + l2_penalty_ * w;
  g.col(d) = inv_n * residual.colwise().sum().transpose();
  return loss;
}

std::vector<std::int64_t> LinearModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd logits = x * weights.transpose();
  logits.rowwise() += bias.transpose();
  std::vector<std::int64_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(best)];
  }
  return out;
}

LinearModel fit_linear_classifier(const Eigen::MatrixXd& x, std::span<const std::int64_t> y,
                                  const ProbeConfig& config) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw ValidationError("fit: " + std::to_string(x.rows()) + " rows but " +
                          std::to_string(y.size()) + " labels");
  }
  if (config.l2_penalty < 0.0) throw ValidationError("l2_penalty must be non-negative");

  LinearModel model;
  model.classes.assign(y.begin(), y.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (x.rows() < static_cast<Eigen::Index>(model.classes.size()) || model.classes.empty()) {
    throw ValidationError("fit: need at least as many training rows as classes");
  }
  std::vector<int> targets(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    targets[i] = static_cast<int>(
        std::lower_bound(model.classes.begin(), model.classes.end(), y[i]) - model.classes.begin());
  }
  const int k = static_cast<int>(model.classes.size());
  const SoftmaxObjective objective(x, targets, k, config.l2_penalty);

  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;

  Eigen::VectorXd params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(objective.parameter_count()));
  Eigen::VectorXd grad;
  double loss = objective.evaluate(params, grad);
  model.loss_history.push_back(loss);

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd trial;
  Eigen::VectorXd trial_grad;

  int iter = 0;
  for (; iter < config.max_iterations; ++iter) {
    if (grad.norm() <= config.convergence_tol) {
      model.converged = true;
      break;
    }
    // Two-loop recursion for -H * grad.
    Eigen::VectorXd direction = -grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t m = s_hist.size(); m-- > 0;) {
      alpha[m] = rho_hist[m] * s_hist[m].dot(direction);
      direction -= alpha[m] * y_hist[m];
    }
    if (!s_hist.empty()) {
      direction *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    }
    for (std::size_t m = 0; m < s_hist.size(); ++m) {
      const double beta = rho_hist[m] * y_hist[m].dot(direction);
      direction += (alpha[m] - beta) * s_hist[m];
    }
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      direction = -grad;
      slope = -grad.squaredNorm();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / grad.norm()) : 1.0;
    bool accepted = false;
    double trial_loss = loss;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      trial = params + step * direction;
      trial_loss = objective.evaluate(trial, trial_grad);
      if (std::isfinite(trial_loss) && trial_loss <= loss + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no decrease possible at working precision

    Eigen::VectorXd s = trial - params;
    Eigen::VectorXd yv = trial_grad - grad;
    const double sy = s.dot(yv);
    params.swap(trial);
    grad.swap(trial_grad);
    loss = trial_loss;
    model.loss_history.push_back(loss);
    if (sy > 1e-12 * yv.squaredNorm()) {
      if (s_hist.size() == kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
    }
  }
  if (!model.converged && grad.norm() <= config.convergence_tol) model.converged = true;

  const Eigen::Index d = x.cols();
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> packed(params.data(), k, d + 1);
  model.weights = packed.leftCols(d);
  model.bias = packed.col(d);
  model.iterations = iter;
  model.loss = loss;
  model.gradient_norm = grad.norm();
  return model;
}

double balanced_accuracy(std::span<const std::int64_t> y_true,
                         std::span<const std::int64_t> y_pred, std::int64_t n_classes) {
  if (y_true.empty()) throw ValidationError("balanced_accuracy: empty input");
  if (y_true.size() != y_pred.size()) {
    throw ValidationError("balanced_accuracy: " + std::to_string(y_true.size()) + " truths vs " +
                          std::to_string(y_pred.size()) + " predictions");
  }
  std::vector<std::size_t> total(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::size_t> correct(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    for (const auto label : {y_true[i], y_pred[i]}) {
      if (label < 0 || label >= n_classes) {
        throw ValidationError("balanced_accuracy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(n_classes) + ")");
      }
    }
    const auto t = static_cast<std::size_t>(y_true[i]);
    ++total[t];
    if (y_pred[i] == y_true[i]) ++correct[t];
  }
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < total.size(); ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    ++present;
  }
  return sum / present;
}

ProbeReport run_probe(std::span<const FeatureMatrix> matrices, const ProbeConfig& config,
                      std::string model_name, std::string dataset_name) {
  if (matrices.empty()) throw ValidationError("probe: no variants to evaluate");
  require_aligned(matrices);
  const auto& labels = matrices.front().labels();
  for (const auto& m : matrices) {
    if (m.labels() != labels) {
      throw ValidationError("probe: labels of " + std::string(variant_name(m.variant())) +
                            " differ from " +
                            std::string(variant_name(matrices.front().variant())));
    }
  }
  const std::int64_t n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  const std::vector<Fold> folds = stratified_folds(labels, config.n_folds, config.seed);

  std::vector<Eigen::MatrixXd> inputs;
  inputs.reserve(matrices.size());
  for (const auto& m : matrices) inputs.push_back(m.to_double());

  auto gather = [](const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
  };
  auto pick = [&](const std::vector<std::size_t>& rows) {
    std::vector<std::int64_t> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
    return out;
  };

  const std::size_t n_folds = folds.size();
  std::vector<double> scores(matrices.size() * n_folds);
  std::vector<char> converged(scores.size());
  parallel_for(scores.size(), [&](std::size_t task) {
    const std::size_t v = task / n_folds;
    const Fold& fold = folds[task % n_folds];
    const Eigen::MatrixXd train_raw = gather(inputs[v], fold.train);
    const Standardizer scaler = Standardizer::fit(train_raw);
    const LinearModel model =
        fit_linear_classifier(scaler.apply(train_raw), pick(fold.train), config);
    const auto predicted = model.predict(scaler.apply(gather(inputs[v], fold.test)));
    scores[task] = balanced_accuracy(pick(fold.test), predicted, n_classes);
    converged[task] = model.converged ? 1 : 0;
  });

  ProbeReport report;
  report.model_name = std::move(model_name);
  report.dataset_name = std::move(dataset_name);
  report.config = config;
  for (std::size_t v = 0; v < matrices.size(); ++v) {
    VariantScore score;
    for (std::size_t f = 0; f < n_folds; ++f) {
      score.per_fold.push_back(scores[v * n_folds + f]);
      score.converged.push_back(converged[v * n_folds + f] != 0);
    }
    const double k = static_cast<double>(n_folds);
    score.mean = std::accumulate(score.per_fold.begin(), score.per_fold.end(), 0.0) / k;
    double var = 0.0;
    for (const double s : score.per_fold) var += (s - score.mean) * (s - score.mean);
    score.std = std::sqrt(var / k);
    report.per_variant.emplace(matrices[v].variant(), std::move(score));
  }
  return report;
}

namespace {

std::string two_decimals(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", std::round(value * 100.0) / 100.0);
  std::string s = buf;
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  if (s == "-0.0") s = "0.0";
  return s;
}

}  // namespace

std::string format_mean_std(double mean, double std) {
  return two_decimals(mean) + "_(" + two_decimals(std) + ")";
}

std::string probe_table(const ProbeReport& report) {
  std::vector<std::string> header{"Variation"};
  std::vector<std::string> row{report.model_name.empty() ? "model" : report.model_name};
  for (const auto& [variant, score] : report.per_variant) {
    std::string name(variant_name(variant));
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    header.push_back(std::move(name));
    row.push_back(format_mean_std(score.mean, score.std));
  }
  std::ostringstream out;
  if (!report.dataset_name.empty()) out << "Dataset: " << report.dataset_name << '\n';
  for (const auto* cells : {&header, &row}) {
    for (std::size_t i = 0; i < cells->size(); ++i) {
      const std::size_t width = std::max(header[i].size(), row[i].size());
      out << (i ? " | " : "") << std::left << std::setw(static_cast<int>(width)) << (*cells)[i];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace repsim
