#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "repsim/error.hpp"
#include "repsim/linear_probe.hpp"
#include "support.hpp"

using namespace repsim;
using repsim::testing::gaussian;
using repsim::testing::make_features;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<std::int64_t> y;
};

Blobs blobs(Rng& rng, std::size_t per_class, int classes, Eigen::Index dim, double spread) {
  Blobs b;
  b.x = gaussian(rng, static_cast<Eigen::Index>(per_class) * classes, dim);
  for (int k = 0; k < classes; ++k) {
    Eigen::RowVectorXd centre = Eigen::RowVectorXd::Zero(dim);
    centre(k % dim) = 10.0;
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto row = static_cast<Eigen::Index>(static_cast<std::size_t>(k) * per_class + i);
      b.x.row(row) = spread * b.x.row(row) + centre;
      b.y.push_back(k);
    }
  }
  return b;
}

}  // namespace

TEST_CASE("stratified folds: balanced classes split evenly") {
  std::vector<std::int64_t> y(100);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i < 50 ? 0 : 1;
  const auto folds = stratified_folds(y, 5, 3);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> seen;
  for (const Fold& f : folds) {
    CHECK(f.test.size() == 20);
    CHECK(f.train.size() == 80);
    CHECK(std::count_if(f.test.begin(), f.test.end(), [&](std::size_t i) { return y[i] == 0; }) == 10);
    CHECK(std::is_sorted(f.test.begin(), f.test.end()));
    CHECK(std::is_sorted(f.train.begin(), f.train.end()));
    for (std::size_t i : f.test) CHECK(seen.insert(i).second);
    std::vector<std::size_t> both;
    std::set_intersection(f.train.begin(), f.train.end(), f.test.begin(), f.test.end(),
                          std::back_inserter(both));
    CHECK(both.empty());
  }
  CHECK(seen.size() == 100);
  CHECK(stratified_folds(y, 5, 3)[2].test == folds[2].test);
  CHECK(stratified_folds(y, 5, 4)[2].test != folds[2].test);
}

TEST_CASE("property: fold class counts are floor or ceil of the share") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const int k = 2 + static_cast<int>(rng.uniform_index(6));
    const int classes = 1 + static_cast<int>(rng.uniform_index(5));
    std::vector<std::int64_t> y;
    std::vector<std::size_t> sizes;
    for (int c = 0; c < classes; ++c) {
      const std::size_t m = static_cast<std::size_t>(k) + rng.uniform_index(30);
      sizes.push_back(m);
      for (std::size_t i = 0; i < m; ++i) y.push_back(c);
    }
    rng.shuffle(y);
    const auto folds = stratified_folds(y, k, t);
    std::size_t total = 0;
    for (const Fold& f : folds) {
      total += f.test.size();
      for (int c = 0; c < classes; ++c) {
        const auto count = static_cast<std::size_t>(
            std::count_if(f.test.begin(), f.test.end(), [&](std::size_t i) { return y[i] == c; }));
        CHECK(count >= sizes[static_cast<std::size_t>(c)] / static_cast<std::size_t>(k));
        CHECK(count <= (sizes[static_cast<std::size_t>(c)] + static_cast<std::size_t>(k) - 1) /
                           static_cast<std::size_t>(k));
      }
    }
    CHECK(total == y.size());
  }
}

TEST_CASE("stratified folds: too few members") {
  const std::vector<std::int64_t> y{0, 0, 1};
  CHECK_THROWS_WITH_AS(stratified_folds(y, 2, 0), doctest::Contains("class 1"), ValidationError);
  CHECK_THROWS_AS(stratified_folds(y, 1, 0), ValidationError);
}

TEST_CASE("standardizer uses training statistics") {
  Eigen::MatrixXd train(3, 2);
  train << 1, 5, 2, 5, 3, 5;
  const Standardizer s = Standardizer::fit(train);
  Eigen::MatrixXd test(1, 2);
  test << 4, 6;
  const Eigen::MatrixXd out = s.apply(test);
  CHECK(out(0, 0) == doctest::Approx(2.0 / std::sqrt(2.0 / 3.0)));
  CHECK(out(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("property: objective gradient matches finite differences") {
  Rng rng(32);
  for (int t = 0; t < 20; ++t) {
    const auto n = static_cast<Eigen::Index>(10 + rng.uniform_index(40));
    const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
    const int k = 2 + static_cast<int>(rng.uniform_index(4));
    const Eigen::MatrixXd x = gaussian(rng, n, d);
    std::vector<int> targets(static_cast<std::size_t>(n));
    for (auto& v : targets) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    const SoftmaxObjective obj(x, targets, k, 0.01 + rng.uniform());
    Eigen::VectorXd w(static_cast<Eigen::Index>(obj.parameter_count()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
    Eigen::VectorXd grad;
    obj.evaluate(w, grad);
    Eigen::VectorXd scratch;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double h = 1e-6;
      Eigen::VectorXd plus = w, minus = w;
      plus(i) += h;
      minus(i) -= h;
      const double fd = (obj.evaluate(plus, scratch) - obj.evaluate(minus, scratch)) / (2 * h);
      CHECK(std::abs(fd - grad(i)) <= 1e-5 * std::max(1.0, std::abs(grad(i))));
    }
  }
}

TEST_CASE("fit: separable data, convergence and monotone loss") {
  Rng rng(33);
  const Blobs b = blobs(rng, 40, 3, 4, 1.0);
  ProbeConfig cfg;
  const LinearModel m = fit_linear_classifier(b.x, b.y, cfg);
  CHECK(m.converged);
  CHECK(m.gradient_norm <= cfg.convergence_tol);
  CHECK(m.predict(b.x) == b.y);
  for (std::size_t i = 1; i < m.loss_history.size(); ++i) {
    CHECK(m.loss_history[i] <= m.loss_history[i - 1]);
  }
  CHECK(m.classes == std::vector<std::int64_t>{0, 1, 2});
}

TEST_CASE("fit: a huge penalty predicts the most frequent class") {
  Rng rng(34);
  Eigen::MatrixXd x = gaussian(rng, 30, 3);
  std::vector<std::int64_t> y(30, 4);
  for (std::size_t i = 0; i < 10; ++i) y[i] = 9;
  ProbeConfig cfg;
  cfg.l2_penalty = 1e6;
  const LinearModel m = fit_linear_classifier(x, y, cfg);
  for (std::int64_t p : m.predict(gaussian(rng, 20, 3))) CHECK(p == 4);
}

TEST_CASE("fit: non-convergence is reported, not thrown") {
  Rng rng(35);
  const Blobs b = blobs(rng, 30, 2, 3, 2.0);
  ProbeConfig cfg;
  cfg.max_iterations = 1;
  cfg.convergence_tol = 1e-14;
  const LinearModel m = fit_linear_classifier(b.x, b.y, cfg);
  CHECK_FALSE(m.converged);
  CHECK(m.iterations == 1);
}

TEST_CASE("balanced accuracy") {
  const std::vector<std::int64_t> t{0, 0, 1, 1};
  CHECK(balanced_accuracy(t, t, 2) == 1.0);
  CHECK(balanced_accuracy(std::vector<std::int64_t>{0, 0, 0, 1},
                          std::vector<std::int64_t>{0, 0, 0, 0}, 2) == 0.5);
  CHECK(balanced_accuracy(std::vector<std::int64_t>{0, 0, 1, 1, 2, 2},
                          std::vector<std::int64_t>{0, 0, 1, 0, 2, 2}, 3) == 5.0 / 6.0);
  // Classes absent from y_true do not count.
  CHECK(balanced_accuracy(std::vector<std::int64_t>{1, 1}, std::vector<std::int64_t>{1, 2}, 3) == 0.5);
  CHECK_THROWS_AS(balanced_accuracy(t, std::vector<std::int64_t>{0}, 2), ValidationError);
  CHECK_THROWS_AS(balanced_accuracy({}, {}, 2), ValidationError);
  CHECK_THROWS_AS(balanced_accuracy(t, std::vector<std::int64_t>{0, 0, 5, 1}, 2), ValidationError);
}

TEST_CASE("property: balanced accuracy is invariant to sample order") {
  Rng rng(36);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 5 + rng.uniform_index(50);
    std::vector<std::int64_t> yt(n), yp(n);
    for (std::size_t i = 0; i < n; ++i) {
      yt[i] = static_cast<std::int64_t>(rng.uniform_index(4));
      yp[i] = static_cast<std::int64_t>(rng.uniform_index(4));
    }
    const double base = balanced_accuracy(yt, yp, 4);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<std::int64_t> pt(n), pp(n);
    for (std::size_t i = 0; i < n; ++i) {
      pt[i] = yt[perm[i]];
      pp[i] = yp[perm[i]];
    }
    CHECK(std::abs(balanced_accuracy(pt, pp, 4) - base) <= 1e-12);
  }
}

TEST_CASE("run_probe: identical variants match, noise is at chance") {
  Rng rng(37);
  const std::size_t n = 1500;
  const Blobs b = blobs(rng, n / 3, 3, 8, 1.5);
  std::vector<FeatureMatrix> ms;
  ms.push_back(make_features(b.x, b.y, Variant::Original));
  ms.push_back(make_features(b.x, b.y, Variant::Center));
  ms.push_back(make_features(gaussian(rng, static_cast<Eigen::Index>(n), 8), b.y, Variant::Border));
  ProbeConfig cfg;
  const ProbeReport r = run_probe(ms, cfg, "m", "d");
  const VariantScore& o = r.per_variant.at(Variant::Original);
  CHECK(o.per_fold.size() == 5);
  CHECK(o.per_fold == r.per_variant.at(Variant::Center).per_fold);
  CHECK(o.mean >= 0.99);
  CHECK(std::abs(r.per_variant.at(Variant::Border).mean - 1.0 / 3.0) <= 0.05);

  const ProbeReport again = run_probe(ms, cfg, "m", "d");
  CHECK(again.per_variant.at(Variant::Border).per_fold ==
        r.per_variant.at(Variant::Border).per_fold);
  CHECK(probe_table(again) == probe_table(r));
}

TEST_CASE("format_mean_std") {
  CHECK(format_mean_std(0.5912, 0.001) == "0.59_(0.0)");
  CHECK(format_mean_std(0.3, 0.016) == "0.3_(0.02)");
  CHECK(format_mean_std(1.0, 0.0) == "1.0_(0.0)");
  CHECK(format_mean_std(0.999, 0.1) == "1.0_(0.1)");
}
