#include <cmath>
#include <vector>

#include "doctest.h"
#include "magfuse/metrics.hpp"
#include "magfuse/rng.hpp"

using namespace magfuse;

namespace {

// Straight-line reimplementations used as oracles; kept independent of the
// library's code paths.
double oracle_accuracy(const std::vector<double>& p, const std::vector<double>& l) {
  std::size_t n = 0, ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (l[i] == 0.0) continue;
    ++n;
    const bool pp = p[i] >= 0.0, lp = l[i] > 0.0;
    if (pp == lp) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(n);
}

double oracle_f1(const std::vector<double>& p, const std::vector<double>& l) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (l[i] == 0.0) continue;
    const bool pp = p[i] >= 0.0, lp = l[i] > 0.0;
    if (pp && lp) ++tp;
    if (pp && !lp) ++fp;
    if (!pp && lp) ++fn;
  }
  const double denom = 2 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2 * tp / denom;
}

double oracle_mae(const std::vector<double>& p, const std::vector<double>& l) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - l[i]);
  return s / static_cast<double>(p.size());
}

double oracle_pearson(const std::vector<double>& p, const std::vector<double>& l) {
  const double n = static_cast<double>(p.size());
  double mp = 0, ml = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mp += p[i];
    ml += l[i];
  }
  mp /= n;
  ml /= n;
  double cov = 0, vp = 0, vl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cov += (p[i] - mp) * (l[i] - ml);
    vp += (p[i] - mp) * (p[i] - mp);
    vl += (l[i] - ml) * (l[i] - ml);
  }
  return cov / std::sqrt(vp * vl);
}

}  // namespace

TEST_CASE("binary_accuracy: sign agreement with zero-label exclusion") {
  CHECK(binary_accuracy(std::vector<double>{1.2, -0.5}, std::vector<double>{2.0, -1.0}) ==
        1.0);
  CHECK(binary_accuracy(std::vector<double>{1, -1}, std::vector<double>{-1, 1}) == 0.0);
  // Zero label excluded, one of the remaining two correct.
  CHECK(binary_accuracy(std::vector<double>{1, 1, -1}, std::vector<double>{0, 2, 1}) ==
        0.5);
  // pred == 0 counts as positive.
  CHECK(binary_accuracy(std::vector<double>{0.0}, std::vector<double>{1.0}) == 1.0);
  CHECK_THROWS_AS(
      binary_accuracy(std::vector<double>{1.0}, std::vector<double>{0.0}), DataError);
}

TEST_CASE("f1_binary: confusion-matrix cases") {
  CHECK(f1_binary(std::vector<double>{1, -1, 2}, std::vector<double>{3, -2, 1}) == 1.0);
  // TP=2, FP=1, FN=1 -> 2*2 / (2*2 + 1 + 1) = 2/3.
  const std::vector<double> preds{1, 1, 1, -1};
  const std::vector<double> labels{1, 1, -1, 1};
  CHECK(f1_binary(preds, labels) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  // All predictions negative, all labels positive -> 0 (denominator guard).
  CHECK(f1_binary(std::vector<double>{-1, -1}, std::vector<double>{1, 1}) == 0.0);
}

TEST_CASE("mae: hand cases and symmetry") {
  CHECK(mae(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
  CHECK(mae(std::vector<double>{0, 0}, std::vector<double>{3, -3}) == 3.0);
  Rng rng(17);
  std::vector<double> a(50), b(50);
  for (auto& v : a) v = rng.uniform(-3, 3);
  for (auto& v : b) v = rng.uniform(-3, 3);
  CHECK(mae(a, b) == doctest::Approx(mae(b, a)).epsilon(1e-15));
}

TEST_CASE("pearson: exact cases and the textbook-formula oracle") {
  const std::vector<double> x{1, 2, 3, 5};
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> neg(x);
  for (auto& v : neg) v = -v;
  CHECK(pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));

  const std::vector<double> y{2, 4, 5, 9};
  CHECK(pearson(x, y) == doctest::Approx(oracle_pearson(x, y)).epsilon(1e-12));

  CHECK_THROWS_AS(pearson(std::vector<double>{1, 1}, std::vector<double>{1, 2}),
                  DataError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{5, 5}),
                  DataError);
}

TEST_CASE("metrics match brute-force oracles on 1000 random pairs") {
  Rng rng(71);
  std::vector<double> preds(1000), labels(1000);
  for (auto& v : preds) v = rng.uniform(-3, 3);
  for (auto& v : labels) v = rng.uniform(-3, 3);
  CHECK(std::fabs(binary_accuracy(preds, labels) - oracle_accuracy(preds, labels)) <
        1e-9);
  CHECK(std::fabs(f1_binary(preds, labels) - oracle_f1(preds, labels)) < 1e-9);
  CHECK(std::fabs(mae(preds, labels) - oracle_mae(preds, labels)) < 1e-12);
  CHECK(std::fabs(pearson(preds, labels) - oracle_pearson(preds, labels)) < 1e-12);
}

TEST_CASE("pearson: invariant under positive affine transforms") {
  Rng rng(73);
  std::vector<double> x(200), y(200);
  for (auto& v : x) v = rng.uniform(-3, 3);
  for (auto& v : y) v = rng.uniform(-3, 3);
  const double base = pearson(x, y);
  std::vector<double> xt(x);
  for (auto& v : xt) v = 2.5 * v + 7.0;
  std::vector<double> yt(y);
  for (auto& v : yt) v = 0.3 * v - 11.0;
  CHECK(std::fabs(pearson(xt, y) - base) < 1e-9);
  CHECK(std::fabs(pearson(x, yt) - base) < 1e-9);
  CHECK(std::fabs(pearson(xt, yt) - base) < 1e-9);
}

TEST_CASE("accuracy/f1 invariant under sign-preserving transforms") {
  Rng rng(79);
  std::vector<double> preds(300), labels(300);
  for (auto& v : preds) v = rng.uniform(-3, 3);
  for (auto& v : labels) v = rng.uniform(-3, 3);
  const double acc = binary_accuracy(preds, labels);
  const double f1 = f1_binary(preds, labels);
  std::vector<double> cubed(preds);
  for (auto& v : cubed) v = v * v * v * 10.0;  // strictly sign-preserving
  CHECK(binary_accuracy(cubed, labels) == acc);
  CHECK(f1_binary(cubed, labels) == f1);
}

TEST_CASE("MetricsReport serializes with the exact field names") {
  const std::vector<double> preds{1, -1, 0.5};
  const std::vector<double> labels{2, -2, 0};
  MetricsReport r = compute_metrics(preds, labels);
  CHECK(r.n_evaluated == 2);
  CHECK(r.n_excluded_zero_labels == 1);
  CHECK(r.n_evaluated + r.n_excluded_zero_labels == labels.size());
  const std::string j = r.to_json();
  for (const char* key :
       {"\"accuracy\"", "\"f1\"", "\"mae\"", "\"corr\"", "\"n_evaluated\"",
        "\"n_excluded_zero_labels\""})
    CHECK(j.find(key) != std::string::npos);
  CHECK(j.find("emotion_mae") == std::string::npos);
}

TEST_CASE("MetricsReport omits corr when undefined") {
  // Constant predictions: correlation undefined, never silently zero.
  MetricsReport r = compute_metrics(std::vector<double>{1, 1, 1},
                                    std::vector<double>{1, -1, 2});
  CHECK_FALSE(r.corr.has_value());
  CHECK(r.to_json().find("\"corr\"") == std::string::npos);
}
