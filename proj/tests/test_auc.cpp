#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ucf/evalkit.hpp"
#include "ucf/rng.hpp"

using namespace ucf;

namespace {

// independent oracle: pairwise win rate over all positive-negative pairs,
// ties worth one half
double auc_bruteforce(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auc on the worked four-sample case is 0.75") {
  const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> labels{0, 0, 1, 1};
  CHECK(auc(scores, labels) == doctest::Approx(0.75));
  CHECK(auc_bruteforce(scores, labels) == doctest::Approx(0.75));
}

TEST_CASE("perfectly separated scores give 1.0") {
  CHECK(auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == doctest::Approx(1.0));
}

TEST_CASE("all-equal scores give 0.5") {
  CHECK(auc({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0}) == doctest::Approx(0.5));
}

TEST_CASE("single-class input is an undefined metric") {
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), UndefinedMetricError);
}

TEST_CASE("complement identity: auc(scores, 1-labels) = 1 - auc") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform(30));
    std::vector<double> scores;
    std::vector<int> labels, flipped;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      scores.push_back(rng.uniform_real());
      const int l = static_cast<int>(rng.uniform(2));
      labels.push_back(l);
      flipped.push_back(1 - l);
      pos += l;
    }
    if (pos == 0 || pos == n) continue;
    CHECK(auc(scores, flipped) ==
          doctest::Approx(1.0 - auc(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("invariance under strictly increasing score transforms") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform(20));
    std::vector<double> scores, warped;
    std::vector<int> labels;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      const double s = rng.uniform_real(-3.0, 3.0);
      scores.push_back(s);
      warped.push_back(std::exp(0.7 * s) + std::atan(s));
      const int l = static_cast<int>(rng.uniform(2));
      labels.push_back(l);
      pos += l;
    }
    if (pos == 0 || pos == n) continue;
    CHECK(auc(warped, labels) == doctest::Approx(auc(scores, labels)));
  }
}

TEST_CASE("rank implementation equals the brute-force oracle, ties included") {
  Rng rng(13);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform(49));
    std::vector<double> scores;
    std::vector<int> labels;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      // quantized scores force duplicate values
      scores.push_back(rng.uniform(8) / 7.0);
      const int l = static_cast<int>(rng.uniform(2));
      labels.push_back(l);
      pos += l;
    }
    if (pos == 0 || pos == n) continue;
    ++checked;
    CHECK(auc(scores, labels) ==
          doctest::Approx(auc_bruteforce(scores, labels)).epsilon(1e-12));
  }
  CHECK(checked > 150);
}
