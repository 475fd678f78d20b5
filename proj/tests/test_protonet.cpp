#include "fspc/protonet.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fspc;

TEST(Prototypes, OneShotIsTheSupport) {
  std::mt19937_64 rng(1);
  const Matrix s = oracle::random_matrix(3, 4, rng);
  const std::vector<int> labels{0, 1, 2};
  EXPECT_TRUE(compute_prototypes(s, labels, 3) == s);
}

TEST(Prototypes, Midpoint) {
  Matrix s(2, 2);
  s << 0, 0, 2, 2;
  const std::vector<int> labels{0, 0};
  const Matrix p = compute_prototypes(s, labels, 1);
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p(0, 1), 1.0);
}

TEST(Prototypes, MatchesPerClassMean) {
  std::mt19937_64 rng(2);
  const Matrix s = oracle::random_matrix(15, 4, rng);
  std::vector<int> labels;
  for (int i = 0; i < 15; ++i) labels.push_back(i % 3);
  const Matrix p = compute_prototypes(s, labels, 3);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 4; ++t) {
      double sum = 0.0;
      for (int i = c; i < 15; i += 3) sum += s(i, t);
      EXPECT_NEAR(p(c, t), sum / 5.0, 1e-12);
    }
}

TEST(Prototypes, Errors) {
  const Matrix s = Matrix::Zero(3, 2);
  const std::vector<int> missing{0, 0, 0};
  EXPECT_THROW(compute_prototypes(s, missing, 2), Error);
  const std::vector<int> unequal{0, 0, 1};
  EXPECT_THROW(compute_prototypes(s, unequal, 2), Error);
}

TEST(Classify, ClosedFormSoftmax) {
  Matrix p(2, 1);
  p << 0, std::sqrt(std::log(3.0));
  const Matrix q = Matrix::Zero(1, 1);
  const Matrix probs = classify(p, q);
  EXPECT_NEAR(probs(0, 0), 0.75, 1e-12);
  EXPECT_NEAR(probs(0, 1), 0.25, 1e-12);
}

TEST(Classify, EquidistantIsUniform) {
  Matrix p(4, 2);
  p << 1, 0, -1, 0, 0, 1, 0, -1;
  const Matrix probs = classify(p, Matrix::Zero(1, 2));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(probs(0, i), 0.25, 1e-15);
}

TEST(Classify, MatchesDirectFormula) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix p = oracle::random_matrix(5, 6, rng);
    const Matrix q = oracle::random_matrix(4, 6, rng);
    const Matrix got = classify(p, q);
    const auto want = oracle::classify(oracle::to_mat(p), oracle::to_mat(q));
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 5; ++i) EXPECT_NEAR(got(j, i), want[j][i], 1e-9);
  }
}

TEST(Classify, FarQueriesStayFinite) {
  Matrix p(2, 1);
  p << 0, 1;
  Matrix q(1, 1);
  q << 1000;
  const Matrix probs = classify(p, q);
  EXPECT_TRUE(probs.allFinite());
  EXPECT_NEAR(probs(0, 1), 1.0, 1e-12);
}

TEST(Classify, WidthMismatch) {
  EXPECT_THROW(classify(Matrix::Zero(2, 3), Matrix::Zero(1, 2)), Error);
}

TEST(Loss, PerfectPredictionIsZero) {
  Matrix probs = Matrix::Zero(3, 3);
  probs.diagonal().setOnes();
  const std::vector<int> y{0, 1, 2};
  EXPECT_DOUBLE_EQ(episode_loss(probs, y), 0.0);
  EXPECT_DOUBLE_EQ(episode_accuracy(probs, y), 1.0);
}

TEST(Loss, UniformFiveWay) {
  const Matrix probs = Matrix::Constant(10, 5, 0.2);
  std::vector<int> y(10);
  for (int j = 0; j < 10; ++j) y[j] = j % 5;
  EXPECT_NEAR(episode_loss(probs, y), std::log(5.0) / 5.0, 1e-12);
  EXPECT_NEAR(episode_loss(probs, y), 0.3219, 1e-4);
}

TEST(Loss, MatchesDoubleSum) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix probs = oracle::random_matrix(6, 3, rng, 0.05, 1.0);
    for (int j = 0; j < 6; ++j) probs.row(j) /= probs.row(j).sum();
    std::vector<int> y;
    for (int j = 0; j < 6; ++j) y.push_back(static_cast<int>(rng() % 3));
    EXPECT_NEAR(episode_loss(probs, y), oracle::loss(oracle::to_mat(probs), y), 1e-9);
  }
}

TEST(Loss, LabelOutOfRange) {
  const Matrix probs = Matrix::Constant(2, 3, 1.0 / 3.0);
  const std::vector<int> y{0, 3};
  EXPECT_THROW(episode_loss(probs, y), Error);
  const std::vector<int> neg{0, -1};
  EXPECT_THROW(episode_accuracy(probs, neg), Error);
}

TEST(Loss, ZeroProbabilityIsFloored) {
  Matrix probs(1, 2);
  probs << 1.0, 0.0;
  const std::vector<int> y{1};
  EXPECT_NEAR(episode_loss(probs, y), -std::log(kLogFloor) / 2.0, 1e-9);
}

TEST(Accuracy, TiesGoToTheFirstClass) {
  const Matrix probs = Matrix::Constant(4, 5, 0.2);
  const std::vector<int> y(4, 0);
  EXPECT_DOUBLE_EQ(episode_accuracy(probs, y), 1.0);
}

TEST(Accuracy, MatchesCounting) {
  std::mt19937_64 rng(5);
  const Matrix probs = oracle::random_matrix(40, 5, rng, 0, 1);
  std::vector<int> y;
  int correct = 0;
  for (int j = 0; j < 40; ++j) {
    y.push_back(static_cast<int>(rng() % 5));
    int best = 0;
    for (int i = 1; i < 5; ++i)
      if (probs(j, i) > probs(j, best)) best = i;
    correct += best == y.back();
  }
  EXPECT_DOUBLE_EQ(episode_accuracy(probs, y), correct / 40.0);
}

TEST(HeadBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const Matrix P = oracle::random_matrix(3, 4, rng);
  const Matrix Q = oracle::random_matrix(5, 4, rng);
  const std::vector<int> y{0, 1, 2, 0, 1};
  const HeadGradients g = episode_loss_backward(P, Q, classify(P, Q), y);
  const double h = 1e-6;
  auto loss_at = [&](const Matrix& p, const Matrix& q) { return episode_loss(classify(p, q), y); };
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 4; ++t) {
      Matrix up = P, dn = P;
      up(i, t) += h;
      dn(i, t) -= h;
      EXPECT_NEAR(g.prototypes(i, t), (loss_at(up, Q) - loss_at(dn, Q)) / (2 * h), 1e-7);
    }
  for (int j = 0; j < 5; ++j)
    for (int t = 0; t < 4; ++t) {
      Matrix up = Q, dn = Q;
      up(j, t) += h;
      dn(j, t) -= h;
      EXPECT_NEAR(g.queries(j, t), (loss_at(P, up) - loss_at(P, dn)) / (2 * h), 1e-7);
    }
}

TEST(Classify, TranslationInvariant) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix P = oracle::random_matrix(4, 5, rng);
    const Matrix Q = oracle::random_matrix(6, 5, rng);
    const RowVector shift = oracle::random_matrix(1, 5, rng, -10, 10).row(0);
    const Matrix a = classify(P, Q);
    const Matrix b = classify(P.rowwise() + shift, Q.rowwise() + shift);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Classify, CloserPrototypeGainsProbability) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix P = oracle::random_matrix(3, 4, rng);
    const Matrix q = oracle::random_matrix(1, 4, rng);
    const double before = classify(P, q)(0, 1);
    P.row(1) = q.row(0) + 0.5 * (P.row(1) - q.row(0));
    EXPECT_GT(classify(P, q)(0, 1), before);
  }
}
