#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dlap/error.hpp"
#include "dlap/metrics.hpp"
#include "dlap/random.hpp"

using namespace dlap;
using namespace dlap::eval;

namespace {

// Textbook formulas evaluated directly in long double, independent of the
// production code's pairing of marginals and its shared helpers.
struct Oracle {
  long double precision, recall, f1, fpr, mcc;
};

Oracle oracle(long double tp, long double fp, long double tn, long double fn) {
  Oracle o{};
  o.precision = (tp + fp) == 0 ? 0 : tp / (tp + fp);
  o.recall = (tp + fn) == 0 ? 0 : tp / (tp + fn);
  o.f1 = (o.precision + o.recall) == 0 ? 0 : 2 * o.precision * o.recall / (o.precision + o.recall);
  o.fpr = (fp + tn) == 0 ? 0 : fp / (fp + tn);
  const long double prod = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  o.mcc = prod == 0 ? 0 : (tp * tn - fp * fn) / std::sqrt(prod);
  return o;
}

}  // namespace

TEST(Confusion, CountsMixedVerdicts) {
  const auto c = confusion(std::vector<bool>{true, false, true, false}, std::vector<bool>{true, false, false, true});
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 1}));
}

TEST(Confusion, AllCorrect) {
  const auto c = confusion(std::vector<bool>{true, true, false, false}, std::vector<bool>{true, true, false, false});
  EXPECT_EQ(c.tp + c.tn, 4u);
  EXPECT_EQ(c.fp + c.fn, 0u);
}

TEST(Confusion, EmptyIsZero) {
  EXPECT_EQ(confusion(std::vector<bool>{}, std::vector<bool>{}), ConfusionCounts{});
}

TEST(Confusion, LengthMismatchThrows) {
  try {
    confusion(std::vector<bool>{true}, std::vector<bool>{true, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Confusion, UnparseablePolicy) {
  const std::vector<llm::Decision> d = {llm::Decision::kUnparseable, llm::Decision::kYes, llm::Decision::kNo};
  const std::vector<bool> y = {true, true, false};
  EXPECT_EQ(confusion(d, y), (ConfusionCounts{1, 0, 1, 1}));
  EXPECT_EQ(confusion(d, y, true), (ConfusionCounts{2, 0, 1, 0}));
}

TEST(Fpr, Examples) {
  EXPECT_DOUBLE_EQ(fpr({0, 1, 3, 0}), 0.25);
  EXPECT_EQ(fpr({0, 0, 10, 0}), 0.0);
  EXPECT_EQ(fpr({}), 0.0);
}

TEST(Mcc, Anchors) {
  EXPECT_EQ(mcc({5, 0, 5, 0}), 1.0);
  EXPECT_EQ(mcc({1, 1, 1, 1}), 0.0);
  EXPECT_NEAR(mcc({3, 1, 4, 2}), 10.0 / std::sqrt(600.0), 1e-12);
  EXPECT_NEAR(mcc({3, 1, 4, 2}), 0.4082, 1e-4);
}

TEST(Mcc, ZeroMarginalIsZero) {
  EXPECT_EQ(mcc({0, 0, 5, 5}), 0.0);
  EXPECT_EQ(mcc({5, 5, 0, 0}), 0.0);
}

TEST(Mcc, PerfectlyWrongIsMinusOne) { EXPECT_EQ(mcc({0, 4, 0, 4}), -1.0); }

TEST(PrecisionRecallF1, Examples) {
  const auto a = precision_recall_f1({3, 1, 0, 2});
  EXPECT_DOUBLE_EQ(a.precision, 0.75);
  EXPECT_DOUBLE_EQ(a.recall, 0.6);
  EXPECT_NEAR(a.f1, 2.0 / 3.0, 1e-12);
  const auto b = precision_recall_f1({0, 0, 0, 5});
  EXPECT_EQ(b.precision, 0.0);
  EXPECT_EQ(b.recall, 0.0);
  EXPECT_EQ(b.f1, 0.0);
  const auto c = precision_recall_f1({7, 0, 3, 0});
  EXPECT_EQ(c.precision, 1.0);
  EXPECT_EQ(c.recall, 1.0);
  EXPECT_EQ(c.f1, 1.0);
}

TEST(Cv, Anchors) {
  EXPECT_EQ(cv(std::vector<double>{2, 2, 2}), 0.0);
  EXPECT_DOUBLE_EQ(cv(std::vector<double>{0, 1}), 1.0);
  EXPECT_THROW(cv(std::vector<double>{0, 0}), Error);
  EXPECT_THROW(cv(std::vector<double>{}), Error);
}

TEST(Report, NotesZeroDenominators) {
  const auto r = make_report({0, 0, 0, 0});
  EXPECT_EQ(r.notes.size(), 4u);
  EXPECT_TRUE(make_report({2, 1, 3, 1}).notes.empty());
}

TEST(MetricsProperty, MatchesOracleOnRandomMatrices) {
  SeededRng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    ConfusionCounts c{rng.below(500), rng.below(500), rng.below(500), rng.below(500)};
    if (i % 10 == 0) c.fp = 0;
    if (i % 13 == 0) c.tp = 0;
    const auto o = oracle(c.tp, c.fp, c.tn, c.fn);
    const auto r = make_report(c);
    EXPECT_NEAR(r.precision, static_cast<double>(o.precision), 1e-12);
    EXPECT_NEAR(r.recall, static_cast<double>(o.recall), 1e-12);
    EXPECT_NEAR(r.f1, static_cast<double>(o.f1), 1e-12);
    EXPECT_NEAR(r.fpr, static_cast<double>(o.fpr), 1e-12);
    EXPECT_NEAR(r.mcc, static_cast<double>(o.mcc), 1e-12);
  }
}

TEST(MetricsProperty, BoundsAndMccIdentity) {
  SeededRng rng(99);
  for (int i = 0; i < 2000; ++i) {
    ConfusionCounts c{rng.below(6), rng.below(6), rng.below(6), rng.below(6)};
    const auto r = make_report(c);
    for (double v : {r.precision, r.recall, r.f1, r.fpr}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(r.mcc, -1.0);
    EXPECT_LE(r.mcc, 1.0);
    const bool perfect = c.fp == 0 && c.fn == 0 && c.tp > 0 && c.tn > 0;
    EXPECT_EQ(r.mcc == 1.0, perfect) << c.tp << " " << c.fp << " " << c.tn << " " << c.fn;
  }
}

TEST(MetricsProperty, CountsSumToSamples) {
  SeededRng rng(5);
  std::vector<bool> p, y;
  for (int i = 0; i < 257; ++i) {
    p.push_back(rng.below(2));
    y.push_back(rng.below(2));
  }
  const auto c = confusion(p, y);
  EXPECT_EQ(c.tp + c.fp + c.tn + c.fn, 257u);
}
