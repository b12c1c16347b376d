#include "dlap/metrics.hpp"

#include <cmath>

#include "dlap/error.hpp"

namespace dlap::eval {

namespace {

void tally(ConfusionCounts& c, bool predicted, bool actual) {
  if (predicted && actual) ++c.tp;
  else if (predicted) ++c.fp;
  else if (actual) ++c.fn;
  else ++c.tn;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
  if (predicted.size() != actual.size())
    throw Error(ErrorCode::kInvalidArgument,
                "confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                    std::to_string(actual.size()) + " labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) tally(c, predicted[i], actual[i]);
  return c;
}

ConfusionCounts confusion(const std::vector<llm::Decision>& decisions,
                          const std::vector<bool>& actual, bool unparseable_as_positive) {
  std::vector<bool> predicted;
  predicted.reserve(decisions.size());
  for (auto d : decisions)
    predicted.push_back(d == llm::Decision::kYes ||
                        (d == llm::Decision::kUnparseable && unparseable_as_positive));
  return confusion(predicted, actual);
}

double fpr(const ConfusionCounts& c) { return ratio(c.fp, c.fp + c.tn); }

double mcc(const ConfusionCounts& c) {
  const auto a = c.tp + c.fp, b = c.tp + c.fn, d = c.tn + c.fp, e = c.tn + c.fn;
  if (a == 0 || b == 0 || d == 0 || e == 0) return 0.0;
  const double num = static_cast<double>(c.tp) * static_cast<double>(c.tn) -
                     static_cast<double>(c.fp) * static_cast<double>(c.fn);
  // Pairing the marginals keeps the perfect-classifier case exact: a == b and
  // d == e there, so each square root is of a perfect square.
  const double den = std::sqrt(static_cast<double>(a) * static_cast<double>(b)) *
                     std::sqrt(static_cast<double>(d) * static_cast<double>(e));
  const double v = num / den;
  return v > 1.0 ? 1.0 : (v < -1.0 ? -1.0 : v);
}

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) {
  PrecisionRecallF1 out;
  out.precision = ratio(c.tp, c.tp + c.fp);
  out.recall = ratio(c.tp, c.tp + c.fn);
  const double s = out.precision + out.recall;
  out.f1 = s == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / s;
  return out;
}

double cv(std::span<const double> series) {
  if (series.empty()) throw Error(ErrorCode::kPrecondition, "CV of an empty series is undefined");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  if (mean == 0.0) throw Error(ErrorCode::kPrecondition, "CV is undefined when the mean is 0");
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(series.size());
  return std::sqrt(var) / mean;
}

MetricsReport make_report(const ConfusionCounts& c, std::uint64_t unparseable) {
  MetricsReport r;
  const auto prf = precision_recall_f1(c);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f1 = prf.f1;
  r.fpr = fpr(c);
  r.mcc = mcc(c);
  r.counts = c;
  r.unparseable = unparseable;
  if (c.tp + c.fp == 0) r.notes.push_back("precision set to 0: no positive predictions");
  if (c.tp + c.fn == 0) r.notes.push_back("recall set to 0: no vulnerable samples");
  if (c.fp + c.tn == 0) r.notes.push_back("FPR set to 0: no benign samples");
  if (c.tp + c.fp == 0 || c.tp + c.fn == 0 || c.tn + c.fp == 0 || c.tn + c.fn == 0)
    r.notes.push_back("MCC set to 0: a confusion-matrix marginal is empty");
  return r;
}

}  // namespace dlap::eval
