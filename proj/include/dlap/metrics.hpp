#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dlap/llmclient.hpp"

namespace dlap::eval {

/// Positive class = vulnerable.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const std::vector<bool>& predicted_vulnerable,
                          const std::vector<bool>& actually_vulnerable);

/// Unparseable decisions count as "no" unless `unparseable_as_positive`.
ConfusionCounts confusion(const std::vector<llm::Decision>& decisions,
                          const std::vector<bool>& actually_vulnerable,
                          bool unparseable_as_positive = false);

/// FP / (FP + TN); 0 when the denominator is 0.
double fpr(const ConfusionCounts& c);

/// Matthews correlation; 0 when any marginal is 0.
double mcc(const ConfusionCounts& c);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero-denominator cases yield 0.
PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c);

/// Population standard deviation over mean. Throws kPrecondition when the
/// series is empty or its mean is 0.
double cv(std::span<const double> series);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  double mcc = 0.0;
  ConfusionCounts counts;
  std::uint64_t unparseable = 0;
  // Zero-denominator conventions that were applied.
  std::vector<std::string> notes;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport make_report(const ConfusionCounts& c, std::uint64_t unparseable = 0);

}  // namespace dlap::eval
