#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>

namespace mlpvo {

/// Binary confusion counts. The positive class is dynamic (label 1).
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

inline ConfusionCounts confusion(std::span<const int> labels_true,
                                 std::span<const int> labels_pred) {
  if (labels_true.size() != labels_pred.size()) {
    throw std::invalid_argument("confusion: label vectors differ in length");
  }
  if (labels_true.empty()) {
    throw std::invalid_argument("confusion: no samples");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels_true.size(); ++i) {
    const bool actual = labels_true[i] == 1;
    const bool predicted = labels_pred[i] == 1;
    if (actual && predicted) ++c.tp;
    else if (!actual && predicted) ++c.fp;
    else if (!actual && !predicted) ++c.tn;
    else ++c.fn;
  }
  return c;
}

// Metrics with an undefined denominator report 0 and set *undefined.

inline double accuracy(const ConfusionCounts& c, bool* undefined = nullptr) {
  if (undefined != nullptr) *undefined = false;
  if (c.total() == 0) {
    if (undefined != nullptr) *undefined = true;
    return 0.0;
  }
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

inline double precision(const ConfusionCounts& c, bool* undefined = nullptr) {
  if (undefined != nullptr) *undefined = false;
  if (c.tp + c.fp == 0) {
    if (undefined != nullptr) *undefined = true;
    return 0.0;
  }
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

inline double recall(const ConfusionCounts& c, bool* undefined = nullptr) {
  if (undefined != nullptr) *undefined = false;
  if (c.tp + c.fn == 0) {
    if (undefined != nullptr) *undefined = true;
    return 0.0;
  }
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

inline double f1_score(const ConfusionCounts& c, bool* undefined = nullptr) {
  if (undefined != nullptr) *undefined = false;
  const double p = precision(c);
  const double r = recall(c);
  if (p + r == 0.0) {
    if (undefined != nullptr) *undefined = true;
    return 0.0;
  }
  return 2.0 * p * r / (p + r);
}

}  // namespace mlpvo
