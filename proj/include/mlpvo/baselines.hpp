#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpvo/features.hpp"
#include "mlpvo/metrics.hpp"

namespace mlpvo {

/// Which error components a threshold baseline looks at. A point is called
/// dynamic as soon as any enabled component exceeds its threshold; the
/// epipolar component is compared by absolute value.
struct ThresholdSpec {
  bool use_intensity = false;
  bool use_epipolar = false;
  bool use_reprojection = false;

  bool any() const { return use_intensity || use_epipolar || use_reprojection; }
};

struct ThresholdClassifier {
  ThresholdSpec spec;
  double intensity_threshold = 0.0;
  double epipolar_threshold = 0.0;
  double reprojection_threshold = 0.0;
  // set when a feature was constant on the training data and no sweep existed
  bool intensity_degenerate = false;
  bool epipolar_degenerate = false;
  bool reprojection_degenerate = false;
};

inline int classify(const ThresholdClassifier& c, const FeatureVector& v) {
  if (c.spec.use_intensity && v.intensity > c.intensity_threshold) return 1;
  if (c.spec.use_epipolar && std::abs(v.epipolar) > c.epipolar_threshold) return 1;
  if (c.spec.use_reprojection && v.reprojection > c.reprojection_threshold) return 1;
  return 0;
}

namespace detail {

/// Sweeps one feature's threshold to maximize the F1 of the whole
/// any-exceeds rule, holding the already-fitted features fixed (their firing
/// decisions enter through base_dynamic). Candidates are the midpoints of
/// consecutive distinct values plus the maximum value itself; the latter lets
/// the sweep disable a feature that only hurts the combination. Ties keep
/// the largest threshold.
inline std::pair<double, bool> sweep_threshold(std::span<const double> values,
                                               std::span<const int> labels,
                                               std::span<const char> base_dynamic) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // counts among the samples the already-fitted features call dynamic
  std::size_t base_tp = 0, base_fp = 0;
  std::size_t total_dynamic = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total_dynamic += labels[i] == 1;
    if (!base_dynamic.empty() && base_dynamic[i] != 0) {
      (labels[i] == 1 ? base_tp : base_fp) += 1;
    }
  }

  // suffix counts over the remaining (not yet fired) samples in value order
  std::vector<std::size_t> suffix_tp(n + 1, 0), suffix_fp(n + 1, 0);
  for (std::size_t i = n; i-- > 0;) {
    const std::size_t idx = order[i];
    const bool fired = !base_dynamic.empty() && base_dynamic[idx] != 0;
    suffix_tp[i] = suffix_tp[i + 1] + (!fired && labels[idx] == 1);
    suffix_fp[i] = suffix_fp[i + 1] + (!fired && labels[idx] == 0);
  }

  const auto f1_at = [&](std::size_t first_above) {
    const std::size_t tp = base_tp + suffix_tp[first_above];
    const std::size_t fp = base_fp + suffix_fp[first_above];
    const std::size_t fn = total_dynamic - tp;
    const std::size_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  };

  if (values[order[0]] == values[order[n - 1]]) {
    // constant feature: no midpoint exists, fall back to the constant itself
    return {values[order[0]], true};
  }

  double best_threshold = 0.0;
  double best_f1 = -1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double lo = values[order[i]];
    const double hi = values[order[i + 1]];
    if (lo == hi) continue;
    const double threshold = 0.5 * (lo + hi);
    const double f1 = f1_at(i + 1);
    if (f1 >= best_f1) {
      best_f1 = f1;
      best_threshold = threshold;
    }
  }
  // the disable-this-feature endpoint: strictly above every value
  if (f1_at(n) >= best_f1) {
    best_threshold = values[order[n - 1]];
  }
  return {best_threshold, false};
}

}  // namespace detail

/// Fits the enabled thresholds one feature at a time, reprojection first,
/// then epipolar, then intensity. Each sweep maximizes the training F1 of
/// the full any-exceeds rule given the features fitted before it, so adding
/// a feature never hurts the training fit.
inline ThresholdClassifier fit_thresholds(std::span<const FeatureVector> features,
                                          std::span<const int> labels,
                                          const ThresholdSpec& spec) {
  if (!spec.any()) {
    throw std::invalid_argument("fit_thresholds: no feature enabled");
  }
  if (features.size() != labels.size() || features.empty()) {
    throw std::invalid_argument("fit_thresholds: bad training data");
  }
  bool has_static = false;
  bool has_dynamic = false;
  for (int label : labels) {
    has_static |= label == 0;
    has_dynamic |= label == 1;
  }
  if (!has_static || !has_dynamic) {
    throw std::invalid_argument("fit_thresholds: training data has a single class");
  }

  ThresholdClassifier c;
  c.spec = spec;
  const std::size_t n = features.size();
  std::vector<char> fired(n, 0);
  std::vector<double> values(n);

  const auto fit_one = [&](auto value_of, double& threshold, bool& degenerate) {
    for (std::size_t i = 0; i < n; ++i) values[i] = value_of(features[i]);
    std::tie(threshold, degenerate) = detail::sweep_threshold(values, labels, fired);
    for (std::size_t i = 0; i < n; ++i) {
      if (values[i] > threshold) fired[i] = 1;
    }
  };

  if (spec.use_reprojection) {
    fit_one([](const FeatureVector& v) { return v.reprojection; },
            c.reprojection_threshold, c.reprojection_degenerate);
  }
  if (spec.use_epipolar) {
    fit_one([](const FeatureVector& v) { return std::abs(v.epipolar); },
            c.epipolar_threshold, c.epipolar_degenerate);
  }
  if (spec.use_intensity) {
    fit_one([](const FeatureVector& v) { return v.intensity; }, c.intensity_threshold,
            c.intensity_degenerate);
  }
  return c;
}

}  // namespace mlpvo
