#pragma once

#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpvo/mlp.hpp"
#include "mlpvo/text_io.hpp"

namespace mlpvo {

/// One labeled correspondence pair, in the published 11-field file order:
/// u1, v1, z1, id1, u2, v2, id2, class, e_I, e_Re, e_D.
/// The first observation carries the depth; its backprojection, carried into
/// frame id2 by the relative pose, is what the reprojection error compares
/// against (u2, v2).
struct FeatureRecord {
  double u1 = 0.0;
  double v1 = 0.0;
  double z1 = 0.0;
  std::int64_t id1 = 0;
  double u2 = 0.0;
  double v2 = 0.0;
  std::int64_t id2 = 0;
  int label = 0;  // 0 static, 1 dynamic
  double err_intensity = 0.0;
  double err_reprojection = 0.0;
  double err_epipolar = 0.0;
};

inline FeatureVector to_feature_vector(const FeatureRecord& r) {
  return FeatureVector{r.err_intensity, r.err_epipolar, r.err_reprojection};
}

inline LabeledFeature to_labeled_feature(const FeatureRecord& r) {
  return LabeledFeature{to_feature_vector(r), r.label};
}

inline std::vector<LabeledFeature> to_labeled_features(
    std::span<const FeatureRecord> records) {
  std::vector<LabeledFeature> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(to_labeled_feature(r));
  return out;
}

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Comma-separated records, one per line; whitespace around fields is
/// tolerated and '#' lines are comments. Malformed lines raise ParseError
/// with the 1-based line number.
inline std::vector<FeatureRecord> parse_records(std::istream& in) {
  std::vector<FeatureRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    const auto fields = split(content, ',');
    if (fields.size() != 11) {
      throw ParseError(line_no, "expected 11 fields, got " +
                                    std::to_string(fields.size()));
    }
    const auto num = [&](std::size_t idx) {
      double v = 0.0;
      if (!parse_double(trim(fields[idx]), v)) {
        throw ParseError(line_no, "field " + std::to_string(idx + 1) +
                                      " is not numeric: '" +
                                      std::string(trim(fields[idx])) + "'");
      }
      return v;
    };
    const auto id = [&](std::size_t idx) {
      std::int64_t v = 0;
      if (!parse_int64(trim(fields[idx]), v)) {
        throw ParseError(line_no, "field " + std::to_string(idx + 1) +
                                      " is not an integer: '" +
                                      std::string(trim(fields[idx])) + "'");
      }
      return v;
    };

    FeatureRecord r;
    r.u1 = num(0);
    r.v1 = num(1);
    r.z1 = num(2);
    r.id1 = id(3);
    r.u2 = num(4);
    r.v2 = num(5);
    r.id2 = id(6);
    const std::int64_t cls = id(7);
    if (cls != 0 && cls != 1) {
      throw ParseError(line_no, "class must be 0 or 1, got " + std::to_string(cls));
    }
    r.label = static_cast<int>(cls);
    r.err_intensity = num(8);
    r.err_reprojection = num(9);
    r.err_epipolar = num(10);
    records.push_back(r);
  }
  return records;
}

inline void write_records(std::span<const FeatureRecord> records, std::ostream& out) {
  for (const auto& r : records) {
    out << format_double(r.u1) << ',' << format_double(r.v1) << ','
        << format_double(r.z1) << ',' << r.id1 << ',' << format_double(r.u2) << ','
        << format_double(r.v2) << ',' << r.id2 << ',' << r.label << ','
        << format_double(r.err_intensity) << ',' << format_double(r.err_reprojection)
        << ',' << format_double(r.err_epipolar) << '\n';
  }
}

struct DatasetSplit {
  std::vector<FeatureRecord> train;
  std::vector<FeatureRecord> val;
  std::vector<FeatureRecord> test;
};

/// Seeded shuffle, then 8:2 train/test with a tenth of the training pool held
/// out for validation.
inline DatasetSplit split_dataset(std::span<const FeatureRecord> records,
                                  std::uint64_t seed, double test_ratio = 0.2,
                                  double val_fraction = 0.1) {
  const std::size_t n = records.size();
  if (n < 10) {
    throw std::invalid_argument("split_dataset: need at least 10 records");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_test = static_cast<std::size_t>(
      std::llround(test_ratio * static_cast<double>(n)));
  const std::size_t n_pool = n - n_test;
  const auto n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(n_pool)));

  DatasetSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureRecord& r = records[order[i]];
    if (i < n_test) {
      out.test.push_back(r);
    } else if (i < n_test + n_val) {
      out.val.push_back(r);
    } else {
      out.train.push_back(r);
    }
  }
  return out;
}

}  // namespace mlpvo
