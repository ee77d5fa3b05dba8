#pragma once

#include "tabalign/dataset.hpp"

namespace tabalign {

// Shared feature encoding for scorers, distances and metrics: numerics are
// min-max scaled by the statistics of the table the encoder was fitted on,
// categoricals are one-hot in schema category order.
class FeatureEncoder {
 public:
  static FeatureEncoder fit(const Table& table) {
    FeatureEncoder enc;
    enc.schema_ = table.schema;
    for (size_t j = 0; j < table.schema.size(); ++j) {
      const Column& col = table.schema.columns[j];
      if (col.kind == ColumnKind::numeric) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& r : table.rows) {
          lo = std::min(lo, num(r[j]));
          hi = std::max(hi, num(r[j]));
        }
        enc.ranges_.push_back({lo, hi});
        enc.dims_.push_back(1);
      } else {
        enc.ranges_.push_back({0.0, 0.0});
        enc.dims_.push_back(col.categories.size());
      }
    }
    enc.dim_ = 0;
    for (size_t d : enc.dims_) enc.dim_ += d;
    return enc;
  }

  const Schema& schema() const { return schema_; }
  size_t dim() const { return dim_; }

  std::vector<double> encode(const Record& row) const {
    std::vector<double> out;
    out.reserve(dim_);
    for (size_t j = 0; j < schema_.size(); ++j) {
      const Column& col = schema_.columns[j];
      if (col.kind == ColumnKind::numeric) {
        const auto [lo, hi] = ranges_[j];
        out.push_back(hi > lo ? (num(row[j]) - lo) / (hi - lo) : 0.5);
      } else {
        const auto& cats = col.categories;
        for (const auto& c : cats) out.push_back(cat(row[j]) == c ? 1.0 : 0.0);
      }
    }
    return out;
  }

  std::vector<std::vector<double>> encode_table(const Table& t) const {
    if (!(t.schema == schema_))
      throw DataError("encoder: table schema does not match fitted schema");
    std::vector<std::vector<double>> out;
    out.reserve(t.size());
    for (const auto& r : t.rows) out.push_back(encode(r));
    return out;
  }

  /// Feature vector with one column left out (for downstream-task learners).
  std::vector<double> encode_excluding(const Record& row, size_t skip_col) const {
    std::vector<double> out;
    for (size_t j = 0; j < schema_.size(); ++j) {
      if (j == skip_col) continue;
      const Column& col = schema_.columns[j];
      if (col.kind == ColumnKind::numeric) {
        const auto [lo, hi] = ranges_[j];
        out.push_back(hi > lo ? (num(row[j]) - lo) / (hi - lo) : 0.5);
      } else {
        for (const auto& c : col.categories)
          out.push_back(cat(row[j]) == c ? 1.0 : 0.0);
      }
    }
    return out;
  }

  static double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return std::sqrt(s);
  }

 private:
  Schema schema_;
  std::vector<std::pair<double, double>> ranges_;
  std::vector<size_t> dims_;
  size_t dim_ = 0;
};

}  // namespace tabalign
