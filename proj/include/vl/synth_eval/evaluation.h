#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vl/geometry/geometry.h"
#include "vl/pipeline/pipeline.h"

namespace vl {

struct Threshold {
  double meters = 0;
  double degrees = 0;
};

/// (0.25 m, 2 deg) / (0.5 m, 5 deg) / (5 m, 10 deg).
inline constexpr std::array<Threshold, 3> kAccuracyThresholds{{{0.25, 2.0}, {0.5, 5.0}, {5.0, 10.0}}};

/// Percentages of queries within each threshold.
struct AccuracyTriple {
  double tight = 0, mid = 0, loose = 0;
  bool monotone() const { return tight <= mid && mid <= loose; }
  bool operator==(const AccuracyTriple&) const = default;
};

/// A failed localization is an infinite error.
struct QueryError {
  std::uint32_t query_id = 0;
  double translation = 0;  // meters
  double rotation = 0;     // degrees
};

/// Pairs results with ground truth by query id. Throws IdMismatch when the
/// id sets differ or an id repeats.
std::vector<QueryError> query_errors(std::span<const ResultRecord> results, std::span<const GroundTruth> gts);

/// Throws InvalidParams unless the thresholds are nested.
AccuracyTriple accuracy_from_errors(std::span<const QueryError> errors,
                                    const std::array<Threshold, 3>& thresholds = kAccuracyThresholds);

AccuracyTriple evaluate_accuracy(std::span<const ResultRecord> results, std::span<const GroundTruth> gts,
                                 const std::array<Threshold, 3>& thresholds = kAccuracyThresholds);

/// "58.6 / 77.8 / 89.4".
std::string format_triple(const AccuracyTriple& a);

struct NamedRun {
  std::string name;
  AccuracyTriple accuracy;
};

struct Report {
  std::string text;
  std::string csv;
};

/// Aligned table and CSV, rows in the given order. Throws InvalidParams when empty.
Report make_report(std::span<const NamedRun> runs);
/// Inverse of the CSV half of make_report. Throws Io.
std::vector<NamedRun> parse_report_csv(std::string_view csv);

}  // namespace vl
