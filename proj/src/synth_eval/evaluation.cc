#include "vl/synth_eval/evaluation.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "vl/common/error.h"

namespace vl {

std::vector<QueryError> query_errors(std::span<const ResultRecord> results, std::span<const GroundTruth> gts) {
  std::map<std::uint32_t, const GroundTruth*> by_id;
  for (const GroundTruth& g : gts) {
    if (!by_id.emplace(g.query_id, &g).second) {
      throw Error(ErrorCode::id_mismatch, "ground truth repeats query " + std::to_string(g.query_id));
    }
  }
  if (results.size() != gts.size()) {
    throw Error(ErrorCode::id_mismatch, std::to_string(results.size()) + " results for " +
                                            std::to_string(gts.size()) + " ground-truth poses");
  }
  std::map<std::uint32_t, bool> seen;
  std::vector<QueryError> out;
  for (const ResultRecord& r : results) {
    const auto it = by_id.find(r.query_id);
    if (it == by_id.end()) throw Error(ErrorCode::id_mismatch, "no ground truth for query " + std::to_string(r.query_id));
    if (!seen.emplace(r.query_id, true).second) {
      throw Error(ErrorCode::id_mismatch, "results repeat query " + std::to_string(r.query_id));
    }
    QueryError e{r.query_id, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    if (r.ok) {
      const PoseError pe = pose_error(r.pose, it->second->pose);
      e.translation = pe.translation_error;
      e.rotation = pe.rotation_error;
    }
    out.push_back(e);
  }
  return out;
}

AccuracyTriple accuracy_from_errors(std::span<const QueryError> errors, const std::array<Threshold, 3>& thresholds) {
  for (int i = 1; i < 3; ++i) {
    if (thresholds[i].meters < thresholds[i - 1].meters || thresholds[i].degrees < thresholds[i - 1].degrees) {
      throw Error(ErrorCode::invalid_params, "accuracy thresholds must be nested");
    }
  }
  std::array<std::size_t, 3> hits{};
  for (const QueryError& e : errors) {
    for (int i = 0; i < 3; ++i) {
      if (e.translation <= thresholds[i].meters && e.rotation <= thresholds[i].degrees) ++hits[i];
    }
  }
  const double n = static_cast<double>(errors.size());
  auto pct = [&](std::size_t h) { return errors.empty() ? 0.0 : 100.0 * static_cast<double>(h) / n; };
  return {pct(hits[0]), pct(hits[1]), pct(hits[2])};
}

AccuracyTriple evaluate_accuracy(std::span<const ResultRecord> results, std::span<const GroundTruth> gts,
                                 const std::array<Threshold, 3>& thresholds) {
  const std::vector<QueryError> errors = query_errors(results, gts);
  return accuracy_from_errors(errors, thresholds);
}

std::string format_triple(const AccuracyTriple& a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f / %.1f / %.1f", a.tight, a.mid, a.loose);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one CSV line honoring double-quoted fields.
std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

double parse_number(const std::string& s) {
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0;
  in >> v;
  if (in.fail() || !in.eof()) throw Error(ErrorCode::io, "report: bad number '" + s + "'");
  return v;
}

}  // namespace

Report make_report(std::span<const NamedRun> runs) {
  if (runs.empty()) throw Error(ErrorCode::invalid_params, "report needs at least one run");
  const std::string header_name = "configuration";
  std::size_t width = header_name.size();
  for (const NamedRun& r : runs) width = std::max(width, r.name.size());

  Report out;
  auto row = [&](const std::string& name, const std::string& value) {
    out.text += name + std::string(width - name.size() + 2, ' ') + value + "\n";
  };
  row(header_name, "(0.25m, 2deg) / (0.5m, 5deg) / (5m, 10deg)");
  for (const NamedRun& r : runs) row(r.name, format_triple(r.accuracy));

  out.csv = "configuration,acc_tight,acc_mid,acc_loose\n";
  char buf[96];
  for (const NamedRun& r : runs) {
    std::snprintf(buf, sizeof buf, ",%.1f,%.1f,%.1f\n", r.accuracy.tight, r.accuracy.mid, r.accuracy.loose);
    out.csv += csv_field(r.name) + buf;
  }
  return out;
}

std::vector<NamedRun> parse_report_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "configuration,acc_tight,acc_mid,acc_loose") {
    throw Error(ErrorCode::io, "report: missing header");
  }
  std::vector<NamedRun> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = csv_split(line);
    if (f.size() != 4) throw Error(ErrorCode::io, "report: expected 4 fields in '" + line + "'");
    out.push_back({f[0], {parse_number(f[1]), parse_number(f[2]), parse_number(f[3])}});
  }
  return out;
}

}  // namespace vl
