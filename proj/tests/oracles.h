#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "vl/matching/matching.h"
#include "vl/retrieval/retrieval.h"
#include "vl/virtual_view/virtual_view.h"

namespace vl::test {

/// Full sort of every distance, computed with a plain loop.
inline std::vector<Ranked> exhaustive_topk(const RetrievalIndex& index, std::span<const float> raw, std::size_t k) {
  const std::vector<float> q = index.transform(raw);
  std::vector<Ranked> all;
  for (std::uint32_t id = 0; id < index.size(); ++id) {
    const auto d = index.descriptor(id);
    double sum = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double diff = static_cast<double>(q[i]) - d[i];
      sum += diff * diff;
    }
    all.push_back({id, std::sqrt(sum)});
  }
  std::sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  });
  all.resize(std::min(k, all.size()));
  return all;
}

/// Mutual nearest neighbours with the two-sided ratio test, by sorting every
/// row and column of the full distance matrix.
inline std::vector<Match> brute_force_matches(const LocalFeatureSet& a, const LocalFeatureSet& b, double ratio) {
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> dist(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      double s = 0;
      for (int k = 0; k < a.dim; ++k) {
        const double d = static_cast<double>(a.descriptor(i)[k]) - b.descriptor(j)[k];
        s += d * d;
      }
      dist[i * nb + j] = std::sqrt(s);
    }
  using Entry = std::pair<double, std::size_t>;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Match> out;
  for (std::size_t i = 0; i < na; ++i) {
    std::vector<Entry> row;
    for (std::size_t j = 0; j < nb; ++j) row.push_back({dist[i * nb + j], j});
    std::sort(row.begin(), row.end());
    const std::size_t j = row[0].second;
    std::vector<Entry> col;
    for (std::size_t r = 0; r < na; ++r) col.push_back({dist[r * nb + j], r});
    std::sort(col.begin(), col.end());
    if (col[0].second != i) continue;
    const double second_row = row.size() > 1 ? row[1].first : inf;
    const double second_col = col.size() > 1 ? col[1].first : inf;
    const double d = row[0].first;
    if (d <= ratio * second_row && d <= ratio * second_col) {
      out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), d});
    }
  }
  return out;
}

/// A candidate is visible unless another one at the same pixel is nearer by
/// more than the tolerance. Quadratic per pixel, no z-buffer.
inline std::vector<std::uint8_t> brute_force_visible(std::span<const SplatCandidate> c, double tol) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> at;
  for (std::size_t i = 0; i < c.size(); ++i) at[{c[i].tx, c[i].ty}].push_back(i);
  std::vector<std::uint8_t> out(c.size(), 1);
  for (const auto& [px, members] : at) {
    for (const std::size_t i : members) {
      for (const std::size_t j : members) {
        const double di = static_cast<float>(c[i].depth), dj = static_cast<float>(c[j].depth);
        if (di > dj + tol) out[i] = 0;
      }
    }
  }
  return out;
}

}  // namespace vl::test
