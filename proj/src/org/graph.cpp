#include "orgpose/org/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "orgpose/error.hpp"

namespace orgpose::org {

namespace {

// Neighbors of row `i` among rows [begin, end), as global row indices.
std::vector<std::size_t> nearest(const nn::Tensor& x, std::size_t begin, std::size_t end, std::size_t i,
                                 std::size_t k) {
  const std::size_t d = x.cols();
  std::vector<std::pair<double, std::size_t>> candidates;
  candidates.reserve(end - begin);
  for (std::size_t j = begin; j < end; ++j) {
    if (j == i) continue;
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = x(i, c) - x(j, c);
      sq += diff * diff;
    }
    candidates.emplace_back(std::sqrt(sq), j);
  }
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end());
  std::vector<std::size_t> out(take);
  for (std::size_t e = 0; e < take; ++e) out[e] = candidates[e].second;
  return out;
}

}  // namespace

LayerGraph knn_edges(const nn::Tensor& features, std::size_t k, std::size_t layer) {
  if (k == 0) throw ConfigError("k", "must be positive");
  const std::size_t n = features.rows();
  if (n == 0) throw DimensionError("knn_edges: no nodes");
  LayerGraph g;
  g.layer = layer;
  g.neighbors.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.neighbors[i] = nearest(features, 0, n, i, k);
  return g;
}

EdgeSet build_knn_edges(const nn::Tensor& features, std::span<const std::size_t> frame_offsets, std::size_t k,
                        nn::SelectionLog* log) {
  if (k == 0) throw ConfigError("k", "must be positive");
  if (frame_offsets.size() < 2 || frame_offsets.front() != 0 || frame_offsets.back() != features.rows()) {
    throw DimensionError("build_knn_edges: frame offsets do not cover the feature rows");
  }
  EdgeSet edges;
  const std::size_t n_total = features.rows();
  edges.offsets.reserve(n_total + 1);
  edges.offsets.push_back(0);
  const bool replay = log && log->mode() == nn::SelectionLog::Mode::kReplay;
  std::vector<std::size_t> counts;
  if (replay) {
    // Recorded layout: per-node edge counts followed by all targets.
    const auto& c = log->next(n_total);
    counts.assign(c.begin(), c.end());
    std::size_t total = 0;
    for (auto v : counts) total += v;
    const auto& targets = log->next(total);
    edges.target.assign(targets.begin(), targets.end());
    for (std::size_t i = 0; i < n_total; ++i) {
      edges.offsets.push_back(edges.offsets.back() + counts[i]);
      edges.source.insert(edges.source.end(), counts[i], i);
    }
    return edges;
  }
  for (std::size_t f = 0; f + 1 < frame_offsets.size(); ++f) {
    const std::size_t begin = frame_offsets[f];
    const std::size_t end = frame_offsets[f + 1];
    if (end <= begin) throw DimensionError("build_knn_edges: empty frame segment");
    for (std::size_t i = begin; i < end; ++i) {
      auto nbrs = end - begin == 1 ? std::vector<std::size_t>{i} : nearest(features, begin, end, i, k);
      edges.source.insert(edges.source.end(), nbrs.size(), i);
      edges.target.insert(edges.target.end(), nbrs.begin(), nbrs.end());
      edges.offsets.push_back(edges.target.size());
      counts.push_back(nbrs.size());
    }
  }
  if (log && log->mode() == nn::SelectionLog::Mode::kRecord) {
    log->record(counts);
    log->record(edges.target);
  }
  return edges;
}

LayerGraph frame_graph(const EdgeSet& edges, std::span<const std::size_t> frame_offsets, std::size_t frame,
                       std::size_t layer) {
  const std::size_t begin = frame_offsets[frame];
  const std::size_t end = frame_offsets[frame + 1];
  LayerGraph g;
  g.layer = layer;
  g.neighbors.resize(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t e = edges.offsets[i]; e < edges.offsets[i + 1]; ++e) {
      if (edges.target[e] == i) continue;
      g.neighbors[i - begin].push_back(edges.target[e] - begin);
    }
  }
  return g;
}

}  // namespace orgpose::org
