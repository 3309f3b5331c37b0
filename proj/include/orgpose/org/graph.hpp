#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orgpose/numerics/tape.hpp"
#include "orgpose/numerics/tensor.hpp"

namespace orgpose::org {

/// Directed k-NN edges of one frame: neighbors[i] lists the targets of node
/// i's out-edges, nearest first.
struct LayerGraph {
  std::size_t layer = 0;
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t node_count() const noexcept { return neighbors.size(); }
};

/// For each row of `features`, the min(k, n-1) other rows with the smallest
/// Euclidean distance, ties broken by lower index. A single node gets no
/// edges.
LayerGraph knn_edges(const nn::Tensor& features, std::size_t k, std::size_t layer = 0);

/// Flat edge list over a batch of frames stacked row-wise. Edges of node i
/// occupy [offsets[i], offsets[i+1]) and all have source i, so `offsets` is
/// directly usable as a segment partition for per-node aggregation.
struct EdgeSet {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
  std::vector<std::size_t> offsets;

  std::size_t edge_count() const noexcept { return target.size(); }
  std::size_t node_count() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// k-NN edges built independently inside each frame segment
/// [frame_offsets[f], frame_offsets[f+1]). A frame with one node gets a
/// self-edge so that aggregation stays defined (its differential feature is
/// zero). When `log` is recording or replaying, the neighbor choice is
/// recorded or reused.
EdgeSet build_knn_edges(const nn::Tensor& features, std::span<const std::size_t> frame_offsets, std::size_t k,
                        nn::SelectionLog* log = nullptr);

/// Per-frame view of a batched edge set, in frame-local node indices.
LayerGraph frame_graph(const EdgeSet& edges, std::span<const std::size_t> frame_offsets, std::size_t frame,
                       std::size_t layer = 0);

}  // namespace orgpose::org
