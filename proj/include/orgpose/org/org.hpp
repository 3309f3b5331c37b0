#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "orgpose/numerics/layers.hpp"
#include "orgpose/org/detection.hpp"
#include "orgpose/org/graph.hpp"

namespace orgpose::org {

enum class Aggregate { kMax, kSum };
enum class EdgeUpdate { kDynamic, kStatic };

const char* to_string(Aggregate a);
const char* to_string(EdgeUpdate u);
Aggregate parse_aggregate(const std::string& s);
EdgeUpdate parse_edge_update(const std::string& s);

struct OrgConfig {
  int category_count = 12;
  std::size_t embedding_dim = 16;
  /// Detection-encoder MLP widths; the last one is the node feature size d_0.
  std::vector<std::size_t> encoder_widths{64, 64};
  /// Output width of each GNN layer; `layers` of them are used.
  std::vector<std::size_t> layer_widths{64, 64, 128, 256};
  std::size_t layers = 4;
  std::size_t k = 5;
  Aggregate aggregate = Aggregate::kMax;
  EdgeUpdate edge_update = EdgeUpdate::kDynamic;
  std::size_t fused_dim = 512;
  std::size_t output_dim = 1024;
  nn::BatchNormOptions batchnorm;

  void validate() const;
  std::size_t node_dim() const { return encoder_widths.back(); }
  bool operator==(const OrgConfig&) const = default;
};

/// The detections of one image together with its size.
struct FrameInput {
  std::span<const Detection> detections;
  ImageSize image;
};

/// (x/W, y/H, w/W, h/H)
std::array<double, 4> normalized_geometry(const Detection& det, const ImageSize& image);

/// Detections of a batch stacked row-wise. Frames without detections are
/// skipped; `frame_of_segment[s]` maps segment s back to its input frame.
struct NodeBatch {
  nn::Tensor geometry;
  std::vector<std::size_t> categories;
  std::vector<std::size_t> frame_offsets{0};
  std::vector<std::size_t> frame_of_segment;
  std::size_t frame_count = 0;

  std::size_t node_count() const noexcept { return categories.size(); }
  std::size_t segment_count() const noexcept { return frame_of_segment.size(); }
};

NodeBatch stack_frames(std::span<const FrameInput> frames, int category_count);

/// Edge inputs [x_i || x_j - x_i], one row per edge, in edge order.
nn::Var edge_inputs(nn::Tape& tape, nn::Var nodes, const EdgeSet& edges);

/// x_i' = AGG over out-edges of f_u([x_i || x_j - x_i]). `edge_fn` receives
/// the materialized edge inputs. Reference formulation of one GNN layer.
using EdgeFunction = std::function<nn::Var(nn::Tape&, nn::Var)>;
nn::Var gnn_layer(nn::Tape& tape, nn::Var nodes, const EdgeSet& edges, const EdgeFunction& edge_fn,
                  Aggregate aggregate);

/// Affine map of edge inputs computed without materializing them:
/// W [x_i || x_j - x_i] = (W_top - W_bottom) x_i + W_bottom x_j.
nn::Var edge_affine(nn::Var nodes, nn::Var weight, nn::Var bias, const EdgeSet& edges);

/// Edge MLP f_u: affine, BatchNorm over all edge messages, ReLU.
class EdgeMlp {
 public:
  EdgeMlp() = default;
  EdgeMlp(nn::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
          const nn::BatchNormOptions& bn, nn::Rng& rng);

  /// Explicit form on materialized edge inputs (2*in columns).
  nn::Var operator()(nn::Tape& tape, nn::Var edge_rows, const nn::ForwardContext& ctx) const;
  /// Fused form on node features and an edge set.
  nn::Var on_edges(nn::Tape& tape, nn::Var nodes, const EdgeSet& edges, const nn::ForwardContext& ctx) const;
  /// One whole GNN layer as a single op: AGG over each node's out-edges of
  /// relu(bn(W [x_i || x_j - x_i] + b)). Same result as gnn_layer with this
  /// MLP, but no edge-sized tensor is kept on the tape.
  nn::Var aggregate(nn::Tape& tape, nn::Var nodes, const EdgeSet& edges, Aggregate aggregate,
                    const nn::ForwardContext& ctx) const;

  const nn::Linear& linear() const noexcept { return linear_; }
  const nn::BatchNorm& norm() const noexcept { return norm_; }

 private:
  nn::Linear linear_;
  nn::BatchNorm norm_;
};

/// Edge sets used by each GNN layer of the last forward pass.
struct OrgTrace {
  std::vector<EdgeSet> layer_edges;
  std::vector<std::size_t> frame_offsets;
  nn::Tensor node_features;
};

/// Object relation graph: encodes detections, runs the GNN layers with
/// per-layer k-NN edges, fuses the multi-level node features and pools them
/// into one relation feature per frame.
class ObjectRelationGraph {
 public:
  ObjectRelationGraph(nn::ParameterStore& store, OrgConfig config, nn::Rng& rng);

  const OrgConfig& config() const noexcept { return config_; }

  /// One row of relation features (output_dim wide) per input frame. Frames
  /// without detections receive the learned `empty.xg` row.
  nn::Var forward(nn::Tape& tape, std::span<const FrameInput> frames, const nn::ForwardContext& ctx,
                  OrgTrace* trace = nullptr) const;

  /// Node features d_0 for stacked detections.
  nn::Var encode(nn::Tape& tape, const NodeBatch& batch, const nn::ForwardContext& ctx) const;

  const EdgeMlp& edge_mlp(std::size_t layer) const { return edge_mlps_.at(layer); }

 private:
  OrgConfig config_;
  nn::Parameter* embedding_ = nullptr;
  std::vector<nn::Linear> encoder_;
  std::vector<nn::BatchNorm> encoder_norms_;
  std::vector<EdgeMlp> edge_mlps_;
  nn::Linear fusion_;
  nn::BatchNorm fusion_norm_;
  nn::Linear global_;
  nn::Parameter* empty_feature_ = nullptr;
};

}  // namespace orgpose::org
