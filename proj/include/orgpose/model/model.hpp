#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "orgpose/geometry/pose.hpp"
#include "orgpose/numerics/layers.hpp"
#include "orgpose/org/org.hpp"

namespace orgpose::model {

enum class Variant { kPoseNet, kMapNet };
enum class ContextMode { kNull, kLearnedConstant, kGridMlp };

const char* to_string(Variant v);
const char* to_string(ContextMode m);
Variant parse_variant(const std::string& s);
ContextMode parse_context_mode(const std::string& s);

struct ContextConfig {
  ContextMode mode = ContextMode::kLearnedConstant;
  std::size_t dim = 1024;
  /// Occupancy grid resolution for grid-mlp mode.
  std::size_t grid_cols = 8;
  std::size_t grid_rows = 6;

  void validate() const;
  bool operator==(const ContextConfig&) const = default;
};

struct ModelConfig {
  Variant variant = Variant::kPoseNet;
  org::OrgConfig org;
  ContextConfig context;
  std::size_t head_hidden = 512;
  double dropout = 0.2;
  double beta_init = 0.0;
  double gamma_init = -3.0;

  void validate() const;
  /// Width of the head input: context plus relation feature (if any).
  std::size_t head_input_dim() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; bad values raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Stand-in for an image backbone: produces one context row per frame.
class ContextProvider {
 public:
  ContextProvider() = default;
  ContextProvider(nn::ParameterStore& store, const ContextConfig& config, nn::Rng& rng);

  nn::Var forward(nn::Tape& tape, std::span<const org::FrameInput> frames) const;
  /// Row shared by every frame, or nullopt when the output depends on the frame.
  std::optional<nn::Var> shared_row(nn::Tape& tape) const;

  const ContextConfig& config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return config_.dim; }

 private:
  ContextConfig config_;
  nn::Parameter* constant_ = nullptr;
  nn::Linear grid_;
};

/// Fraction of detection centers per cell of a cols x rows image grid,
/// row-major from the top-left cell. All zeros for an empty frame.
std::vector<double> occupancy_grid(const org::FrameInput& frame, std::size_t cols, std::size_t rows);

struct PoseOutput {
  nn::Var t;  // [n x 3]
  nn::Var r;  // [n x 3]
  /// Relation features [n x d_g]; unset when the model has no graph.
  std::optional<nn::Var> xg;
};

/// Object-relation-graph pose regressor. The same network serves both the
/// single-frame and the tuple-trained variant; they differ only in the loss.
class PoseModel {
 public:
  PoseModel(ModelConfig config, std::uint64_t seed);
  PoseModel(const PoseModel&) = delete;
  PoseModel& operator=(const PoseModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  nn::ParameterStore& parameters() noexcept { return store_; }
  const nn::ParameterStore& parameters() const noexcept { return store_; }
  bool has_graph() const noexcept { return graph_.has_value(); }
  const org::ObjectRelationGraph& graph() const { return graph_.value(); }

  nn::Var beta(nn::Tape& tape) const { return tape.parameter(*beta_); }
  nn::Var gamma(nn::Tape& tape) const { return tape.parameter(*gamma_); }
  double beta_value() const { return beta_->value.item(); }
  double gamma_value() const { return gamma_->value.item(); }

  PoseOutput forward(nn::Tape& tape, std::span<const org::FrameInput> frames, const nn::ForwardContext& ctx,
                     org::OrgTrace* trace = nullptr) const;

  /// Inference-mode poses, one per frame.
  std::vector<geometry::Pose> predict(std::span<const org::FrameInput> frames) const;
  geometry::Pose predict_pose(const org::FrameInput& frame) const;

 private:
  ModelConfig config_;
  nn::ParameterStore store_;
  std::optional<org::ObjectRelationGraph> graph_;
  ContextProvider context_;
  nn::Linear hidden_;
  nn::Linear head_t_;
  nn::Linear head_r_;
  nn::Parameter* beta_ = nullptr;
  nn::Parameter* gamma_ = nullptr;
};

}  // namespace orgpose::model
