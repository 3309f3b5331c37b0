#include "orgpose/model/model.hpp"

#include <algorithm>
#include <cmath>

#include "orgpose/error.hpp"

namespace orgpose::model {

using nlohmann::json;
using nn::Tape;
using nn::Tensor;
using nn::Var;

const char* to_string(Variant v) { return v == Variant::kPoseNet ? "orgposenet" : "orgmapnet"; }

const char* to_string(ContextMode m) {
  switch (m) {
    case ContextMode::kNull:
      return "null";
    case ContextMode::kLearnedConstant:
      return "learned-constant";
    case ContextMode::kGridMlp:
      return "grid-mlp";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "orgposenet") return Variant::kPoseNet;
  if (s == "orgmapnet") return Variant::kMapNet;
  throw ConfigError("model.variant", "expected orgposenet or orgmapnet, got '" + s + "'");
}

ContextMode parse_context_mode(const std::string& s) {
  if (s == "null") return ContextMode::kNull;
  if (s == "learned-constant") return ContextMode::kLearnedConstant;
  if (s == "grid-mlp") return ContextMode::kGridMlp;
  throw ConfigError("model.context.mode", "expected null, learned-constant or grid-mlp, got '" + s + "'");
}

void ContextConfig::validate() const {
  if (dim == 0) throw ConfigError("model.context.dim", "must be positive");
  if (mode == ContextMode::kGridMlp && (grid_cols == 0 || grid_rows == 0)) {
    throw ConfigError("model.context.grid", "grid dimensions must be positive");
  }
}

void ModelConfig::validate() const {
  org.validate();
  context.validate();
  if (head_hidden == 0) throw ConfigError("model.head_hidden", "must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout", "must lie in [0, 1)");
  if (!std::isfinite(beta_init)) throw ConfigError("model.beta_init", "must be finite");
  if (!std::isfinite(gamma_init)) throw ConfigError("model.gamma_init", "must be finite");
}

std::size_t ModelConfig::head_input_dim() const { return context.dim + (org.layers > 0 ? org.output_dim : 0); }

json model_config_to_json(const ModelConfig& c) {
  const auto& o = c.org;
  return {{"variant", to_string(c.variant)},
          {"org",
           {{"category_count", o.category_count},
            {"embedding_dim", o.embedding_dim},
            {"encoder_widths", o.encoder_widths},
            {"layer_widths", o.layer_widths},
            {"layers", o.layers},
            {"k", o.k},
            {"aggregate", org::to_string(o.aggregate)},
            {"edge_update", org::to_string(o.edge_update)},
            {"fused_dim", o.fused_dim},
            {"output_dim", o.output_dim},
            {"bn_momentum", o.batchnorm.momentum},
            {"bn_epsilon", o.batchnorm.epsilon}}},
          {"context",
           {{"mode", to_string(c.context.mode)},
            {"dim", c.context.dim},
            {"grid_cols", c.context.grid_cols},
            {"grid_rows", c.context.grid_rows}}},
          {"head_hidden", c.head_hidden},
          {"dropout", c.dropout},
          {"beta_init", c.beta_init},
          {"gamma_init", c.gamma_init}};
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& prefix) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if constexpr (std::is_unsigned_v<T>) {
    if (v.is_number_integer() && v.get<long long>() < 0) throw ConfigError(prefix + key, "must be non-negative");
  }
  try {
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, e.what());
  }
}

std::vector<std::size_t> read_widths(const json& j, const char* key, const std::string& prefix) {
  std::vector<std::size_t> out;
  if (!j.at(key).is_array()) throw ConfigError(prefix + key, "expected an array of widths");
  for (const auto& w : j.at(key)) {
    if (!w.is_number_integer() || w.get<long long>() <= 0) throw ConfigError(prefix + key, "widths must be positive");
    out.push_back(w.get<std::size_t>());
  }
  return out;
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("org")) {
    const auto& o = j.at("org");
    const std::string p = "model.org.";
    read_opt(o, "category_count", c.org.category_count, p);
    read_opt(o, "embedding_dim", c.org.embedding_dim, p);
    if (o.contains("encoder_widths")) c.org.encoder_widths = read_widths(o, "encoder_widths", p);
    if (o.contains("layer_widths")) c.org.layer_widths = read_widths(o, "layer_widths", p);
    read_opt(o, "layers", c.org.layers, p);
    read_opt(o, "k", c.org.k, p);
    if (o.contains("aggregate")) c.org.aggregate = org::parse_aggregate(o.at("aggregate").get<std::string>());
    if (o.contains("edge_update")) c.org.edge_update = org::parse_edge_update(o.at("edge_update").get<std::string>());
    read_opt(o, "fused_dim", c.org.fused_dim, p);
    read_opt(o, "output_dim", c.org.output_dim, p);
    read_opt(o, "bn_momentum", c.org.batchnorm.momentum, p);
    read_opt(o, "bn_epsilon", c.org.batchnorm.epsilon, p);
  }
  if (j.contains("context")) {
    const auto& x = j.at("context");
    const std::string p = "model.context.";
    if (x.contains("mode")) c.context.mode = parse_context_mode(x.at("mode").get<std::string>());
    read_opt(x, "dim", c.context.dim, p);
    read_opt(x, "grid_cols", c.context.grid_cols, p);
    read_opt(x, "grid_rows", c.context.grid_rows, p);
  }
  read_opt(j, "head_hidden", c.head_hidden, "model.");
  read_opt(j, "dropout", c.dropout, "model.");
  read_opt(j, "beta_init", c.beta_init, "model.");
  read_opt(j, "gamma_init", c.gamma_init, "model.");
  c.validate();
  return c;
}

std::vector<double> occupancy_grid(const org::FrameInput& frame, std::size_t cols, std::size_t rows) {
  std::vector<double> grid(cols * rows, 0.0);
  if (frame.detections.empty()) return grid;
  const double share = 1.0 / static_cast<double>(frame.detections.size());
  for (const auto& d : frame.detections) {
    const double u = std::clamp(d.x / frame.image.width, 0.0, 1.0);
    const double v = std::clamp(d.y / frame.image.height, 0.0, 1.0);
    const auto c = std::min(cols - 1, static_cast<std::size_t>(u * static_cast<double>(cols)));
    const auto r = std::min(rows - 1, static_cast<std::size_t>(v * static_cast<double>(rows)));
    grid[r * cols + c] += share;
  }
  return grid;
}

ContextProvider::ContextProvider(nn::ParameterStore& store, const ContextConfig& config, nn::Rng& rng)
    : config_(config) {
  config_.validate();
  if (config_.mode == ContextMode::kLearnedConstant) {
    constant_ = &store.add("context.feature", Tensor({1, config_.dim}));
  } else if (config_.mode == ContextMode::kGridMlp) {
    grid_ = nn::Linear(store, "context", config_.grid_cols * config_.grid_rows, config_.dim, rng);
  }
}

std::optional<Var> ContextProvider::shared_row(Tape& tape) const {
  if (config_.mode == ContextMode::kNull) return tape.constant(Tensor({1, config_.dim}));
  if (config_.mode == ContextMode::kLearnedConstant) return tape.parameter(*constant_);
  return std::nullopt;
}

Var ContextProvider::forward(Tape& tape, std::span<const org::FrameInput> frames) const {
  if (frames.empty()) throw DimensionError("context: no frames");
  if (auto row = shared_row(tape)) return nn::repeat_rows(*row, frames.size());
  const std::size_t cells = config_.grid_cols * config_.grid_rows;
  Tensor grid({frames.size(), cells});
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto g = occupancy_grid(frames[f], config_.grid_cols, config_.grid_rows);
    std::copy(g.begin(), g.end(), grid.data().begin() + static_cast<std::ptrdiff_t>(f * cells));
  }
  return nn::relu(grid_(tape, tape.constant(std::move(grid))));
}

PoseModel::PoseModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  nn::Rng rng(seed);
  if (config_.org.layers > 0) graph_.emplace(store_, config_.org, rng);
  context_ = ContextProvider(store_, config_.context, rng);
  hidden_ = nn::Linear(store_, "head_hidden", config_.head_input_dim(), config_.head_hidden, rng);
  head_t_ = nn::Linear(store_, "head_t", config_.head_hidden, 3, rng);
  head_r_ = nn::Linear(store_, "head_r", config_.head_hidden, 3, rng);
  beta_ = &store_.add("loss.beta", Tensor::scalar(config_.beta_init));
  gamma_ = &store_.add("loss.gamma", Tensor::scalar(config_.gamma_init));
}

PoseOutput PoseModel::forward(Tape& tape, std::span<const org::FrameInput> frames, const nn::ForwardContext& ctx,
                              org::OrgTrace* trace) const {
  if (frames.empty()) throw DimensionError("pose model: no frames");
  PoseOutput out;
  Var context = context_.forward(tape, frames);
  Var features = context;
  if (graph_) {
    out.xg = graph_->forward(tape, frames, ctx, trace);
    const Var parts[] = {context, *out.xg};
    features = nn::concat_cols(parts);
  }
  if (features.cols() != hidden_.in_features()) {
    throw ConfigError("model.context.dim", "context and relation features give " + std::to_string(features.cols()) +
                                               " columns but the head expects " +
                                               std::to_string(hidden_.in_features()));
  }
  Var h = nn::dropout(tape, nn::relu(hidden_(tape, features)), config_.dropout, ctx);
  out.t = head_t_(tape, h);
  out.r = head_r_(tape, h);
  return out;
}

std::vector<geometry::Pose> PoseModel::predict(std::span<const org::FrameInput> frames) const {
  constexpr std::size_t kChunk = 256;
  std::vector<geometry::Pose> poses;
  poses.reserve(frames.size());
  const nn::ForwardContext ctx{nn::Mode::kInference, false, nullptr};
  for (std::size_t begin = 0; begin < frames.size(); begin += kChunk) {
    const auto chunk = frames.subspan(begin, std::min(kChunk, frames.size() - begin));
    Tape tape;
    const PoseOutput out = forward(tape, chunk, ctx);
    const Tensor& t = out.t.value();
    const Tensor& r = out.r.value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      poses.push_back({{t(i, 0), t(i, 1), t(i, 2)}, {r(i, 0), r(i, 1), r(i, 2)}});
    }
  }
  return poses;
}

geometry::Pose PoseModel::predict_pose(const org::FrameInput& frame) const {
  return predict(std::span<const org::FrameInput>(&frame, 1)).front();
}

}  // namespace orgpose::model
