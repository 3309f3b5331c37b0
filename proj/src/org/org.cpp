#include "orgpose/org/org.hpp"

#include <cstdint>
#include <random>

#include "orgpose/error.hpp"

namespace orgpose::org {

using nn::Tape;
using nn::Tensor;
using nn::Var;

const char* to_string(Aggregate a) { return a == Aggregate::kMax ? "max" : "sum"; }
const char* to_string(EdgeUpdate u) { return u == EdgeUpdate::kDynamic ? "dynamic" : "static"; }

Aggregate parse_aggregate(const std::string& s) {
  if (s == "max") return Aggregate::kMax;
  if (s == "sum") return Aggregate::kSum;
  throw ConfigError("aggregate", "expected 'max' or 'sum', got '" + s + "'");
}

EdgeUpdate parse_edge_update(const std::string& s) {
  if (s == "dynamic") return EdgeUpdate::kDynamic;
  if (s == "static") return EdgeUpdate::kStatic;
  throw ConfigError("edge_update", "expected 'dynamic' or 'static', got '" + s + "'");
}

void OrgConfig::validate() const {
  if (category_count <= 0) throw ConfigError("org.category_count", "must be positive");
  if (embedding_dim == 0) throw ConfigError("org.embedding_dim", "must be positive");
  if (encoder_widths.empty()) throw ConfigError("org.encoder_widths", "needs at least one layer");
  for (auto w : encoder_widths) {
    if (w == 0) throw ConfigError("org.encoder_widths", "widths must be positive");
  }
  if (layers > layer_widths.size()) throw ConfigError("org.layers", "exceeds the number of layer_widths");
  for (auto w : layer_widths) {
    if (w == 0) throw ConfigError("org.layer_widths", "widths must be positive");
  }
  if (k == 0) throw ConfigError("org.k", "must be positive");
  if (fused_dim == 0) throw ConfigError("org.fused_dim", "must be positive");
  if (output_dim == 0) throw ConfigError("org.output_dim", "must be positive");
}

std::array<double, 4> normalized_geometry(const Detection& det, const ImageSize& image) {
  return {det.x / image.width, det.y / image.height, det.w / image.width, det.h / image.height};
}

NodeBatch stack_frames(std::span<const FrameInput> frames, int category_count) {
  NodeBatch batch;
  batch.frame_count = frames.size();
  std::size_t total = 0;
  for (const auto& f : frames) total += f.detections.size();
  std::vector<double> geometry;
  geometry.reserve(total * 4);
  batch.categories.reserve(total);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    if (frame.detections.empty()) continue;
    if (!(frame.image.width > 0.0 && frame.image.height > 0.0)) throw ValidationError("image size must be positive");
    for (const auto& det : frame.detections) {
      validate_detection(det, category_count);
      const auto g = normalized_geometry(det, frame.image);
      geometry.insert(geometry.end(), g.begin(), g.end());
      batch.categories.push_back(static_cast<std::size_t>(det.category));
    }
    batch.frame_offsets.push_back(batch.categories.size());
    batch.frame_of_segment.push_back(f);
  }
  if (total > 0) batch.geometry = Tensor({total, 4}, std::move(geometry));
  return batch;
}

Var edge_inputs(Tape& tape, Var nodes, const EdgeSet& edges) {
  (void)tape;
  Var xi = nn::gather_rows(nodes, edges.source);
  Var xj = nn::gather_rows(nodes, edges.target);
  const Var parts[] = {xi, nn::sub(xj, xi)};
  return nn::concat_cols(parts);
}

Var gnn_layer(Tape& tape, Var nodes, const EdgeSet& edges, const EdgeFunction& edge_fn, Aggregate aggregate) {
  if (edges.node_count() != nodes.rows()) throw DimensionError("gnn_layer: edge set does not match node count");
  Var messages = edge_fn(tape, edge_inputs(tape, nodes, edges));
  return aggregate == Aggregate::kMax ? nn::segment_max(messages, edges.offsets)
                                      : nn::segment_sum(messages, edges.offsets);
}

Var edge_affine(Var nodes, Var weight, Var bias, const EdgeSet& edges) {
  Tape& tape = *nodes.tape;
  const Tensor& x = nodes.value();
  const Tensor& w = weight.value();
  const std::size_t d = x.cols();
  const std::size_t out_dim = w.cols();
  if (w.rows() != 2 * d || bias.value().size() != out_dim) {
    throw DimensionError("edge_affine: weight " + nn::shape_string(w.shape()) + " does not map 2x" +
                         std::to_string(d) + " inputs");
  }
  if (edges.node_count() != x.rows()) throw DimensionError("edge_affine: edge set does not match node count");
  const auto di = static_cast<Eigen::Index>(d);
  const auto xm = x.mat();
  const auto wm = w.mat();
  const nn::RowMatrix self_term = xm * (wm.topRows(di) - wm.bottomRows(di));
  const nn::RowMatrix neighbor_term = xm * wm.bottomRows(di);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.value().data().data(), static_cast<Eigen::Index>(out_dim));

  const std::size_t m = edges.edge_count();
  Tensor out = Tensor::zeros(m, out_dim);
  auto o = out.mat();
  for (std::size_t e = 0; e < m; ++e) {
    const auto r = static_cast<Eigen::Index>(e);
    o.row(r) = self_term.row(static_cast<Eigen::Index>(edges.source[e])) +
               neighbor_term.row(static_cast<Eigen::Index>(edges.target[e])) + b;
  }
  return tape.record(
      std::move(out), {nodes.id, weight.id, bias.id},
      [ix = nodes.id, iw = weight.id, ib = bias.id, source = edges.source, target = edges.target](Tape& t,
                                                                                               std::size_t self) {
        const auto g = t.grad_buffer(self).mat();
        const auto xm = t.value(ix).mat();
        const auto wm = t.value(iw).mat();
        const auto d = xm.cols();
        nn::RowMatrix g_self = nn::RowMatrix::Zero(xm.rows(), g.cols());
        nn::RowMatrix g_neighbor = nn::RowMatrix::Zero(xm.rows(), g.cols());
        for (std::size_t e = 0; e < source.size(); ++e) {
          const auto r = static_cast<Eigen::Index>(e);
          g_self.row(static_cast<Eigen::Index>(source[e])) += g.row(r);
          g_neighbor.row(static_cast<Eigen::Index>(target[e])) += g.row(r);
        }
        if (t.requires_grad(ix)) {
          auto gx = t.grad_buffer(ix).mat();
          gx.noalias() += g_self * (wm.topRows(d) - wm.bottomRows(d)).transpose();
          gx.noalias() += g_neighbor * wm.bottomRows(d).transpose();
        }
        if (t.requires_grad(iw)) {
          auto gw = t.grad_buffer(iw).mat();
          gw.topRows(d).noalias() += xm.transpose() * g_self;
          gw.bottomRows(d).noalias() += xm.transpose() * (g_neighbor - g_self);
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Eigen::Index>(gb.size())) += nn::column_sum(g);
        }
      });
}

EdgeMlp::EdgeMlp(nn::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                 const nn::BatchNormOptions& bn, nn::Rng& rng)
    : linear_(store, name, 2 * in, out, rng), norm_(store, name + ".bn", out, bn) {}

Var EdgeMlp::operator()(Tape& tape, Var edge_rows, const nn::ForwardContext& ctx) const {
  return nn::relu(norm_(tape, linear_(tape, edge_rows), ctx));
}

Var EdgeMlp::on_edges(Tape& tape, Var nodes, const EdgeSet& edges, const nn::ForwardContext& ctx) const {
  Var pre = edge_affine(nodes, tape.parameter(linear_.weight()), tape.parameter(linear_.bias()), edges);
  return nn::relu(norm_(tape, pre, ctx));
}

Var EdgeMlp::aggregate(Tape& tape, Var nodes, const EdgeSet& edges, Aggregate aggregate,
                       const nn::ForwardContext& ctx) const {
  using RowVec = Eigen::RowVectorXd;
  // Parameter leaves first: appending nodes may move earlier node values.
  Var weight = tape.parameter(linear_.weight());
  Var bias = tape.parameter(linear_.bias());
  Var scale = tape.parameter(norm_.scale());
  Var shift = tape.parameter(norm_.shift());
  const Tensor& x = nodes.value();
  const std::size_t d = x.cols();
  const std::size_t c_out = linear_.out_features();
  if (linear_.in_features() != 2 * d) {
    throw DimensionError("edge layer: expects " + std::to_string(linear_.in_features() / 2) + " node features, got " +
                         std::to_string(d));
  }
  if (edges.node_count() != x.rows()) throw DimensionError("edge layer: edge set does not match node count");
  const std::size_t n = x.rows();
  const std::size_t m = edges.edge_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (edges.offsets[i + 1] <= edges.offsets[i]) throw DimensionError("edge layer: node without out-edges");
  }

  // Edge pre-activations z_e = self[source] + neighbor[target] are rebuilt on
  // the fly from these node-level terms.
  const auto di = static_cast<Eigen::Index>(d);
  const auto wm = weight.value().mat();
  nn::RowMatrix self_term = x.mat() * (wm.topRows(di) - wm.bottomRows(di));
  self_term.rowwise() += Eigen::Map<const RowVec>(bias.value().data().data(), static_cast<Eigen::Index>(c_out));
  nn::RowMatrix neighbor_term = x.mat() * wm.bottomRows(di);
  const auto& source = edges.source;
  const auto& target = edges.target;
  auto z_row = [&](std::size_t e, double* out) {
    const double* a = self_term.data() + source[e] * c_out;
    const double* b = neighbor_term.data() + target[e] * c_out;
    for (std::size_t c = 0; c < c_out; ++c) out[c] = a[c] + b[c];
  };

  RowVec mean = RowVec::Zero(static_cast<Eigen::Index>(c_out));
  RowVec inv_std(static_cast<Eigen::Index>(c_out));
  const bool batch_stats = ctx.training() && m >= 2;
  RowVec z(static_cast<Eigen::Index>(c_out));
  if (batch_stats) {
    for (std::size_t e = 0; e < m; ++e) {
      z_row(e, z.data());
      mean += z;
    }
    mean /= static_cast<double>(m);
    RowVec var = RowVec::Zero(static_cast<Eigen::Index>(c_out));
    for (std::size_t e = 0; e < m; ++e) {
      z_row(e, z.data());
      var += (z - mean).cwiseAbs2();
    }
    var /= static_cast<double>(m);
    inv_std = (var.array() + norm_.options().epsilon).rsqrt();
    if (ctx.update_running_stats) {
      const double mo = norm_.options().momentum;
      auto rm = Eigen::Map<RowVec>(norm_.running_mean().value.data().data(), static_cast<Eigen::Index>(c_out));
      auto rv = Eigen::Map<RowVec>(norm_.running_var().value.data().data(), static_cast<Eigen::Index>(c_out));
      rm = (1.0 - mo) * rm + mo * mean;
      rv = (1.0 - mo) * rv + mo * var;
    }
  } else {
    mean = Eigen::Map<const RowVec>(norm_.running_mean().value.data().data(), static_cast<Eigen::Index>(c_out));
    inv_std = (Eigen::Map<const RowVec>(norm_.running_var().value.data().data(), static_cast<Eigen::Index>(c_out))
                   .array() +
               norm_.options().epsilon)
                  .rsqrt();
  }
  const RowVec gain =
      Eigen::Map<const RowVec>(scale.value().data().data(), static_cast<Eigen::Index>(c_out)).cwiseProduct(inv_std);
  const RowVec offset =
      Eigen::Map<const RowVec>(shift.value().data().data(), static_cast<Eigen::Index>(c_out)) - mean.cwiseProduct(gain);

  nn::SelectionLog* log = tape.selections();
  const bool replay = log && log->mode() == nn::SelectionLog::Mode::kReplay;
  const bool record = log && log->mode() == nn::SelectionLog::Mode::kRecord;
  const bool use_max = aggregate == Aggregate::kMax;

  std::vector<std::uint8_t> active(m * c_out);
  std::vector<std::size_t> winner(use_max ? n * c_out : 0);
  if (replay) {
    const auto& logged = log->next(active.size());
    std::copy(logged.begin(), logged.end(), active.begin());
    if (use_max) winner = log->next(winner.size());
  }

  Tensor out = Tensor::zeros(n, c_out);
  double* o = out.data().data();
  RowVec y(static_cast<Eigen::Index>(c_out));
  for (std::size_t i = 0; i < n; ++i) {
    double* oi = o + i * c_out;
    for (std::size_t e = edges.offsets[i]; e < edges.offsets[i + 1]; ++e) {
      z_row(e, z.data());
      y = z.cwiseProduct(gain) + offset;
      std::uint8_t* act = active.data() + e * c_out;
      if (!replay) {
        for (std::size_t c = 0; c < c_out; ++c) act[c] = y[static_cast<Eigen::Index>(c)] > 0.0 ? 1 : 0;
      }
      for (std::size_t c = 0; c < c_out; ++c) {
        if (!act[c]) y[static_cast<Eigen::Index>(c)] = 0.0;
      }
      if (!use_max) {
        for (std::size_t c = 0; c < c_out; ++c) oi[c] += y[static_cast<Eigen::Index>(c)];
      } else if (!replay) {
        std::size_t* win = winner.data() + i * c_out;
        const bool first = e == edges.offsets[i];
        for (std::size_t c = 0; c < c_out; ++c) {
          const double v = y[static_cast<Eigen::Index>(c)];
          if (first || v > oi[c]) {
            oi[c] = v;
            win[c] = e;
          }
        }
      }
    }
    if (use_max && replay) {
      for (std::size_t c = 0; c < c_out; ++c) {
        const std::size_t e = winner[i * c_out + c];
        if (e < edges.offsets[i] || e >= edges.offsets[i + 1]) throw Error("replayed max winner outside its segment");
        const double v = (self_term(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) +
                          neighbor_term(static_cast<Eigen::Index>(target[e]), static_cast<Eigen::Index>(c))) *
                             gain[static_cast<Eigen::Index>(c)] +
                         offset[static_cast<Eigen::Index>(c)];
        oi[c] = active[e * c_out + c] ? v : 0.0;
      }
    }
  }
  if (record) {
    log->record(std::vector<std::size_t>(active.begin(), active.end()));
    if (use_max) log->record(winner);
  }

  return tape.record(
      std::move(out), {nodes.id, weight.id, bias.id, scale.id, shift.id},
      [ix = nodes.id, iw = weight.id, ib = bias.id, is = scale.id, ish = shift.id, edges, c_out, use_max, batch_stats,
       self_term = std::move(self_term), neighbor_term = std::move(neighbor_term), mean, inv_std,
       active = std::move(active), winner = std::move(winner)](Tape& t, std::size_t self) {
        const Tensor& g_out = t.grad_buffer(self);
        const double* go = g_out.data().data();
        const std::size_t n = edges.node_count();
        const std::size_t m = edges.edge_count();
        const auto ci = static_cast<Eigen::Index>(c_out);
        const RowVec gain =
            Eigen::Map<const RowVec>(t.value(is).data().data(), ci).cwiseProduct(inv_std);
        auto xhat = [&](std::size_t e, std::size_t c) {
          const auto cc = static_cast<Eigen::Index>(c);
          return (self_term(static_cast<Eigen::Index>(edges.source[e]), cc) +
                  neighbor_term(static_cast<Eigen::Index>(edges.target[e]), cc) - mean[cc]) *
                 inv_std[cc];
        };

        // Gradient reaching the normalized edge activations is non-zero only
        // at active elements that feed the aggregate.
        RowVec sum_g = RowVec::Zero(ci);
        RowVec sum_g_xhat = RowVec::Zero(ci);
        if (use_max) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < c_out; ++c) {
              const std::size_t e = winner[i * c_out + c];
              if (!active[e * c_out + c]) continue;
              const double g = go[i * c_out + c];
              sum_g[static_cast<Eigen::Index>(c)] += g;
              sum_g_xhat[static_cast<Eigen::Index>(c)] += g * xhat(e, c);
            }
          }
        } else {
          for (std::size_t e = 0; e < m; ++e) {
            const double* gi = go + edges.source[e] * c_out;
            for (std::size_t c = 0; c < c_out; ++c) {
              if (!active[e * c_out + c]) continue;
              sum_g[static_cast<Eigen::Index>(c)] += gi[c];
              sum_g_xhat[static_cast<Eigen::Index>(c)] += gi[c] * xhat(e, c);
            }
          }
        }
        if (t.requires_grad(is)) {
          Eigen::Map<RowVec>(t.grad_buffer(is).data().data(), ci) += sum_g_xhat;
        }
        if (t.requires_grad(ish)) {
          Eigen::Map<RowVec>(t.grad_buffer(ish).data().data(), ci) += sum_g;
        }
        const bool need_z = t.requires_grad(ix) || t.requires_grad(iw) || t.requires_grad(ib);
        if (!need_z) return;

        // dz_e = gain * (g_e - mean(g) - xhat_e * mean(g * xhat)) under batch
        // statistics, gain * g_e otherwise; scattered to both edge endpoints.
        nn::RowMatrix g_self = nn::RowMatrix::Zero(static_cast<Eigen::Index>(n), ci);
        nn::RowMatrix g_neighbor = nn::RowMatrix::Zero(static_cast<Eigen::Index>(n), ci);
        auto scatter = [&](std::size_t e, std::size_t c, double dz) {
          g_self.data()[edges.source[e] * c_out + c] += dz;
          g_neighbor.data()[edges.target[e] * c_out + c] += dz;
        };
        if (batch_stats) {
          const RowVec mean_g = sum_g / static_cast<double>(m);
          const RowVec mean_g_xhat = sum_g_xhat / static_cast<double>(m);
          RowVec dz(ci);
          for (std::size_t e = 0; e < m; ++e) {
            for (std::size_t c = 0; c < c_out; ++c) {
              const auto cc = static_cast<Eigen::Index>(c);
              dz[cc] = -gain[cc] * (mean_g[cc] + xhat(e, c) * mean_g_xhat[cc]);
            }
            g_self.row(static_cast<Eigen::Index>(edges.source[e])) += dz;
            g_neighbor.row(static_cast<Eigen::Index>(edges.target[e])) += dz;
          }
        }
        if (use_max) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < c_out; ++c) {
              const std::size_t e = winner[i * c_out + c];
              if (active[e * c_out + c]) scatter(e, c, gain[static_cast<Eigen::Index>(c)] * go[i * c_out + c]);
            }
          }
        } else {
          for (std::size_t e = 0; e < m; ++e) {
            const double* gi = go + edges.source[e] * c_out;
            for (std::size_t c = 0; c < c_out; ++c) {
              if (active[e * c_out + c]) scatter(e, c, gain[static_cast<Eigen::Index>(c)] * gi[c]);
            }
          }
        }

        const auto xm = t.value(ix).mat();
        const auto wm = t.value(iw).mat();
        const auto d = xm.cols();
        if (t.requires_grad(ix)) {
          auto gx = t.grad_buffer(ix).mat();
          gx.noalias() += g_self * (wm.topRows(d) - wm.bottomRows(d)).transpose();
          gx.noalias() += g_neighbor * wm.bottomRows(d).transpose();
        }
        if (t.requires_grad(iw)) {
          auto gw = t.grad_buffer(iw).mat();
          gw.topRows(d).noalias() += xm.transpose() * g_self;
          gw.bottomRows(d).noalias() += xm.transpose() * (g_neighbor - g_self);
        }
        if (t.requires_grad(ib)) {
          Eigen::Map<RowVec>(t.grad_buffer(ib).data().data(), ci) += nn::column_sum(g_self);
        }
      });
}

ObjectRelationGraph::ObjectRelationGraph(nn::ParameterStore& store, OrgConfig config, nn::Rng& rng)
    : config_(std::move(config)) {
  config_.validate();
  if (config_.layers == 0) throw ConfigError("org.layers", "an object relation graph needs at least one layer");

  Tensor table = Tensor::zeros(static_cast<std::size_t>(config_.category_count), config_.embedding_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : table.data()) v = normal(rng);
  embedding_ = &store.add("embed.table", std::move(table));

  std::size_t in = 4 + config_.embedding_dim;
  for (std::size_t i = 0; i < config_.encoder_widths.size(); ++i) {
    const std::string name = "encoder" + std::to_string(i);
    encoder_.emplace_back(store, name, in, config_.encoder_widths[i], rng);
    encoder_norms_.emplace_back(store, name + ".bn", config_.encoder_widths[i], config_.batchnorm);
    in = config_.encoder_widths[i];
  }

  std::size_t concat_dim = 0;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t out = config_.layer_widths[l];
    edge_mlps_.emplace_back(store, "edge" + std::to_string(l + 1), in, out, config_.batchnorm, rng);
    in = out;
    concat_dim += out;
  }
  fusion_ = nn::Linear(store, "fusion", concat_dim, config_.fused_dim, rng);
  fusion_norm_ = nn::BatchNorm(store, "fusion.bn", config_.fused_dim, config_.batchnorm);
  global_ = nn::Linear(store, "global", 2 * config_.fused_dim, config_.output_dim, rng);
  empty_feature_ = &store.add("empty.xg", Tensor({1, config_.output_dim}));
}

Var ObjectRelationGraph::encode(Tape& tape, const NodeBatch& batch, const nn::ForwardContext& ctx) const {
  if (batch.node_count() == 0) throw DimensionError("encode: no detections");
  Var geometry = tape.constant(batch.geometry);
  Var embedded = nn::gather_rows(tape.parameter(*embedding_), batch.categories);
  const Var parts[] = {geometry, embedded};
  Var h = nn::concat_cols(parts);
  for (std::size_t i = 0; i < encoder_.size(); ++i) h = nn::relu(encoder_norms_[i](tape, encoder_[i](tape, h), ctx));
  return h;
}

Var ObjectRelationGraph::forward(Tape& tape, std::span<const FrameInput> frames, const nn::ForwardContext& ctx,
                                 OrgTrace* trace) const {
  if (frames.empty()) throw DimensionError("org forward: no frames");
  const NodeBatch batch = stack_frames(frames, config_.category_count);
  Var empty = tape.parameter(*empty_feature_);
  if (batch.node_count() == 0) return nn::repeat_rows(empty, frames.size());

  Var nodes = encode(tape, batch, ctx);
  if (trace) {
    trace->layer_edges.clear();
    trace->frame_offsets = batch.frame_offsets;
    trace->node_features = nodes.value();
  }

  EdgeSet static_edges;
  if (config_.edge_update == EdgeUpdate::kStatic) {
    static_edges = build_knn_edges(nodes.value(), batch.frame_offsets, config_.k, tape.selections());
  }
  std::vector<Var> levels;
  levels.reserve(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    EdgeSet dynamic_edges;
    if (config_.edge_update == EdgeUpdate::kDynamic) {
      dynamic_edges = build_knn_edges(nodes.value(), batch.frame_offsets, config_.k, tape.selections());
    }
    const EdgeSet& edges = config_.edge_update == EdgeUpdate::kDynamic ? dynamic_edges : static_edges;
    nodes = edge_mlps_[l].aggregate(tape, nodes, edges, config_.aggregate, ctx);
    levels.push_back(nodes);
    if (trace) trace->layer_edges.push_back(edges);
  }

  Var fused = nn::relu(fusion_norm_(tape, fusion_(tape, nn::concat_cols(levels)), ctx));
  const Var pooled[] = {nn::segment_max(fused, batch.frame_offsets), nn::segment_mean(fused, batch.frame_offsets)};
  Var relation = global_(tape, nn::concat_cols(pooled));
  if (batch.segment_count() == frames.size()) return relation;

  // Route empty frames to the learned default row appended after the segments.
  const Var stacked_parts[] = {relation, empty};
  Var stacked = nn::concat_rows(stacked_parts);
  std::vector<std::size_t> route(frames.size(), batch.segment_count());
  for (std::size_t s = 0; s < batch.segment_count(); ++s) route[batch.frame_of_segment[s]] = s;
  return nn::gather_rows(stacked, std::move(route));
}

}  // namespace orgpose::org
