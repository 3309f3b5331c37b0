#include "orgpose/model/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>

#include "orgpose/error.hpp"
#include "orgpose/model/loss.hpp"

namespace orgpose::model {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "orgpose-checkpoint-1";

// Stream tags for derive_seed; the model itself is initialized from the bare seed.
constexpr std::uint64_t kShuffleStream = 1'000'000;
constexpr std::uint64_t kDropoutStream = 2'000'000;

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if constexpr (std::is_unsigned_v<T>) {
    if (v.is_number_integer() && v.get<long long>() < 0) throw ConfigError(std::string("train.") + key, "must be non-negative");
  }
  try {
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train.") + key, e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs", "must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) {
    throw ConfigError("train.learning_rate", "must be finite and non-negative");
  }
  if (!(weight_decay >= 0.0 && std::isfinite(weight_decay))) {
    throw ConfigError("train.weight_decay", "must be finite and non-negative");
  }
  if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0)) throw ConfigError("train.lr_drop_factor", "must lie in (0, 1]");
  if (tuple_size < 2) throw ConfigError("train.tuple_size", "must be at least 2");
  if (frame_gap == 0) throw ConfigError("train.frame_gap", "must be positive");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"lr_drop_factor", c.lr_drop_factor},
          {"tuple_size", c.tuple_size},
          {"frame_gap", c.frame_gap},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train", "expected an object");
  TrainConfig c;
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "weight_decay", c.weight_decay);
  read_opt(j, "lr_drop_factor", c.lr_drop_factor);
  read_opt(j, "tuple_size", c.tuple_size);
  read_opt(j, "frame_gap", c.frame_gap);
  read_opt(j, "checkpoint_every", c.checkpoint_every);
  read_opt(j, "seed", c.seed);
  return c;
}

double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
  return epoch >= config.epochs / 2 ? config.learning_rate * config.lr_drop_factor : config.learning_rate;
}

json epoch_record_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"loss", r.loss}, {"beta", r.beta}, {"gamma", r.gamma}, {"lr", r.learning_rate}};
}

namespace {

// Batches of `per_batch` units; a trailing single unit joins the previous
// batch so no batch-norm pass sees one frame.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t per_batch) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < order.size(); b += per_batch) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + per_batch)));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

void write_diagnostic(const TrainHooks& hooks, const PoseModel& model, const TrainerState& state,
                      const TrainConfig& config) {
  if (hooks.checkpoint_dir.empty()) return;
  std::filesystem::create_directories(hooks.checkpoint_dir);
  save_checkpoint(hooks.checkpoint_dir / kDiagnosticFile, model, state, config);
}

}  // namespace

std::vector<EpochRecord> train(PoseModel& model, TrainerState& state, const FrameSet& frames,
                               const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (frames.empty()) throw ValidationError("training set is empty");
  const bool tuples = model.config().variant == Variant::kMapNet;

  // Units are frames for the single-frame loss and tuples for the tuple loss.
  std::vector<std::vector<std::size_t>> units;
  if (tuples) {
    for (auto& t : frame_tuples(frames, config.tuple_size, config.frame_gap)) units.push_back(std::move(t.indices));
    if (units.empty()) {
      throw ValidationError("no sequence is long enough for tuples of " + std::to_string(config.tuple_size) +
                            " frames spaced " + std::to_string(config.frame_gap) + " apart");
    }
  } else {
    for (std::size_t i = 0; i < frames.size(); ++i) units.push_back({i});
  }
  if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);

  std::vector<EpochRecord> records;
  auto& store = model.parameters();
  for (std::size_t epoch = state.epoch; epoch < config.epochs; ++epoch) {
    nn::Rng shuffle_rng(nn::derive_seed(config.seed, kShuffleStream + epoch));
    nn::Rng dropout_rng(nn::derive_seed(config.seed, kDropoutStream + epoch));
    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    nn::AdamOptions options;
    options.learning_rate = learning_rate_at(config, epoch);
    options.weight_decay = config.weight_decay;

    double loss_total = 0.0;
    std::size_t frame_total = 0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      std::vector<std::size_t> indices;
      for (auto u : batch) indices.insert(indices.end(), units[u].begin(), units[u].end());
      const auto inputs = frames.inputs(indices);
      std::vector<geometry::Pose> targets;
      targets.reserve(indices.size());
      for (auto i : indices) targets.push_back(frames.poses[i]);

      nn::Tape tape;
      const nn::ForwardContext ctx{nn::Mode::kTraining, true, &dropout_rng};
      const auto out = model.forward(tape, inputs, ctx);
      const PoseRows rows{out.t, out.r};
      nn::Var loss = tuples ? loss_frame(rows, targets, config.tuple_size, model.beta(tape), model.gamma(tape))
                            : loss_single(rows, targets, model.beta(tape), model.gamma(tape));
      const double n = static_cast<double>(indices.size());
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        write_diagnostic(hooks, model, state, config);
        throw NumericalError("non-finite training loss in epoch " + std::to_string(epoch + 1));
      }
      store.zero_grad();
      tape.backward(nn::scale(loss, 1.0 / n));
      try {
        state.adam.step(store, options);
      } catch (const NumericalError&) {
        write_diagnostic(hooks, model, state, config);
        throw;
      }
      loss_total += value;
      frame_total += indices.size();
    }

    state.epoch = epoch + 1;
    EpochRecord record{state.epoch, loss_total / static_cast<double>(frame_total), model.beta_value(),
                       model.gamma_value(), options.learning_rate};
    records.push_back(record);
    if (hooks.log) *hooks.log << epoch_record_to_json(record).dump() << '\n' << std::flush;

    const bool last = state.epoch == config.epochs;
    const bool periodic = config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0;
    if (!hooks.checkpoint_dir.empty() && (last || periodic)) {
      save_checkpoint(hooks.checkpoint_dir / kCheckpointFile, model, state, config);
    }
  }
  return records;
}

// ---- checkpoint I/O ----

namespace {

class JsonWriter {
 public:
  explicit JsonWriter(std::ostream& out) : out_(out) {}

  void raw(std::string_view s) { out_ << s; }
  void key(const std::string& k) { out_ << json(k).dump() << ':'; }

  void number(double v) {
    if (!std::isfinite(v)) {
      out_ << "null";
      return;
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out_.write(buf, res.ptr - buf);
  }

  void array(std::span<const double> values) {
    out_ << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      number(values[i]);
    }
    out_ << ']';
  }

  void shape(const nn::Shape& shape) { out_ << json(shape).dump(); }

 private:
  std::ostream& out_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PoseModel& model, const TrainerState& state,
                     const TrainConfig& config) {
  // Written to a sibling file first so an interrupted save never clobbers the last good checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    JsonWriter w(out);
    w.raw("{\"format\":");
    w.raw(json(kFormat).dump());
    w.raw(",\"model\":");
    w.raw(model_config_to_json(model.config()).dump());
    w.raw(",\"train\":");
    w.raw(train_config_to_json(config).dump());
    w.raw(",\"epoch\":" + std::to_string(state.epoch));
    w.raw(",\"seed\":" + std::to_string(config.seed));
    w.raw(",\"loss\":{\"beta\":");
    w.number(model.beta_value());
    w.raw(",\"gamma\":");
    w.number(model.gamma_value());
    w.raw("}");

    const auto& store = model.parameters();
    for (const bool trainable : {true, false}) {
      w.raw(trainable ? ",\"parameters\":{" : ",\"buffers\":{");
      bool first = true;
      for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& p = store[i];
        if (p.trainable != trainable) continue;
        if (!first) w.raw(",");
        first = false;
        w.key(p.name);
        w.raw("{\"shape\":");
        w.shape(p.value.shape());
        w.raw(",\"data\":");
        w.array(p.value.data());
        if (const auto* m = state.adam.find(p.name); trainable && m && !m->first.empty()) {
          w.raw(",\"adam\":{\"step\":" + std::to_string(m->step) + ",\"m\":");
          w.array(m->first.data());
          w.raw(",\"v\":");
          w.array(m->second.data());
          w.raw("}");
        }
        w.raw("}");
      }
      w.raw("}");
    }
    w.raw("}\n");
    if (!out.flush()) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

nn::Tensor read_tensor(const json& data, const nn::Shape& shape, const std::string& what) {
  if (!data.is_array()) throw CheckpointMismatchError(what + ": expected an array");
  nn::Tensor t(shape);
  if (data.size() != t.size()) {
    throw CheckpointMismatchError(what + ": holds " + std::to_string(data.size()) + " values, shape " +
                                  nn::shape_string(shape) + " needs " + std::to_string(t.size()));
  }
  auto out = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!data[i].is_number()) throw CheckpointMismatchError(what + ": non-numeric entry " + std::to_string(i));
    out[i] = data[i].get<double>();
  }
  return t;
}

void restore_entries(const json& section, nn::ParameterStore& store, bool trainable, nn::Adam* adam) {
  std::size_t expected = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (p.trainable != trainable) continue;
    ++expected;
    if (!section.contains(p.name)) throw CheckpointMismatchError("checkpoint lacks '" + p.name + "'");
    const auto& entry = section.at(p.name);
    const auto shape = entry.at("shape").get<nn::Shape>();
    if (shape != p.value.shape()) {
      throw CheckpointMismatchError("'" + p.name + "' has shape " + nn::shape_string(shape) + " in the checkpoint, " +
                                    nn::shape_string(p.value.shape()) + " in the model");
    }
    p.value = read_tensor(entry.at("data"), shape, p.name);
    if (adam && entry.contains("adam")) {
      const auto& a = entry.at("adam");
      auto& m = adam->moments(p.name);
      m.step = a.at("step").get<std::uint64_t>();
      m.first = read_tensor(a.at("m"), shape, p.name + " first moment");
      m.second = read_tensor(a.at("v"), shape, p.name + " second moment");
    }
  }
  if (section.size() != expected) {
    for (const auto& [name, value] : section.items()) {
      const auto* p = store.find(name);
      if (!p || p->trainable != trainable) {
        throw CheckpointMismatchError("checkpoint entry '" + name + "' has no counterpart in the model");
      }
    }
  }
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFormat) {
    throw ParseError(path.string(), 0, "not a checkpoint (format tag missing or unknown)");
  }
  try {
    LoadedCheckpoint out;
    const auto model_config = model_config_from_json(j.at("model"));
    model_config.validate();
    out.train = train_config_from_json(j.at("train"));
    out.model = std::make_unique<PoseModel>(model_config, out.train.seed);
    out.state.epoch = j.at("epoch").get<std::size_t>();
    auto& store = out.model->parameters();
    restore_entries(j.at("parameters"), store, true, &out.state.adam);
    restore_entries(j.at("buffers"), store, false, nullptr);
    return out;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const ConfigError& e) {
    throw CheckpointMismatchError(std::string("checkpoint configuration: ") + e.what());
  }
}

namespace {

struct Difference {
  std::string field;
  json expected;
  json stored;
};

std::optional<Difference> first_difference(const json& a, const json& b, const std::string& field) {
  if (a.is_object() && b.is_object()) {
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) return Difference{field + "." + k, v, json()};
      if (auto d = first_difference(v, b.at(k), field + "." + k)) return d;
    }
    for (const auto& [k, v] : b.items()) {
      if (!a.contains(k)) return Difference{field + "." + k, json(), v};
    }
    return std::nullopt;
  }
  if (a == b) return std::nullopt;
  return Difference{field, a, b};
}

}  // namespace

void require_compatible(const ModelConfig& expected, const ModelConfig& stored) {
  if (auto d = first_difference(model_config_to_json(expected), model_config_to_json(stored), "model")) {
    throw CheckpointMismatchError("checkpoint differs from the configuration in '" + d->field + "': configured " +
                                  d->expected.dump() + ", stored " + d->stored.dump());
  }
}

}  // namespace orgpose::model
