#include "orgpose/model/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "orgpose/error.hpp"
#include "orgpose/geometry/pose.hpp"
#include "orgpose/model/loss.hpp"

namespace orgpose::model {

using nlohmann::json;

void GradcheckConfig::validate() const {
  model.validate();
  if (objects < 2) throw ConfigError("gradcheck.objects", "need at least 2 objects per frame");
  if (frames < 2) throw ConfigError("gradcheck.frames", "the tuple loss needs at least 2 frames");
  if (!(step > 0.0)) throw ConfigError("gradcheck.step", "must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("gradcheck.tolerance", "must be positive");
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.variant = Variant::kMapNet;
  c.org.embedding_dim = 4;
  c.org.encoder_widths = {8, 8};
  c.org.layer_widths = {6, 6, 8, 8};
  c.org.layers = 4;
  c.org.k = 3;
  c.org.fused_dim = 8;
  c.org.output_dim = 8;
  c.context.dim = 8;
  c.head_hidden = 8;
  return c;
}

GradcheckConfig default_gradcheck_config() {
  GradcheckConfig c;
  c.model = tiny_model_config();
  return c;
}

json gradcheck_config_to_json(const GradcheckConfig& c) {
  return {{"model", model_config_to_json(c.model)},
          {"objects", c.objects},
          {"frames", c.frames},
          {"step", c.step},
          {"tolerance", c.tolerance},
          {"seed", c.seed}};
}

GradcheckConfig gradcheck_config_from_json(const json& j) {
  auto c = default_gradcheck_config();
  if (!j.is_object()) throw ConfigError("gradcheck", "expected an object");
  if (j.contains("model")) {
    auto merged = model_config_to_json(c.model);
    merged.merge_patch(j.at("model"));
    c.model = model_config_from_json(merged);
  }
  try {
    c.objects = j.value("objects", c.objects);
    c.frames = j.value("frames", c.frames);
    c.step = j.value("step", c.step);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError("gradcheck", e.what());
  }
  return c;
}

json gradcheck_report_to_json(const GradcheckReport& r) {
  json groups = json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"group", g.group},
                      {"elements", g.elements},
                      {"max_abs_error", g.max_abs_error},
                      {"max_relative_error", g.max_relative_error},
                      {"passed", g.passed}});
  }
  return {{"passed", r.passed}, {"groups", groups}};
}

namespace {

std::vector<std::vector<org::Detection>> random_frames(const GradcheckConfig& c, nn::Rng& rng) {
  const org::ImageSize image;
  std::uniform_real_distribution<double> x(0.1 * image.width, 0.9 * image.width);
  std::uniform_real_distribution<double> y(0.1 * image.height, 0.9 * image.height);
  std::uniform_real_distribution<double> size(20.0, 120.0);
  std::uniform_int_distribution<int> category(0, c.model.org.category_count - 1);
  std::vector<std::vector<org::Detection>> frames(c.frames);
  for (auto& f : frames) {
    for (std::size_t i = 0; i < c.objects; ++i) f.push_back({x(rng), y(rng), size(rng), size(rng), category(rng), 1.0});
  }
  return frames;
}

std::vector<geometry::Pose> random_poses(std::size_t n, nn::Rng& rng) {
  std::uniform_real_distribution<double> t(-2.0, 2.0);
  std::uniform_real_distribution<double> r(-0.5, 0.5);
  std::vector<geometry::Pose> poses(n);
  for (auto& p : poses) {
    p.t = {t(rng), t(rng), t(rng)};
    p.r = {r(rng), r(rng), r(rng)};
  }
  return poses;
}

}  // namespace

GradcheckReport gradient_check(const GradcheckConfig& config, const OutputTransform& transform) {
  config.validate();
  nn::Rng data_rng(nn::derive_seed(config.seed, 7));
  const auto detections = random_frames(config, data_rng);
  const auto targets = random_poses(config.frames, data_rng);
  std::vector<org::FrameInput> inputs;
  for (const auto& d : detections) inputs.push_back({d, org::ImageSize{}});

  PoseModel model(config.model, config.seed);
  auto& store = model.parameters();
  // Nudge every parameter off its initial value so that zero-initialized
  // biases and scalars are exercised away from special points.
  nn::Rng jitter_rng(nn::derive_seed(config.seed, 8));
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto* p : store.trainable()) {
    for (auto& v : p->value.data()) v += jitter(jitter_rng);
  }

  nn::SelectionLog log;
  auto loss_of = [&](bool backward) {
    nn::Tape tape;
    tape.set_selections(&log);
    nn::Rng dropout_rng(nn::derive_seed(config.seed, 9));
    const nn::ForwardContext ctx{nn::Mode::kTraining, false, &dropout_rng};
    auto out = model.forward(tape, inputs, ctx);
    if (transform) out = transform(tape, out);
    auto loss = loss_frame({out.t, out.r}, targets, config.frames, model.beta(tape), model.gamma(tape));
    if (backward) {
      store.zero_grad();
      tape.backward(loss);
    }
    return loss.value().item();
  };

  log.start_recording();
  loss_of(true);
  log.start_replay();

  std::map<std::string, GroupResult> groups;
  std::map<std::string, double> scale;
  for (auto* p : store.trainable()) {
    auto& g = groups[p->group()];
    g.group = p->group();
    auto& s = scale[g.group];
    const nn::Tensor analytic = p->grad;
    auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + config.step;
      log.start_replay();
      const double plus = loss_of(false);
      values[i] = original - config.step;
      log.start_replay();
      const double minus = loss_of(false);
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * config.step);
      g.max_abs_error = std::max(g.max_abs_error, std::abs(analytic[i] - numeric));
      s = std::max({s, std::abs(analytic[i]), std::abs(numeric)});
      ++g.elements;
    }
  }

  GradcheckReport report;
  report.passed = true;
  for (auto& [name, g] : groups) {
    g.max_relative_error = g.max_abs_error / std::max(scale[name], 1e-8);
    g.passed = std::isfinite(g.max_relative_error) && g.max_relative_error <= config.tolerance;
    report.passed = report.passed && g.passed;
    report.groups.push_back(g);
  }
  log.stop();
  return report;
}

}  // namespace orgpose::model
