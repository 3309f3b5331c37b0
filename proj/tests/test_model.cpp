#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "orgpose/error.hpp"
#include "orgpose/model/evaluate.hpp"
#include "orgpose/model/gradcheck.hpp"
#include "orgpose/model/loss.hpp"
#include "orgpose/model/train.hpp"
#include "orgpose/synth/synth.hpp"
#include "support.hpp"

using namespace orgpose;
using namespace orgpose::model;
using geometry::Pose;
using nn::Tape;
using nn::Tensor;

namespace {

PoseRows rows_on(Tape& tape, const std::vector<Pose>& poses) {
  return {tape.variable(translation_rows(poses)), tape.variable(rotation_rows(poses))};
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("orgpose_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ModelConfig small_model() {
  ModelConfig c = tiny_model_config();
  c.variant = Variant::kPoseNet;
  c.org.encoder_widths = {16, 16};
  c.org.layer_widths = {16, 16, 16, 16};
  c.org.fused_dim = 16;
  c.org.output_dim = 16;
  c.org.k = 5;
  c.context.dim = 16;
  c.head_hidden = 16;
  return c;
}

data::Dataset small_dataset(std::size_t frames, std::uint64_t seed = 1) {
  synth::SynthConfig sc;
  sc.trajectory.frames = frames;
  sc.holdout_every = 4;
  return synth::generate_dataset(sc, seed);
}

}  // namespace

TEST_CASE("single-frame loss at perfect predictions is N times beta plus gamma") {
  std::mt19937_64 rng(1);
  std::vector<Pose> gt;
  for (int i = 0; i < 4; ++i) gt.push_back(testing::random_pose(rng));
  Tape tape;
  const auto loss = loss_single(rows_on(tape, gt), gt, tape.variable(Tensor::scalar(0.0)),
                                tape.variable(Tensor::scalar(-3.0)));
  CHECK(loss.value().item() == doctest::Approx(-12.0).epsilon(1e-15));
  CHECK(loss_single_value(gt, gt, 0.0, -3.0) == doctest::Approx(-12.0).epsilon(1e-15));
}

TEST_CASE("single-frame loss: worked example and batch doubling") {
  Pose p;
  Pose q;
  q.t = {2.0, 0.0, 0.0};
  q.r = {0.1, 0.0, 0.0};
  const std::vector<Pose> pred{p};
  const std::vector<Pose> gt{q};
  CHECK(loss_single_value(pred, gt, 0.0, -3.0) == doctest::Approx(1.00855).epsilon(1e-5));

  std::mt19937_64 rng(2);
  std::vector<Pose> a, b;
  for (int i = 0; i < 5; ++i) {
    a.push_back(testing::random_pose(rng));
    b.push_back(testing::random_pose(rng));
  }
  auto a2 = a;
  auto b2 = b;
  a2.insert(a2.end(), a.begin(), a.end());
  b2.insert(b2.end(), b.begin(), b.end());
  CHECK(loss_single_value(a2, b2, 0.2, -1.0) == doctest::Approx(2.0 * loss_single_value(a, b, 0.2, -1.0)));
  Tape tape;
  CHECK_THROWS_AS(loss_single(rows_on(tape, a), {}, tape.constant(Tensor::scalar(0)), tape.constant(Tensor::scalar(0))),
                  DimensionError);
}

TEST_CASE("tuple loss counts 3 absolute and 6 relative terms for s = 3") {
  std::mt19937_64 rng(3);
  std::vector<Pose> gt;
  for (int i = 0; i < 3; ++i) gt.push_back(testing::random_pose(rng));
  CHECK(tuple_pairs(3, 3).size() == 6);
  CHECK(loss_frame_value(gt, gt, 3, 0.0, -3.0) == doctest::Approx(-27.0).epsilon(1e-15));
  Tape tape;
  const auto loss = loss_frame(rows_on(tape, gt), gt, 3, tape.variable(Tensor::scalar(0.0)),
                               tape.variable(Tensor::scalar(-3.0)));
  CHECK(loss.value().item() == doctest::Approx(-27.0).epsilon(1e-15));
  std::size_t terms = 0;
  testing::enumerate_tuple_loss(gt, gt, 3, 0.0, -3.0, &terms);
  CHECK(terms == 9);
}

TEST_CASE("tuple loss matches explicit pair enumeration") {
  std::mt19937_64 rng(4);
  for (std::size_t s : {2u, 3u, 4u}) {
    std::vector<Pose> pred, gt;
    for (std::size_t i = 0; i < 2 * s; ++i) {
      pred.push_back(testing::random_pose(rng));
      gt.push_back(testing::random_pose(rng));
    }
    const double oracle = testing::enumerate_tuple_loss(pred, gt, s, 0.4, -2.0);
    CHECK(loss_frame_value(pred, gt, s, 0.4, -2.0) == doctest::Approx(oracle).epsilon(1e-13));
    Tape tape;
    const auto loss = loss_frame(rows_on(tape, pred), gt, s, tape.variable(Tensor::scalar(0.4)),
                                 tape.variable(Tensor::scalar(-2.0)));
    CHECK(loss.value().item() == doctest::Approx(oracle).epsilon(1e-13));
  }
  CHECK_THROWS_AS(tuple_pairs(4, 1), ConfigError);
  CHECK_THROWS_AS(tuple_pairs(5, 2), DimensionError);
}

TEST_CASE("tuple loss with s = 2 adds exactly the two ordered pair terms") {
  std::mt19937_64 rng(5);
  const std::vector<Pose> pred{testing::random_pose(rng), testing::random_pose(rng)};
  const std::vector<Pose> gt{testing::random_pose(rng), testing::random_pose(rng)};
  const double beta = 0.1, gamma = -2.5;
  const double expected = loss_single_value(pred, gt, beta, gamma) +
                          geometry::pose_distance(geometry::relative_pose(pred[0], pred[1]),
                                                  geometry::relative_pose(gt[0], gt[1]), beta, gamma) +
                          geometry::pose_distance(geometry::relative_pose(pred[1], pred[0]),
                                                  geometry::relative_pose(gt[1], gt[0]), beta, gamma);
  CHECK(loss_frame_value(pred, gt, 2, beta, gamma) == expected);
}

TEST_CASE("a rigid offset leaves the relative terms unchanged") {
  std::mt19937_64 rng(6);
  std::vector<Pose> gt, shifted;
  for (int i = 0; i < 3; ++i) gt.push_back(testing::random_pose(rng));
  for (auto p : gt) {
    p.t += geometry::Vec3(0.5, -1.0, 2.0);
    shifted.push_back(p);
  }
  const double relative = loss_frame_value(shifted, gt, 3, 0.0, -3.0) - loss_single_value(shifted, gt, 0.0, -3.0);
  CHECK(relative == doctest::Approx(6 * -3.0).epsilon(1e-12));
}

TEST_CASE("loss gradient in beta at perfect prediction is N") {
  std::mt19937_64 rng(7);
  std::vector<Pose> gt;
  for (int i = 0; i < 6; ++i) gt.push_back(testing::random_pose(rng));
  Tape tape;
  auto beta = tape.variable(Tensor::scalar(0.0));
  auto gamma = tape.variable(Tensor::scalar(-3.0));
  tape.backward(loss_single(rows_on(tape, gt), gt, beta, gamma));
  CHECK(beta.grad().item() == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(gamma.grad().item() == doctest::Approx(6.0).epsilon(1e-15));
  const double h = 1e-6;
  const double fd = (loss_single_value(gt, gt, h, -3.0) - loss_single_value(gt, gt, -h, -3.0)) / (2 * h);
  CHECK(fd == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("median and mean agree with sort-based order statistics") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + trial % 17);
    for (auto& x : v) x = u(rng);
    CHECK(median(v) == testing::sorted_median(v));
    CHECK(mean(v) == doctest::Approx(testing::plain_mean(v)).epsilon(1e-14));
    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(mean(shuffled) == mean(v));
  }
  CHECK_THROWS_AS(median({}), ValidationError);
}

TEST_CASE("summarize: exact predictions and a single translation error") {
  std::mt19937_64 rng(9);
  std::vector<Pose> gt;
  for (int i = 0; i < 5; ++i) gt.push_back(testing::random_pose(rng));
  const auto zero = summarize(gt, gt);
  CHECK(zero.median_translation_m == 0.0);
  CHECK(zero.mean_rotation_deg < 1e-6);

  Pose p = gt[0];
  p.t.x() += 1.0;
  const std::vector<Pose> pred{p};
  const std::vector<Pose> truth{gt[0]};
  const auto one = summarize(pred, truth);
  CHECK(one.median_translation_m == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(one.mean_translation_m == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(one.median_rotation_deg < 1e-6);
  CHECK_THROWS_AS(summarize({}, {}), ValidationError);
}

TEST_CASE("model output shapes, determinism and config checks") {
  PoseModel model(small_model(), 3);
  std::mt19937_64 rng(10);
  const auto dets = testing::random_detections(8, 12, rng);
  auto shuffled = dets;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const Pose a = model.predict_pose({dets, {}});
  const Pose b = model.predict_pose({dets, {}});
  const Pose c = model.predict_pose({shuffled, {}});
  CHECK(a == b);
  CHECK((a.t - c.t).norm() <= 1e-9 * std::max(1.0, a.t.norm()));
  CHECK((a.r - c.r).norm() <= 1e-9 * std::max(1.0, a.r.norm()));
  CHECK(a.t.allFinite());
  CHECK(model.beta_value() == 0.0);
  CHECK(model.gamma_value() == -3.0);

  auto bad = small_model();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(model_config_from_json(model_config_to_json(small_model())) == small_model());
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"org", {{"k", -1}}}}), ConfigError);
  CHECK_THROWS_AS(parse_variant("posenet"), ConfigError);
}

TEST_CASE("layers = 0 drops the graph and feeds only the context") {
  auto c = small_model();
  c.org.layers = 0;
  PoseModel model(c, 1);
  CHECK_FALSE(model.has_graph());
  CHECK(c.head_input_dim() == c.context.dim);
  CHECK(model.parameters().find("embed.table") == nullptr);
}

TEST_CASE("gradient check passes on every parameter group") {
  const auto report = gradient_check(default_gradcheck_config());
  CHECK(report.passed);
  std::set<std::string> groups;
  for (const auto& g : report.groups) {
    CHECK(groups.insert(g.group).second);
    CHECK(g.max_relative_error <= 1e-4);
  }
  PoseModel reference(tiny_model_config(), 0);
  const auto expected = reference.parameters().groups();
  CHECK(groups == std::set<std::string>(expected.begin(), expected.end()));
  for (const char* g : {"edge1", "edge4", "fusion", "head_t", "head_r", "loss"}) CHECK(groups.count(g) == 1);
}

TEST_CASE("gradient check catches a wrong backward rule") {
  // Identity forward whose backward doubles the incoming gradient.
  auto corrupt = [](Tape& tape, const PoseOutput& out) {
    PoseOutput o = out;
    const auto id = out.t.id;
    o.t = tape.record(out.t.value(), {id}, [id](Tape& t, std::size_t self) {
      const auto g = t.grad_buffer(self).data();
      auto gi = t.grad_buffer(id).data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += 2.0 * g[i];
    });
    return o;
  };
  const auto report = gradient_check(default_gradcheck_config(), corrupt);
  CHECK_FALSE(report.passed);
  bool head_t_failed = false;
  for (const auto& g : report.groups) head_t_failed |= g.group == "head_t" && !g.passed;
  CHECK(head_t_failed);
}

TEST_CASE("frame sets keep static categories and sequence order") {
  const auto ds = small_dataset(40);
  const auto train = make_frame_set(ds, "train");
  const auto test = make_frame_set(ds, "test");
  CHECK(train.size() + test.size() == 40);
  CHECK(test.size() == 10);
  const auto allowed = ds.manifest.static_categories();
  for (const auto& dets : train.detections) {
    for (const auto& d : dets) CHECK(allowed.count(d.category) == 1);
  }
  const auto thinned = make_frame_set(ds, "train", 0.5, 3);
  std::size_t full = 0, half = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    full += train.detections[i].size();
    half += thinned.detections[i].size();
  }
  CHECK(half < full);
  CHECK(thinned.detections == make_frame_set(ds, "train", 0.5, 3).detections);
  CHECK_THROWS_AS(make_frame_set(ds, "train", 0.0), ConfigError);
  const auto tuples = frame_tuples(train, 3, 2);
  CHECK(tuples.size() == train.size() - 4);
  CHECK(tuples.front().indices == std::vector<std::size_t>{0, 2, 4});
}

TEST_CASE("learning rate drops at half the epochs") {
  TrainConfig c;
  c.epochs = 100;
  CHECK(learning_rate_at(c, 0) == 1e-3);
  CHECK(learning_rate_at(c, 49) == 1e-3);
  CHECK(learning_rate_at(c, 50) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(train_config_from_json(train_config_to_json(c)) == c);
  c.tuple_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("two epochs on eight frames: log, checkpoint and reload") {
  const auto ds = small_dataset(11, 2);
  const auto frames = make_frame_set(ds, "train");
  REQUIRE(frames.size() == 8);
  const auto dir = scratch_dir("train_smoke");
  PoseModel model(small_model(), 5);
  TrainerState state;
  TrainConfig config;
  config.epochs = 2;
  config.batch_size = 4;
  config.seed = 5;
  std::ostringstream log;
  const auto records = train(model, state, frames, config, {dir, &log});
  CHECK(records.size() == 2);
  CHECK(state.epoch == 2);
  std::istringstream lines(log.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch") == ++count);
    for (const char* key : {"loss", "beta", "gamma", "lr"}) CHECK(j.contains(key));
  }
  CHECK(count == 2);

  const auto loaded = load_checkpoint(dir / kCheckpointFile);
  CHECK(loaded.state.epoch == 2);
  CHECK(loaded.train == config);
  CHECK(loaded.model->config() == model.config());
  const auto test = make_frame_set(ds, "test");
  const auto before = evaluate(model, test);
  const auto after = evaluate(*loaded.model, test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(before.trajectory[i].prediction == after.trajectory[i].prediction);
  }
  CHECK(loaded.model->beta_value() == model.beta_value());
  for (const auto& [name, m] : state.adam.state()) {
    CHECK(loaded.state.adam.find(name)->step == m.step);
    CHECK(testing::max_abs_diff(loaded.state.adam.find(name)->second, m.second) == 0.0);
  }

  // Saving the reloaded model reproduces the file byte for byte.
  save_checkpoint(dir / "again.json", *loaded.model, loaded.state, loaded.train);
  std::ifstream f1(dir / kCheckpointFile), f2(dir / "again.json");
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
}

TEST_CASE("zero learning rate leaves every trainable parameter unchanged") {
  const auto ds = small_dataset(11, 3);
  const auto frames = make_frame_set(ds, "train");
  PoseModel model(small_model(), 6);
  std::vector<Tensor> before;
  for (auto* p : model.parameters().trainable()) before.push_back(p->value);
  TrainerState state;
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 4;
  config.learning_rate = 0.0;
  train(model, state, frames, config);
  const auto after = model.parameters().trainable();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(testing::max_abs_diff(before[i], after[i]->value) == 0.0);
}

TEST_CASE("resumed training matches an uninterrupted run") {
  const auto ds = small_dataset(30, 4);
  const auto frames = make_frame_set(ds, "train");
  TrainConfig config;
  config.epochs = 4;
  config.batch_size = 8;
  config.seed = 9;
  config.checkpoint_every = 2;

  PoseModel straight(small_model(), 9);
  TrainerState s1;
  train(straight, s1, frames, config);

  const auto dir = scratch_dir("resume");
  auto partial_config = config;
  partial_config.epochs = 2;
  {
    PoseModel first(small_model(), 9);
    TrainerState s2;
    // Same schedule as the full run: the drop happens at epochs/2 of the full run.
    partial_config.lr_drop_factor = 1.0;
    train(first, s2, frames, partial_config, {dir, nullptr});
  }
  auto resumed = load_checkpoint(dir / kCheckpointFile);
  CHECK(resumed.state.epoch == 2);
  const auto records = train(*resumed.model, resumed.state, frames, config);
  REQUIRE(records.size() == 2);
  CHECK(records.front().epoch == 3);
  const auto a = straight.parameters().trainable();
  const auto b = resumed.model->parameters().trainable();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(testing::max_abs_diff(a[i]->value, b[i]->value) == 0.0);
}

TEST_CASE("tuple variant trains on stride-1 tuples") {
  const auto ds = small_dataset(30, 5);
  const auto frames = make_frame_set(ds, "train");
  auto mc = small_model();
  mc.variant = Variant::kMapNet;
  PoseModel model(mc, 1);
  TrainerState state;
  TrainConfig config;
  config.epochs = 1;
  config.batch_size = 4;
  config.frame_gap = 3;
  const auto records = train(model, state, frames, config);
  CHECK(records.size() == 1);
  CHECK(std::isfinite(records.front().loss));
  config.frame_gap = 50;
  CHECK_THROWS_AS(train(model, state, frames, config), ValidationError);
}

TEST_CASE("non-finite loss aborts with a diagnostic checkpoint") {
  const auto ds = small_dataset(11, 6);
  const auto frames = make_frame_set(ds, "train");
  PoseModel model(small_model(), 2);
  model.parameters().at("loss.beta").value[0] = -1e308;
  const auto dir = scratch_dir("diag");
  TrainerState state;
  TrainConfig config;
  config.epochs = 1;
  CHECK_THROWS_AS(train(model, state, frames, config, {dir, nullptr}), NumericalError);
  CHECK(std::filesystem::exists(dir / kDiagnosticFile));
}

TEST_CASE("checkpoint errors") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/checkpoint.json"), MissingInputError);
  const auto dir = scratch_dir("ckpt_err");
  std::ofstream(dir / "junk.json") << "{not json";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.json"), ParseError);

  PoseModel model(small_model(), 1);
  save_checkpoint(dir / "ok.json", model, {}, {});
  auto j = nlohmann::json::parse(std::ifstream(dir / "ok.json"));
  j["parameters"]["head_t.weight"]["shape"] = {3, 3};
  std::ofstream(dir / "bad_shape.json") << j.dump();
  CHECK_THROWS_AS(load_checkpoint(dir / "bad_shape.json"), CheckpointMismatchError);

  auto other = small_model();
  other.org.k = 3;
  CHECK_THROWS_AS(require_compatible(other, small_model()), CheckpointMismatchError);
  CHECK_NOTHROW(require_compatible(small_model(), small_model()));
}

TEST_CASE("trajectory CSV has one row per frame") {
  const auto ds = small_dataset(20, 7);
  const auto test = make_frame_set(ds, "test");
  PoseModel model(small_model(), 1);
  const auto result = evaluate(model, test);
  const auto dir = scratch_dir("csv");
  write_trajectory_csv(dir / "t.csv", result.trajectory);
  std::ifstream in(dir / "t.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "frame_id,gt_tx,gt_ty,gt_tz,gt_rx,gt_ry,gt_rz,pred_tx,pred_ty,pred_tz,pred_rx,pred_ry,pred_rz,t_err_m,r_err_deg");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == test.size());
  CHECK_THROWS_AS(evaluate(model, FrameSet{}), ValidationError);
}
