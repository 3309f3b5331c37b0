// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. The training criteria run at full scale and
// take a long time; pass --only 1,2,3 to run a subset.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "../support.hpp"
#include "orgpose/cli/commands.hpp"
#include "orgpose/model/evaluate.hpp"
#include "orgpose/model/gradcheck.hpp"
#include "orgpose/model/loss.hpp"
#include "orgpose/model/train.hpp"
#include "orgpose/numerics/memory.hpp"
#include "orgpose/org/org.hpp"
#include "orgpose/synth/synth.hpp"

using namespace orgpose;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradcheckSeconds = 60.0;
constexpr double kOracleTolerance = 1e-10;  // relative, for floating-point agreement with loop oracles
constexpr double kPermutationTolerance = 1e-9;
constexpr double kIdentityTolerance = 1e-12;
constexpr double kTranslationFractionOfDiagonal = 0.05;
constexpr double kRotationDegrees = 10.0;
constexpr double kSecondsPerSeed = 15.0 * 60.0;
constexpr std::size_t kMapNetWinsRequired = 2;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};
constexpr std::uint64_t kDatasetSeed = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double relative_deviation(const nn::Tensor& a, const nn::Tensor& b) {
  return testing::max_abs_diff(a, b) / std::max(testing::max_abs(a), 1e-300);
}

// ---- 1: gradient correctness ----
Outcome gradient_correctness() {
  const auto start = Clock::now();
  auto config = model::default_gradcheck_config();
  config.tolerance = kGradTolerance;
  const auto report = model::gradient_check(config);
  const double seconds = seconds_since(start);
  double worst = 0.0;
  std::string worst_group;
  for (const auto& g : report.groups) {
    if (g.max_relative_error >= worst) {
      worst = g.max_relative_error;
      worst_group = g.group;
    }
  }
  const std::set<std::string> required{"edge1", "edge2", "edge3", "edge4", "fusion", "head_t", "head_r", "loss"};
  std::size_t covered = 0;
  for (const auto& g : report.groups) covered += required.count(g.group);
  return {report.passed && covered == required.size() && seconds < kGradcheckSeconds,
          std::to_string(report.groups.size()) + " groups, worst " + fmt(worst) + " (" + worst_group + "), " +
              fmt(seconds, 3) + " s"};
}

// ---- 2: oracle equivalence ----
Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  std::size_t knn_mismatch = 0;
  {
    std::uniform_int_distribution<std::size_t> n(1, 20), d(1, 16), k(1, 8);
    for (int i = 0; i < 200; ++i) {
      const auto x = testing::random_tensor(n(rng), d(rng), rng);
      const auto kk = k(rng);
      if (org::knn_edges(x, kk).neighbors != testing::brute_force_knn(x, kk)) ++knn_mismatch;
    }
  }
  std::size_t gnn_mismatch = 0;
  {
    std::uniform_int_distribution<std::size_t> n(2, 20), d(1, 16), k(1, 8), o(1, 12);
    for (int i = 0; i < 100; ++i) {
      const auto nn_ = n(rng), dd = d(rng), kk = k(rng), out = o(rng);
      const auto x = testing::random_tensor(nn_, dd, rng);
      const auto w = testing::random_tensor(2 * dd, out, rng);
      const nn::Tensor b({out}, testing::random_tensor(1, out, rng).values());
      const std::vector<std::size_t> offsets{0, nn_};
      const auto edges = org::build_knn_edges(x, offsets, kk);
      const auto neighbors = testing::brute_force_knn(x, kk);
      const bool use_max = i % 2 == 0;
      nn::Tape tape;
      auto fn = [&](nn::Tape& t, nn::Var rows) { return nn::relu(nn::affine(rows, t.constant(w), t.constant(b))); };
      const auto got =
          org::gnn_layer(tape, tape.constant(x), edges, fn, use_max ? org::Aggregate::kMax : org::Aggregate::kSum)
              .value();
      const auto expected = testing::enumerate_gnn_layer(x, neighbors, w, b, use_max);
      for (std::size_t e = 0; e < got.size(); ++e) {
        if (std::abs(got[e] - expected[e]) > kOracleTolerance * (1.0 + std::abs(expected[e]))) {
          ++gnn_mismatch;
          break;
        }
      }
    }
  }
  std::size_t metric_mismatch = 0;
  {
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int i = 0; i < 100; ++i) {
      std::vector<geometry::Pose> pred, gt;
      for (int f = 0; f < 1 + i % 23; ++f) {
        pred.push_back(testing::random_pose(rng));
        gt.push_back(testing::random_pose(rng));
      }
      const auto m = model::summarize(pred, gt);
      std::vector<double> te, re;
      for (std::size_t f = 0; f < gt.size(); ++f) {
        te.push_back((pred[f].t - gt[f].t).norm());
        re.push_back(geometry::rotation_error_deg(pred[f].r, gt[f].r));
      }
      const auto close = [](double a, double b) { return std::abs(a - b) <= kOracleTolerance * (1.0 + std::abs(b)); };
      if (!close(m.median_translation_m, testing::sorted_median(te)) ||
          !close(m.mean_translation_m, testing::plain_mean(te)) ||
          !close(m.median_rotation_deg, testing::sorted_median(re)) ||
          !close(m.mean_rotation_deg, testing::plain_mean(re))) {
        ++metric_mismatch;
      }
    }
  }
  return {knn_mismatch == 0 && gnn_mismatch == 0 && metric_mismatch == 0,
          "knn " + std::to_string(knn_mismatch) + "/200, gnn_layer " + std::to_string(gnn_mismatch) +
              "/100, metrics " + std::to_string(metric_mismatch) + "/100 mismatches"};
}

// ---- 3: permutation invariance ----
Outcome permutation_invariance() {
  model::PoseModel pose_model(model::ModelConfig{}, 3);
  std::mt19937_64 rng(77);
  double worst_xg = 0.0;
  double worst_pose = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto dets = testing::random_detections(2 + static_cast<std::size_t>(i % 25), 12, rng);
    auto perm = dets;
    std::shuffle(perm.begin(), perm.end(), rng);
    const org::FrameInput a[] = {{dets, {}}};
    const org::FrameInput b[] = {{perm, {}}};
    nn::Tape tape;
    const auto oa = pose_model.forward(tape, a, {});
    const auto ob = pose_model.forward(tape, b, {});
    worst_xg = std::max(worst_xg, relative_deviation(oa.xg->value(), ob.xg->value()));
    const auto pose_a = nn::Tensor({1, 6}, {oa.t.value()[0], oa.t.value()[1], oa.t.value()[2], oa.r.value()[0],
                                            oa.r.value()[1], oa.r.value()[2]});
    const auto pose_b = nn::Tensor({1, 6}, {ob.t.value()[0], ob.t.value()[1], ob.t.value()[2], ob.r.value()[0],
                                            ob.r.value()[1], ob.r.value()[2]});
    worst_pose = std::max(worst_pose, relative_deviation(pose_a, pose_b));
  }
  return {worst_xg <= kPermutationTolerance && worst_pose <= kPermutationTolerance,
          "max relative deviation x_g " + fmt(worst_xg) + ", pose " + fmt(worst_pose)};
}

// ---- 4: loss identities ----
Outcome loss_identities() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto p = testing::random_pose(rng);
    worst = std::max(worst, std::abs(geometry::pose_distance(p, p, 0.0, -3.0) - (0.0 + -3.0)));
  }
  std::vector<geometry::Pose> gt, pred;
  for (int i = 0; i < 3; ++i) {
    gt.push_back(testing::random_pose(rng));
    pred.push_back(testing::random_pose(rng));
  }
  std::size_t oracle_terms = 0;
  const double oracle = testing::enumerate_tuple_loss(pred, gt, 3, 0.0, -3.0, &oracle_terms);
  const double value = model::loss_frame_value(pred, gt, 3, 0.0, -3.0);
  const std::size_t pairs = model::tuple_pairs(3, 3).size();
  // At a perfect prediction every term contributes exactly beta + gamma.
  const double perfect = model::loss_frame_value(gt, gt, 3, 0.0, -3.0);
  nn::Tape tape;
  const model::PoseRows rows{tape.variable(model::translation_rows(pred)), tape.variable(model::rotation_rows(pred))};
  const double taped = model::loss_frame(rows, gt, 3, tape.constant(nn::Tensor::scalar(0.0)),
                                         tape.constant(nn::Tensor::scalar(-3.0)))
                           .value()
                           .item();
  const bool ok = worst <= kIdentityTolerance && pairs == 6 && oracle_terms == 9 &&
                  std::abs(perfect - 9 * -3.0) <= kIdentityTolerance &&
                  std::abs(value - oracle) <= kOracleTolerance * std::abs(oracle) &&
                  std::abs(taped - oracle) <= kOracleTolerance * std::abs(oracle);
  return {ok, "d(p,p) deviation " + fmt(worst) + ", terms 3 + " + std::to_string(pairs) + ", perfect-tuple loss " +
                  fmt(perfect, 6) + ", oracle gap " + fmt(std::abs(value - oracle))};
}

// ---- 5-8: training runs ----

struct TrainedRun {
  std::unique_ptr<model::PoseModel> model;
  model::TrainerState state;
  model::TrainConfig train;
  model::EvalMetrics metrics;
  double seconds = 0.0;
};

class Runs {
 public:
  explicit Runs(std::filesystem::path work) : work_(std::move(work)) {
    std::filesystem::create_directories(work_);
    synth::SynthConfig config;  // 20 static objects, 2000 train + 200 held-out frames
    dataset_ = synth::generate_dataset(config, kDatasetSeed);
    train_ = model::make_frame_set(dataset_, "train");
    test_ = model::make_frame_set(dataset_, "test");
    geometry::Vec3 lo = geometry::Vec3::Constant(INFINITY);
    geometry::Vec3 hi = -lo;
    for (const auto& f : dataset_.frames) {
      lo = lo.cwiseMin(f.t);
      hi = hi.cwiseMax(f.t);
    }
    diagonal_ = (hi - lo).norm();
    std::cout << "  dataset: " << train_.size() << " train, " << test_.size() << " test frames, trajectory diagonal "
              << fmt(diagonal_) << " m\n"
              << std::flush;
  }

  const data::Dataset& dataset() const { return dataset_; }
  const model::FrameSet& test() const { return test_; }
  double diagonal() const { return diagonal_; }

  TrainedRun& get(model::Variant variant, std::uint64_t seed) {
    const auto key = std::make_pair(variant, seed);
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    return runs_[key] = train_run(variant, seed, "");
  }

  TrainedRun train_run(model::Variant variant, std::uint64_t seed, const std::string& tag) {
    const auto run_config = cli::run_config_from_json({{"seed", seed}, {"model", {{"variant", model::to_string(variant)}}}});
    TrainedRun run;
    run.train = run_config.train;
    const auto start = Clock::now();
    run.model = std::make_unique<model::PoseModel>(run_config.model, seed);
    const auto name = std::string(model::to_string(variant)) + "_seed" + std::to_string(seed) + tag;
    std::ofstream log(work_ / (name + ".jsonl"));
    model::train(*run.model, run.state, train_, run.train, {{}, &log});
    run.metrics = model::evaluate(*run.model, test_).metrics;
    run.seconds = seconds_since(start);
    std::cout << "  " << name << ": median " << fmt(run.metrics.median_translation_m) << " m / "
              << fmt(run.metrics.median_rotation_deg) << " deg, mean " << fmt(run.metrics.mean_translation_m)
              << " m / " << fmt(run.metrics.mean_rotation_deg) << " deg, " << fmt(run.seconds, 4) << " s\n"
              << std::flush;
    return run;
  }

  const std::filesystem::path& work() const { return work_; }

 private:
  std::filesystem::path work_;
  data::Dataset dataset_;
  model::FrameSet train_;
  model::FrameSet test_;
  double diagonal_ = 0.0;
  std::map<std::pair<model::Variant, std::uint64_t>, TrainedRun> runs_;
};

Outcome synthetic_convergence(Runs& runs) {
  const double t_limit = kTranslationFractionOfDiagonal * runs.diagonal();
  bool ok = true;
  std::string detail = "limits " + fmt(t_limit) + " m / " + fmt(kRotationDegrees) + " deg / " +
                       fmt(kSecondsPerSeed) + " s;";
  for (auto seed : kSeeds) {
    const auto& run = runs.get(model::Variant::kPoseNet, seed);
    const bool seed_ok = run.metrics.median_translation_m <= t_limit &&
                         run.metrics.median_rotation_deg <= kRotationDegrees && run.seconds < kSecondsPerSeed;
    ok = ok && seed_ok;
    detail += " seed " + std::to_string(seed) + ": " + fmt(run.metrics.median_translation_m) + " m, " +
              fmt(run.metrics.median_rotation_deg) + " deg, " + fmt(run.seconds, 4) + " s;";
  }
  return {ok, detail};
}

Outcome relative_loss_benefit(Runs& runs) {
  std::size_t wins = 0;
  std::string detail;
  for (auto seed : kSeeds) {
    const double pose = runs.get(model::Variant::kPoseNet, seed).metrics.median_translation_m;
    const double map = runs.get(model::Variant::kMapNet, seed).metrics.median_translation_m;
    wins += map <= pose ? 1 : 0;
    detail += " seed " + std::to_string(seed) + ": mapnet " + fmt(map) + " vs posenet " + fmt(pose) + ";";
  }
  return {wins >= kMapNetWinsRequired, std::to_string(wins) + "/3 seeds;" + detail};
}

Outcome keep_ratio_robustness(Runs& runs) {
  double at_02 = 0.0;
  double at_06 = 0.0;
  for (auto seed : kSeeds) {
    const auto& run = runs.get(model::Variant::kPoseNet, seed);
    at_02 += model::evaluate(*run.model, model::make_frame_set(runs.dataset(), "test", 0.2, seed))
                 .metrics.median_translation_m;
    at_06 += model::evaluate(*run.model, model::make_frame_set(runs.dataset(), "test", 0.6, seed))
                 .metrics.median_translation_m;
  }
  at_02 /= static_cast<double>(kSeeds.size());
  at_06 /= static_cast<double>(kSeeds.size());

  // The full grid, trained at reduced scale: 400 training frames, 20 epochs.
  synth::SynthConfig small;
  small.trajectory.frames = 440;
  const auto dataset = synth::generate_dataset(small, kDatasetSeed);
  auto config = cli::run_config_from_json({{"train", {{"epochs", 20}}}});
  config.ablation.seeds = kSeeds;
  std::ostringstream log;
  const auto start = Clock::now();
  const auto rows = cli::run_ablation(config, dataset, runs.work() / "ablation", log);
  cli::write_ablation_csv(runs.work() / "ablation.csv", rows);
  std::ofstream(runs.work() / "ablation.txt") << cli::ablation_table(rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  const std::size_t expected_rows = cli::default_ablation_grid().size() * kSeeds.size();

  return {at_06 <= at_02 && rows.size() == expected_rows && failed == 0,
          "mean median error keep 0.6 " + fmt(at_06) + " m vs keep 0.2 " + fmt(at_02) + " m; grid " +
              std::to_string(rows.size()) + "/" + std::to_string(expected_rows) + " rows, " + std::to_string(failed) +
              " failed, " + fmt(seconds_since(start), 4) + " s"};
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome reproducibility(Runs& runs) {
  auto& first = runs.get(model::Variant::kPoseNet, kSeeds.front());
  auto second = runs.train_run(model::Variant::kPoseNet, kSeeds.front(), "_repeat");
  const auto a = runs.work() / "repro_a.json";
  const auto b = runs.work() / "repro_b.json";
  model::save_checkpoint(a, *first.model, first.state, first.train);
  model::save_checkpoint(b, *second.model, second.state, second.train);
  const bool same_checkpoint = file_bytes(a) == file_bytes(b);
  const auto ma = model::eval_metrics_to_json(first.metrics).dump();
  const auto mb = model::eval_metrics_to_json(second.metrics).dump();
  const auto ta = model::evaluate(*first.model, runs.test()).trajectory;
  const auto tb = model::evaluate(*second.model, runs.test()).trajectory;
  bool same_trajectory = ta.size() == tb.size();
  for (std::size_t i = 0; same_trajectory && i < ta.size(); ++i) {
    same_trajectory = ta[i].prediction == tb[i].prediction;
  }
  std::filesystem::remove(a);
  std::filesystem::remove(b);
  return {same_checkpoint && ma == mb && same_trajectory,
          std::string("checkpoint bytes ") + (same_checkpoint ? "identical" : "differ") + ", metrics " +
              (ma == mb ? "identical" : "differ") + ", predictions " + (same_trajectory ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  nn::configure_allocator();
  std::set<int> only;
  std::filesystem::path work = std::filesystem::temp_directory_path() / "orgpose_acceptance";
  std::filesystem::path report_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
    } else if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (arg == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--work DIR] [--report FILE]\n";
      return 2;
    }
  }
  auto selected = [&](int c) { return only.empty() || only.count(c) > 0; };

  std::unique_ptr<Runs> runs;
  auto training = [&]() -> Runs& {
    if (!runs) runs = std::make_unique<Runs>(work);
    return *runs;
  };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_correctness},
      {2, oracle_equivalence},
      {3, permutation_invariance},
      {4, loss_identities},
      {5, [&] { return synthetic_convergence(training()); }},
      {6, [&] { return relative_loss_benefit(training()); }},
      {7, [&] { return keep_ratio_robustness(training()); }},
      {8, [&] { return reproducibility(training()); }},
  };
  bool all = true;
  std::ostringstream report;
  for (const auto& [id, check] : criteria) {
    if (!selected(id)) continue;
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    all = all && outcome.pass;
    const std::string line =
        "criterion " + std::to_string(id) + ": " + (outcome.pass ? "PASS" : "FAIL") + " - " + outcome.detail + "\n";
    std::cout << line << std::flush;
    report << line;
  }
  if (!report_path.empty()) std::ofstream(report_path) << report.str();
  return all ? 0 : 1;
}
