#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "orgpose/cli/commands.hpp"
#include "orgpose/error.hpp"
#include "orgpose/model/frames.hpp"
#include "orgpose/model/train.hpp"

namespace orgpose::cli {

using nlohmann::json;

namespace {

model::ModelConfig patched(const model::ModelConfig& base, const json& patch) {
  auto merged = model::model_config_to_json(base);
  merged.merge_patch(patch);
  auto config = model::model_config_from_json(merged);
  config.validate();
  return config;
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& config, const data::Dataset& dataset,
                                      const std::filesystem::path& out_dir, std::ostream& log) {
  const auto& variants = config.ablation.variants;
  // Rows sharing a model configuration share one trained model per seed.
  std::vector<std::string> keys(variants.size());
  std::vector<std::string> errors(variants.size());
  std::vector<std::string> distinct;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    try {
      keys[v] = model::model_config_to_json(patched(config.model, variants[v].model_patch)).dump();
      if (std::find(distinct.begin(), distinct.end(), keys[v]) == distinct.end()) distinct.push_back(keys[v]);
    } catch (const std::exception& e) {
      errors[v] = e.what();
    }
  }

  const auto train_frames = model::make_frame_set(dataset, "train");
  std::filesystem::create_directories(out_dir / "runs");
  std::map<std::pair<std::size_t, std::uint64_t>, AblationRow> results;
  for (const auto seed : config.ablation.seeds) {
    for (std::size_t d = 0; d < distinct.size(); ++d) {
      std::string failure;
      std::unique_ptr<model::PoseModel> trained;
      const auto model_config = model::model_config_from_json(json::parse(distinct[d]));
      try {
        if (model_config.org.category_count != dataset.manifest.category_count()) {
          throw ConfigError("model.org.category_count", "does not match the dataset");
        }
        auto train = config.train;
        train.seed = seed;
        trained = std::make_unique<model::PoseModel>(model_config, seed);
        model::TrainerState state;
        std::ofstream train_log(out_dir / "runs" / ("config" + std::to_string(d) + "_seed" + std::to_string(seed) + ".jsonl"));
        model::train(*trained, state, train_frames, train, {{}, &train_log});
      } catch (const std::exception& e) {
        failure = e.what();
      }
      for (std::size_t v = 0; v < variants.size(); ++v) {
        if (keys[v] != distinct[d]) continue;
        AblationRow row{variants[v].group, variants[v].label, seed, false, {}, failure};
        if (failure.empty()) {
          try {
            const auto frames = model::make_frame_set(dataset, config.split, variants[v].keep_ratio, seed);
            row.metrics = model::evaluate(*trained, frames).metrics;
            row.ok = true;
          } catch (const std::exception& e) {
            row.message = e.what();
          }
        }
        log << "  " << row.group << " / " << row.label << " seed " << seed << ": "
            << (row.ok ? "median " + std::to_string(row.metrics.median_translation_m) + " m, " +
                             std::to_string(row.metrics.median_rotation_deg) + " deg"
                       : "failed: " + row.message)
            << "\n";
        results[{v, seed}] = std::move(row);
      }
    }
  }

  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (const auto seed : config.ablation.seeds) {
      if (!errors[v].empty()) {
        rows.push_back({variants[v].group, variants[v].label, seed, false, {}, errors[v]});
      } else {
        rows.push_back(results.at({v, seed}));
      }
    }
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "group,variant,seed,status,median_t_m,median_r_deg,mean_t_m,mean_r_deg,message\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    std::string message = r.message;
    std::replace(message.begin(), message.end(), '"', '\'');
    out << r.group << ',' << r.label << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
      out << r.metrics.median_translation_m << ',' << r.metrics.median_rotation_deg << ','
          << r.metrics.mean_translation_m << ',' << r.metrics.mean_rotation_deg;
    } else {
      out << ",,,";
    }
    out << ",\"" << message << "\"\n";
  }
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<std::array<std::string, 6>> cells{{"group", "variant", "seed", "median t (m)", "median r (deg)", "status"}};
  for (const auto& r : rows) {
    std::ostringstream t;
    std::ostringstream a;
    if (r.ok) {
      t << std::fixed << std::setprecision(4) << r.metrics.median_translation_m;
      a << std::fixed << std::setprecision(3) << r.metrics.median_rotation_deg;
    } else {
      t << "-";
      a << "-";
    }
    cells.push_back({r.group, r.label, std::to_string(r.seed), t.str(), a.str(), r.ok ? "ok" : "failed"});
  }
  std::array<std::size_t, 6> width{};
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      // Text columns left-aligned, numbers right-aligned.
      const bool numeric = c >= 2 && c <= 4;
      out << (numeric ? std::right : std::left) << std::setw(static_cast<int>(width[c])) << row[c];
      out << (c + 1 < row.size() ? "  " : "\n");
    }
  }
  return out.str();
}

}  // namespace orgpose::cli
