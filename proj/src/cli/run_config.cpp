#include "orgpose/cli/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "orgpose/error.hpp"

namespace orgpose::cli {

using nlohmann::json;

std::vector<AblationVariant> default_ablation_grid() {
  std::vector<AblationVariant> grid;
  for (int layers = 0; layers <= 4; ++layers) {
    grid.push_back({"GNN Layers", std::to_string(layers), {{"org", {{"layers", layers}}}}, 1.0});
  }
  for (int k : {3, 5}) grid.push_back({"KNN Neighbors", "k=" + std::to_string(k), {{"org", {{"k", k}}}}, 1.0});
  for (const char* a : {"max", "sum"}) grid.push_back({"Aggregate Mode", a, {{"org", {{"aggregate", a}}}}, 1.0});
  for (const char* u : {"dynamic", "static"}) {
    grid.push_back({"Update Mode", u, {{"org", {{"edge_update", u}}}}, 1.0});
  }
  for (const char* r : {"0.2", "0.6", "0.8", "1.0"}) {
    grid.push_back({"Keep Ratio", r, json::object(), std::stod(r)});
  }
  return grid;
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
  gradcheck.seed = value;
}

void RunConfig::validate() const {
  synth.validate();
  model.validate();
  train.validate();
  gradcheck.validate();
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("eval.keep_ratio", "must lie in (0, 1]");
  if (split.empty()) throw ConfigError("eval.split", "must not be empty");
  if (ablation.seeds.empty()) throw ConfigError("ablation.seeds", "must list at least one seed");
  for (const auto& v : ablation.variants) {
    if (!(v.keep_ratio > 0.0 && v.keep_ratio <= 1.0)) {
      throw ConfigError("ablation.variants.keep_ratio", "must lie in (0, 1] (variant '" + v.label + "')");
    }
  }
}

namespace {

template <typename T>
T get_field(const json& j, const char* key, const std::string& field, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (j.at(key).is_number_integer() && j.at(key).get<long long>() < 0) {
        throw ConfigError(field, "must be non-negative");
      }
    }
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

AblationConfig ablation_from_json(const json& j) {
  AblationConfig c;
  if (!j.is_object()) throw ConfigError("ablation", "expected an object");
  if (j.contains("seeds")) c.seeds = get_field(j, "seeds", "ablation.seeds", c.seeds);
  if (j.contains("variants")) {
    if (!j.at("variants").is_array()) throw ConfigError("ablation.variants", "expected an array");
    c.variants.clear();
    for (const auto& v : j.at("variants")) {
      AblationVariant a;
      a.group = get_field<std::string>(v, "group", "ablation.variants.group", "");
      a.label = get_field<std::string>(v, "label", "ablation.variants.label", "");
      if (v.contains("model")) a.model_patch = v.at("model");
      a.keep_ratio = get_field(v, "keep_ratio", "ablation.variants.keep_ratio", 1.0);
      c.variants.push_back(std::move(a));
    }
  }
  return c;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  static const std::set<std::string> known{"seed", "dataset", "synth", "model", "train", "eval", "gradcheck", "ablation"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(key, "unknown configuration section");
  }

  RunConfig c;
  if (j.contains("dataset")) {
    std::filesystem::path p = get_field<std::string>(j, "dataset", "dataset", "");
    c.dataset = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  if (j.contains("synth")) c.synth = synth::synth_config_from_json(j.at("synth"));
  if (j.contains("model")) {
    c.model = model::model_config_from_json(j.at("model"));
    c.model_given = true;
  }
  if (j.contains("train")) c.train = model::train_config_from_json(j.at("train"));
  if (!(j.contains("train") && j.at("train").contains("batch_size"))) {
    // Frames per batch for the single-frame variant, tuples for the tuple variant.
    c.train.batch_size = c.model.variant == model::Variant::kMapNet ? 20 : 64;
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (!e.is_object()) throw ConfigError("eval", "expected an object");
    c.keep_ratio = get_field(e, "keep_ratio", "eval.keep_ratio", c.keep_ratio);
    c.split = get_field(e, "split", "eval.split", c.split);
  }
  if (j.contains("gradcheck")) c.gradcheck = model::gradcheck_config_from_json(j.at("gradcheck"));
  if (j.contains("ablation")) c.ablation = ablation_from_json(j.at("ablation"));
  c.set_seed(get_field<std::uint64_t>(j, "seed", "seed", c.train.seed));
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("config file not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config", path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

}  // namespace orgpose::cli
