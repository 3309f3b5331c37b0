#include "orgpose/dataio/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>

#include "orgpose/error.hpp"

namespace orgpose::data {

using nlohmann::json;

bool FrameRecord::operator==(const FrameRecord& other) const {
  return frame_id == other.frame_id && sequence == other.sequence && t == other.t &&
         q.coeffs() == other.q.coeffs() && detections == other.detections;
}

int DatasetManifest::category_count() const { return static_cast<int>(categories.size()); }

std::set<int> DatasetManifest::static_categories() const {
  std::set<int> out;
  for (const auto& c : categories) {
    if (c.is_static) out.insert(c.id);
  }
  return out;
}

const std::vector<std::string>& DatasetManifest::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw ConfigError("split", "dataset has no split named '" + name + "'");
  return it->second;
}

org::ImageSize DatasetManifest::image_size() const {
  return {static_cast<double>(intrinsics.width), static_cast<double>(intrinsics.height)};
}

void DatasetManifest::validate() const {
  if (categories.empty()) throw ValidationError("manifest has no categories");
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].id != static_cast<int>(i)) {
      throw ValidationError("category ids must be 0..n-1 in order; found " + std::to_string(categories[i].id) +
                            " at position " + std::to_string(i));
    }
  }
  intrinsics.validate();
  std::set<std::string> seen;
  for (const auto& [name, seqs] : splits) {
    for (const auto& s : seqs) {
      if (!seen.insert(s).second) throw ValidationError("sequence '" + s + "' appears in more than one split");
    }
  }
}

std::vector<FrameRecord> Dataset::split_frames(const std::string& split) const {
  const auto& seqs = manifest.split(split);
  std::vector<FrameRecord> out;
  for (const auto& f : frames) {
    if (std::find(seqs.begin(), seqs.end(), f.sequence) != seqs.end()) out.push_back(f);
  }
  return out;
}

std::map<std::string, std::vector<FrameRecord>> Dataset::split_sequences(const std::string& split) const {
  std::map<std::string, std::vector<FrameRecord>> out;
  for (auto& f : split_frames(split)) out[f.sequence].push_back(std::move(f));
  return out;
}

json frame_to_json(const FrameRecord& frame) {
  json dets = json::array();
  for (const auto& d : frame.detections) {
    dets.push_back({{"x", d.x}, {"y", d.y}, {"w", d.w}, {"h", d.h}, {"c", d.category}, {"conf", d.confidence}});
  }
  return {{"frame_id", frame.frame_id},
          {"seq", frame.sequence},
          {"t", {frame.t.x(), frame.t.y(), frame.t.z()}},
          {"q", {frame.q.w(), frame.q.x(), frame.q.y(), frame.q.z()}},
          {"detections", std::move(dets)}};
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& path, std::size_t line) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(path, line, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(path, line, std::string("field '") + key + "': " + e.what());
  }
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* key, const std::string& path, std::size_t line) {
  auto v = field<std::vector<double>>(j, key, path, line);
  if (v.size() != N) {
    throw ParseError(path, line, std::string("field '") + key + "' needs " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace

FrameRecord frame_from_json(const json& j, const std::string& path, std::size_t line) {
  FrameRecord f;
  f.frame_id = field<std::int64_t>(j, "frame_id", path, line);
  f.sequence = field<std::string>(j, "seq", path, line);
  const auto t = fixed_array<3>(j, "t", path, line);
  f.t = geometry::Vec3(t[0], t[1], t[2]);
  const auto q = fixed_array<4>(j, "q", path, line);
  f.q = geometry::Quat(q[0], q[1], q[2], q[3]);
  if (!j.contains("detections") || !j.at("detections").is_array()) {
    throw ParseError(path, line, "missing field 'detections'");
  }
  for (const auto& d : j.at("detections")) {
    org::Detection det;
    det.x = field<double>(d, "x", path, line);
    det.y = field<double>(d, "y", path, line);
    det.w = field<double>(d, "w", path, line);
    det.h = field<double>(d, "h", path, line);
    det.category = field<int>(d, "c", path, line);
    det.confidence = d.contains("conf") ? field<double>(d, "conf", path, line) : 1.0;
    f.detections.push_back(det);
  }
  return f;
}

json manifest_to_json(const DatasetManifest& m) {
  json cats = json::array();
  for (const auto& c : m.categories) cats.push_back({{"id", c.id}, {"name", c.name}, {"static", c.is_static}});
  json splits = json::object();
  for (const auto& [name, seqs] : m.splits) splits[name] = seqs;
  return {{"categories", std::move(cats)},
          {"intrinsics",
           {{"fx", m.intrinsics.fx},
            {"fy", m.intrinsics.fy},
            {"cx", m.intrinsics.cx},
            {"cy", m.intrinsics.cy},
            {"width", m.intrinsics.width},
            {"height", m.intrinsics.height}}},
          {"splits", std::move(splits)},
          {"meta", m.meta}};
}

DatasetManifest manifest_from_json(const json& j, const std::string& path) {
  DatasetManifest m;
  if (!j.contains("categories") || !j.at("categories").is_array()) throw ParseError(path, 0, "missing 'categories'");
  for (const auto& c : j.at("categories")) {
    m.categories.push_back(
        {field<int>(c, "id", path, 0), field<std::string>(c, "name", path, 0), field<bool>(c, "static", path, 0)});
  }
  if (!j.contains("intrinsics")) throw ParseError(path, 0, "missing 'intrinsics'");
  const auto& in = j.at("intrinsics");
  m.intrinsics.fx = field<double>(in, "fx", path, 0);
  m.intrinsics.fy = field<double>(in, "fy", path, 0);
  m.intrinsics.cx = field<double>(in, "cx", path, 0);
  m.intrinsics.cy = field<double>(in, "cy", path, 0);
  m.intrinsics.width = field<int>(in, "width", path, 0);
  m.intrinsics.height = field<int>(in, "height", path, 0);
  if (j.contains("splits")) {
    for (const auto& [name, seqs] : j.at("splits").items()) {
      try {
        m.splits[name] = seqs.get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ParseError(path, 0, "split '" + name + "': " + e.what());
      }
    }
  }
  if (j.contains("meta")) m.meta = j.at("meta");
  return m;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / kManifestFile);
    if (!out) throw Error("cannot write " + (dir / kManifestFile).string());
    out << manifest_to_json(dataset.manifest).dump(2) << '\n';
  }
  std::ofstream out(dir / kFramesFile);
  if (!out) throw Error("cannot write " + (dir / kFramesFile).string());
  for (const auto& f : dataset.frames) out << frame_to_json(f).dump() << '\n';
  if (!out) throw Error("write failed for " + (dir / kFramesFile).string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  const auto frames_path = dir / kFramesFile;
  if (!std::filesystem::exists(manifest_path)) throw MissingInputError("missing " + manifest_path.string());
  if (!std::filesystem::exists(frames_path)) throw MissingInputError("missing " + frames_path.string());

  Dataset ds;
  {
    std::ifstream in(manifest_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(manifest_path.string(), 0, e.what());
    }
    ds.manifest = manifest_from_json(j, manifest_path.string());
  }
  ds.manifest.validate();

  const int category_count = ds.manifest.category_count();
  std::map<std::string, std::int64_t> last_id;
  std::ifstream in(frames_path);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(frames_path.string(), line, e.what());
    }
    FrameRecord f = frame_from_json(j, frames_path.string(), line);
    const std::string where = frames_path.string() + ":" + std::to_string(line) + ": ";
    if (std::abs(f.q.norm() - 1.0) > 1e-6) throw ValidationError(where + "rotation quaternion is not unit");
    for (const auto& d : f.detections) {
      try {
        org::validate_detection(d, category_count);
      } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
      }
    }
    auto it = last_id.find(f.sequence);
    if (it != last_id.end() && f.frame_id <= it->second) {
      throw ValidationError(where + "frame ids must increase within sequence '" + f.sequence + "'");
    }
    last_id[f.sequence] = f.frame_id;
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

std::vector<FrameTuple> sample_tuples(std::size_t sequence_length, std::size_t tuple_size, std::size_t frame_gap) {
  if (tuple_size == 0) throw ConfigError("tuple_size", "must be positive");
  if (tuple_size > 1 && frame_gap == 0) throw ConfigError("frame_gap", "must be positive");
  const std::size_t span = (tuple_size - 1) * frame_gap;
  if (sequence_length < span + 1) {
    std::clog << "warning: sequence of " << sequence_length << " frames is too short for tuples of " << tuple_size
              << " frames spaced " << frame_gap << " apart\n";
    return {};
  }
  std::vector<FrameTuple> tuples;
  tuples.reserve(sequence_length - span);
  for (std::size_t a = 0; a + span < sequence_length; ++a) {
    FrameTuple t;
    for (std::size_t i = 0; i < tuple_size; ++i) t.indices.push_back(a + i * frame_gap);
    tuples.push_back(std::move(t));
  }
  return tuples;
}

}  // namespace orgpose::data
