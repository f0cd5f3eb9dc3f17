// Copyright 2026 The Occgrounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ago/io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ago/errors.hpp"

namespace ago {

namespace {

class LeWriter {
 public:
  explicit LeWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open '" + path + "' for writing");
  }

  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(v); }
  void f64(double v) { put(v); }
  void magic(const char m[4]) { bytes(m, 4); }

  void close() {
    out_.close();
    if (!out_) throw ConfigError("write to '" + path_ + "' failed");
  }

 private:
  template <typename T>
  void put(T v) {
    static_assert(std::endian::native == std::endian::little,
                  "serialization assumes a little-endian host");
    bytes(&v, sizeof(T));
  }

  std::string path_;
  std::ofstream out_;
};

class LeReader {
 public:
  explicit LeReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ConfigError("cannot open '" + path + "' for reading");
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("'" + path_ + "' truncated", offset_ + in_.gcount());
    }
    offset_ += n;
  }

  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }

  void expect_magic(const char m[4]) {
    char buf[4];
    const std::uint64_t at = offset_;
    bytes(buf, 4);
    if (std::memcmp(buf, m, 4) != 0) {
      throw FormatError("'" + path_ + "' has wrong magic, expected " + std::string(m, 4), at);
    }
  }

  void expect_version(std::uint32_t want) {
    const std::uint64_t at = offset_;
    const std::uint32_t got = u32();
    if (got != want) {
      throw FormatError("'" + path_ + "' has unsupported version " + std::to_string(got), at);
    }
  }

  std::uint64_t offset() const { return offset_; }

  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) {
      throw FormatError("'" + path_ + "' has trailing bytes", offset_);
    }
  }

 private:
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }

  std::string path_;
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

void pose_rows(LeWriter& w, const Pose& p) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) w.f64(p.rotation(r, c));
    w.f64(p.translation[r]);
  }
}

Pose pose_rows(LeReader& r) {
  Pose p;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) p.rotation(row, col) = r.f64();
    p.translation[row] = r.f64();
  }
  return p;
}

}  // namespace

void write_grid(const SemanticVoxelGrid& grid, const std::string& path) {
  grid.validate();
  LeWriter w(path);
  w.magic("AGOV");
  w.u32(1);
  for (int a = 0; a < 3; ++a) w.u32(static_cast<std::uint32_t>(grid.spec.dims[a]));
  for (int a = 0; a < 3; ++a) w.f32(grid.spec.origin[a]);
  for (int a = 0; a < 3; ++a) w.f32(grid.spec.voxel_size[a]);
  w.u32(grid.n_cls);
  w.bytes(grid.labels.data(), grid.labels.size() * sizeof(std::uint16_t));
  w.close();
}

SemanticVoxelGrid read_grid(const std::string& path) {
  LeReader r(path);
  r.expect_magic("AGOV");
  r.expect_version(1);
  SemanticVoxelGrid grid;
  const std::uint64_t dims_at = r.offset();
  for (int a = 0; a < 3; ++a) grid.spec.dims[a] = static_cast<int>(r.u32());
  for (int a = 0; a < 3; ++a) grid.spec.origin[a] = r.f32();
  for (int a = 0; a < 3; ++a) grid.spec.voxel_size[a] = r.f32();
  grid.n_cls = r.u32();
  if (grid.spec.dims.minCoeff() < 1 ||
      grid.spec.n_voxels() > (1ull << 31)) {
    throw FormatError("'" + path + "' declares invalid dims", dims_at);
  }
  grid.labels.resize(grid.spec.n_voxels());
  r.bytes(grid.labels.data(), grid.labels.size() * sizeof(std::uint16_t));
  r.expect_eof();
  return grid;
}

void write_sweep(const LidarSweep& sweep, const std::string& path) {
  LeWriter w(path);
  w.magic("AGOP");
  w.u32(1);
  w.u64(sweep.timestamp_us);
  pose_rows(w, sweep.sensor_to_ego);
  pose_rows(w, sweep.ego_to_world);
  w.u32(static_cast<std::uint32_t>(sweep.points.rows()));
  w.bytes(sweep.points.data(), static_cast<std::size_t>(sweep.points.size()) * sizeof(float));
  w.close();
}

LidarSweep read_sweep(const std::string& path) {
  LeReader r(path);
  r.expect_magic("AGOP");
  r.expect_version(1);
  LidarSweep sweep;
  sweep.timestamp_us = r.u64();
  sweep.sensor_to_ego = pose_rows(r);
  sweep.ego_to_world = pose_rows(r);
  const std::uint32_t n = r.u32();
  sweep.points.resize(n, 3);
  r.bytes(sweep.points.data(), static_cast<std::size_t>(n) * 3 * sizeof(float));
  r.expect_eof();
  if (!sweep.points.allFinite()) {
    throw FormatError("'" + path + "' contains non-finite points", 0);
  }
  return sweep;
}

void write_embedding(const EmbeddingMap& map, const std::string& path) {
  const std::size_t want =
      static_cast<std::size_t>(map.rows) * map.cols * map.channels;
  if (map.data.size() != want) {
    throw ConfigError("embedding map data size does not match its header");
  }
  LeWriter w(path);
  w.magic("AGOE");
  w.u32(1);
  w.u32(map.rows);
  w.u32(map.cols);
  w.u32(map.channels);
  w.bytes(map.data.data(), map.data.size() * sizeof(float));
  w.close();
}

EmbeddingMap read_embedding(const std::string& path) {
  LeReader r(path);
  r.expect_magic("AGOE");
  r.expect_version(1);
  EmbeddingMap map;
  const std::uint64_t hdr_at = r.offset();
  map.rows = r.u32();
  map.cols = r.u32();
  map.channels = r.u32();
  const std::uint64_t count =
      static_cast<std::uint64_t>(map.rows) * map.cols * map.channels;
  if (count == 0 || count > (1ull << 31)) {
    throw FormatError("'" + path + "' declares invalid shape", hdr_at);
  }
  map.data.resize(count);
  r.bytes(map.data.data(), map.data.size() * sizeof(float));
  r.expect_eof();
  return map;
}

EmbeddingMap embedding_from_matrix(const MatRMf& m) {
  EmbeddingMap map;
  map.rows = static_cast<std::uint32_t>(m.rows());
  map.cols = 1;
  map.channels = static_cast<std::uint32_t>(m.cols());
  map.data.assign(m.data(), m.data() + m.size());
  return map;
}

EmbeddingMap embedding_from_matrix(const MatRMd& m) {
  return embedding_from_matrix(MatRMf(m.cast<float>()));
}

MatRMd embedding_to_matrix(const EmbeddingMap& map) {
  const auto rows = static_cast<Eigen::Index>(map.rows) * map.cols;
  MatRMd out(rows, map.channels);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (std::uint32_t c = 0; c < map.channels; ++c) {
      out(i, c) = map.data[static_cast<std::size_t>(i) * map.channels + c];
    }
  }
  return out;
}

void write_mask_pgm(const MaskImage& mask, const std::string& path) {
  LeWriter w(path);
  std::ostringstream header;
  header << "P5\n" << mask.cols() << " " << mask.rows() << "\n65535\n";
  const std::string h = header.str();
  w.bytes(h.data(), h.size());
  // PGM 16-bit samples are big-endian.
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      const std::uint16_t v = mask(r, c);
      const unsigned char be[2] = {static_cast<unsigned char>(v >> 8),
                                   static_cast<unsigned char>(v & 0xff)};
      w.bytes(be, 2);
    }
  }
  w.close();
}

MaskImage read_mask_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  std::string magic;
  in >> magic;
  if (magic != "P5") {
    throw FormatError("'" + path + "' is not a binary PGM", 0);
  }
  auto next_token = [&]() -> long {
    // Skip whitespace and '#' comment lines between header fields.
    while (in) {
      const int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    return v;
  };
  const long width = next_token();
  const long height = next_token();
  const long maxval = next_token();
  if (!in || width <= 0 || height <= 0) {
    throw FormatError("'" + path + "' has a malformed PGM header", static_cast<std::uint64_t>(in.tellg()));
  }
  if (maxval != 65535) {
    throw FormatError("'" + path + "' must use maxval 65535", static_cast<std::uint64_t>(in.tellg()));
  }
  in.get();  // single whitespace byte before the raster
  MaskImage mask(height, width);
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 2);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError("'" + path + "' raster truncated",
                      static_cast<std::uint64_t>(in.gcount()));
  }
  for (long r = 0; r < height; ++r) {
    for (long c = 0; c < width; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * width + c) * 2;
      mask(r, c) = static_cast<std::uint16_t>((raw[i] << 8) | raw[i + 1]);
    }
  }
  return mask;
}

namespace {

void write_agoe_block(LeWriter& w, const MatRMd& m) {
  w.magic("AGOE");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    w.f32(static_cast<float>(m.data()[i]));
  }
}

MatRMd read_agoe_block(LeReader& r, const std::string& path) {
  r.expect_magic("AGOE");
  r.expect_version(1);
  const std::uint64_t hdr_at = r.offset();
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  const std::uint32_t channels = r.u32();
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols * channels;
  if (count == 0 || count > (1ull << 28)) {
    throw FormatError("'" + path + "' embeds an invalid AGOE block", hdr_at);
  }
  MatRMd m(static_cast<Eigen::Index>(rows) * cols, channels);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = r.f32();
  }
  return m;
}

void write_named_section(LeWriter& w, const std::string& name, const MatRMd& m) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  write_agoe_block(w, m);
}

}  // namespace

void write_adapter(const AdapterWeights& weights, const std::string& path) {
  weights.validate();
  LeWriter w(path);
  w.magic("AGOW");
  w.u32(1);
  w.u32(4);
  write_named_section(w, "layer1_weight", weights.w1);
  write_named_section(w, "layer1_bias", MatRMd(weights.b1.transpose()));
  write_named_section(w, "layer2_weight", weights.w2);
  write_named_section(w, "layer2_bias", MatRMd(weights.b2.transpose()));
  w.close();
}

AdapterWeights read_adapter(const std::string& path) {
  LeReader r(path);
  r.expect_magic("AGOW");
  r.expect_version(1);
  const std::uint64_t count_at = r.offset();
  const std::uint32_t n_sections = r.u32();
  if (n_sections != 4) {
    throw FormatError("'" + path + "' must carry exactly 4 sections", count_at);
  }
  std::map<std::string, MatRMd> sections;
  for (std::uint32_t i = 0; i < n_sections; ++i) {
    const std::uint64_t name_at = r.offset();
    const std::uint32_t len = r.u32();
    if (len == 0 || len > 256) {
      throw FormatError("'" + path + "' section name length invalid", name_at);
    }
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    sections[name] = read_agoe_block(r, path);
  }
  r.expect_eof();
  for (const char* want : {"layer1_weight", "layer1_bias", "layer2_weight", "layer2_bias"}) {
    if (!sections.count(want)) {
      throw FormatError("'" + path + "' is missing section " + std::string(want), 0);
    }
  }
  AdapterWeights w;
  // Bias blocks were written as single-row matrices (rows = 1).
  w.w1 = sections["layer1_weight"];
  w.b1 = sections["layer1_bias"].row(0).transpose();
  w.w2 = sections["layer2_weight"];
  w.b2 = sections["layer2_bias"].row(0).transpose();
  w.validate();
  return w;
}

nlohmann::json rig_to_json(const CameraRig& rig) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& cam : rig.cameras) {
    std::vector<double> k(9), e(12);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) k[r * 3 + c] = cam.intrinsics(r, c);
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) e[r * 4 + c] = cam.ego_to_camera.rotation(r, c);
      e[r * 4 + 3] = cam.ego_to_camera.translation[r];
    }
    cams.push_back({{"intrinsics", k},
                    {"extrinsic", e},
                    {"width", cam.width},
                    {"height", cam.height}});
  }
  return nlohmann::json{{"cameras", cams}};
}

CameraRig rig_from_json(const nlohmann::json& j) {
  if (!j.contains("cameras") || !j["cameras"].is_array()) {
    throw ConfigError("camera rig JSON must contain a 'cameras' array");
  }
  CameraRig rig;
  for (const auto& cj : j["cameras"]) {
    CameraModel cam;
    const auto k = cj.at("intrinsics").get<std::vector<double>>();
    const auto e = cj.at("extrinsic").get<std::vector<double>>();
    if (k.size() != 9 || e.size() != 12) {
      throw ConfigError("camera intrinsics must hold 9 values and extrinsic 12");
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.intrinsics(r, c) = k[r * 3 + c];
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.ego_to_camera.rotation(r, c) = e[r * 4 + c];
      cam.ego_to_camera.translation[r] = e[r * 4 + 3];
    }
    cam.width = cj.at("width").get<int>();
    cam.height = cj.at("height").get<int>();
    cam.validate();
    rig.cameras.push_back(cam);
  }
  return rig;
}

nlohmann::json label_space_to_json(const LabelSpace& space) {
  nlohmann::json prompts = nlohmann::json::object();
  for (std::size_t i = 0; i < space.classes.size(); ++i) {
    prompts[space.classes[i]] = space.subclass_prompts[i];
  }
  nlohmann::json supers = nlohmann::json::object();
  for (const auto& [coarse, members] : space.supercategories) {
    std::vector<std::string> names;
    for (int idx : members) names.push_back(space.classes[idx]);
    supers[coarse] = names;
  }
  return nlohmann::json{
      {"classes", space.classes}, {"subclass_prompts", prompts}, {"supercategories", supers}};
}

LabelSpace label_space_from_json(const nlohmann::json& j) {
  LabelSpace space;
  space.classes = j.at("classes").get<std::vector<std::string>>();
  space.subclass_prompts.resize(space.classes.size());
  if (j.contains("subclass_prompts")) {
    const auto& prompts = j["subclass_prompts"];
    for (std::size_t i = 0; i < space.classes.size(); ++i) {
      if (prompts.contains(space.classes[i])) {
        space.subclass_prompts[i] = prompts[space.classes[i]].get<std::vector<std::string>>();
      }
    }
  }
  // A class without declared prompts falls back to its own name.
  for (std::size_t i = 0; i < space.classes.size(); ++i) {
    if (space.subclass_prompts[i].empty()) {
      space.subclass_prompts[i] = {space.classes[i]};
    }
  }
  if (j.contains("supercategories")) {
    for (const auto& [coarse, members] : j["supercategories"].items()) {
      std::vector<int> idxs;
      for (const auto& name : members.get<std::vector<std::string>>()) {
        const auto idx = space.index_of(name);
        if (!idx) {
          throw ConfigError("supercategory '" + coarse + "' references unknown class '" +
                            name + "'");
        }
        idxs.push_back(*idx);
      }
      space.supercategories[coarse] = idxs;
    }
  }
  space.validate();
  return space;
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what(),
                      static_cast<std::uint64_t>(e.byte));
  }
}

void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec spec;
  const auto o = j.at("origin").get<std::vector<double>>();
  const auto s = j.at("voxel_size").get<std::vector<double>>();
  const auto d = j.at("dims").get<std::vector<int>>();
  if (o.size() != 3 || s.size() != 3 || d.size() != 3) {
    throw ConfigError("grid origin/voxel_size/dims must each hold 3 values");
  }
  for (int a = 0; a < 3; ++a) {
    spec.origin[a] = static_cast<float>(o[a]);
    spec.voxel_size[a] = static_cast<float>(s[a]);
    spec.dims[a] = d[a];
  }
  spec.validate();
  return spec;
}

nlohmann::json grid_spec_to_json(const GridSpec& spec) {
  return nlohmann::json{
      {"origin", {spec.origin.x(), spec.origin.y(), spec.origin.z()}},
      {"voxel_size", {spec.voxel_size.x(), spec.voxel_size.y(), spec.voxel_size.z()}},
      {"dims", {spec.dims.x(), spec.dims.y(), spec.dims.z()}}};
}

}  // namespace ago
