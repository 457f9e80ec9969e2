#include "voxfuse/kitti.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voxfuse/errors.hpp"

namespace voxfuse::kitti {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

double parse_double(std::string_view token, int line_no, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw FormatError(std::string(what) + " line " + std::to_string(line_no) +
                      ": malformed number '" + std::string(token) + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

geom::Mat4 lift4(const std::vector<double>& vals) {
  geom::Mat4 r = geom::Mat4::identity();
  if (vals.size() == 9) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i * 4 + j] = vals[i * 3 + j];
  } else {  // 12
    for (int i = 0; i < 12; ++i) r.m[(i / 4) * 4 + (i % 4)] = vals[i];
  }
  return r;
}

void check_rotation_orthonormal(const geom::Mat4& t, const char* what) {
  // R R^T == I to 1e-6
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += t.m[i * 4 + k] * t.m[j * 4 + k];
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(acc - want) > 1e-6) {
        throw FormatError(std::string(what) +
                          ": rotation block is not orthonormal");
      }
    }
  }
  if (t.m[12] != 0.0 || t.m[13] != 0.0 || t.m[14] != 0.0 || t.m[15] != 1.0) {
    throw FormatError(std::string(what) + ": bottom row is not (0,0,0,1)");
  }
}

json box3d_to_json(const geom::Box3D& b) {
  return json{{"center", {b.center.x, b.center.y, b.center.z}},
              {"dims", {b.dims.x, b.dims.y, b.dims.z}},
              {"yaw", b.yaw}};
}

geom::Box3D box3d_from_json(const json& j) {
  geom::Box3D b;
  b.center = {j.at("center").at(0).get<double>(),
              j.at("center").at(1).get<double>(),
              j.at("center").at(2).get<double>()};
  b.dims = {j.at("dims").at(0).get<double>(), j.at("dims").at(1).get<double>(),
            j.at("dims").at(2).get<double>()};
  b.yaw = j.at("yaw").get<double>();
  return b;
}

json box2d_to_json(const geom::Box2D& b) {
  return json::array({b.u_min, b.v_min, b.u_max, b.v_max});
}

geom::Box2D box2d_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

}  // namespace

ObjectClass class_from_name(std::string_view name) {
  if (name == "Car") return ObjectClass::Car;
  if (name == "Pedestrian") return ObjectClass::Pedestrian;
  if (name == "Cyclist") return ObjectClass::Cyclist;
  if (name == "DontCare") return ObjectClass::DontCare;
  return ObjectClass::Other;
}

std::string_view class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::Car: return "Car";
    case ObjectClass::Pedestrian: return "Pedestrian";
    case ObjectClass::Cyclist: return "Cyclist";
    case ObjectClass::DontCare: return "DontCare";
    case ObjectClass::Other: break;
  }
  return "Other";
}

void Scene::validate() const {
  if (image.height <= 0 || image.width <= 0)
    throw ContractError("scene " + id + ": image dimensions must be positive");
  if (image.rgb.size() !=
      static_cast<std::size_t>(image.height) * image.width * 3)
    throw ContractError("scene " + id + ": image buffer size mismatch");
}

PointCloud parse_point_cloud(std::span<const std::uint8_t> blob) {
  if (blob.size() % 16 != 0) {
    throw FormatError("point cloud blob length " + std::to_string(blob.size()) +
                      " is not a multiple of 16");
  }
  PointCloud cloud;
  const std::size_t n = blob.size() / 16;
  cloud.points.resize(n);
  if (n > 0) std::memcpy(cloud.points.data(), blob.data(), blob.size());
  for (std::size_t i = 0; i < n; ++i) {
    Point& p = cloud.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.intensity)) {
      throw FormatError("point cloud: non-finite value at point " +
                        std::to_string(i));
    }
    p.intensity = std::clamp(p.intensity, 0.f, 1.f);
  }
  return cloud;
}

std::vector<std::uint8_t> write_point_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out(cloud.points.size() * 16);
  if (!out.empty())
    std::memcpy(out.data(), cloud.points.data(), out.size());
  return out;
}

geom::CalibrationSet parse_calibration(const std::string& text) {
  std::map<std::string, std::vector<double>> values;
  const auto lines = split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto line = lines[li];
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    std::string key(line.substr(0, colon));
    // trim
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
      key.pop_back();
    std::vector<double> vals;
    for (const auto tok : split_ws(line.substr(colon + 1))) {
      vals.push_back(parse_double(tok, static_cast<int>(li) + 1, "calibration"));
    }
    values.emplace(std::move(key), std::move(vals));
  }

  auto require = [&](const char* key, std::size_t count) -> const std::vector<double>& {
    const auto it = values.find(key);
    if (it == values.end())
      throw FormatError(std::string("calibration: missing key ") + key);
    if (it->second.size() != count)
      throw FormatError(std::string("calibration: key ") + key + " has " +
                        std::to_string(it->second.size()) + " values, want " +
                        std::to_string(count));
    return it->second;
  };

  const auto& p2 = require("P2", 12);
  const auto& r0 = require("R0_rect", 9);
  const auto& tr = require("Tr_velo_to_cam", 12);

  geom::CalibrationSet calib;
  calib.cam_from_lidar = lift4(r0) * lift4(tr);
  std::copy(p2.begin(), p2.end(), calib.img_from_cam.m.begin());
  check_rotation_orthonormal(calib.cam_from_lidar, "calibration");
  return calib;
}

std::string write_calibration(const geom::CalibrationSet& calib) {
  // Emitted with R0_rect already folded into Tr (R0 = identity), which parses
  // back to the same composed transform.
  std::string out = "P2:";
  for (double v : calib.img_from_cam.m) out += " " + format_double(v);
  out += "\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam:";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      out += " " + format_double(calib.cam_from_lidar.m[i * 4 + j]);
  out += "\n";
  return out;
}

std::vector<LabelRecord> parse_labels(const std::string& text) {
  std::vector<LabelRecord> out;
  const auto lines = split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto fields = split_ws(lines[li]);
    if (fields.empty()) continue;
    const int line_no = static_cast<int>(li) + 1;
    if (fields.size() != 15) {
      throw FormatError("label line " + std::to_string(line_no) +
                        ": expected 15 fields, got " +
                        std::to_string(fields.size()));
    }
    LabelRecord r;
    r.name = std::string(fields[0]);
    r.cls = class_from_name(r.name);
    r.truncation = parse_double(fields[1], line_no, "label");
    r.occlusion = static_cast<int>(
        std::lround(parse_double(fields[2], line_no, "label")));
    r.alpha = parse_double(fields[3], line_no, "label");
    r.bbox = {parse_double(fields[4], line_no, "label"),
              parse_double(fields[5], line_no, "label"),
              parse_double(fields[6], line_no, "label"),
              parse_double(fields[7], line_no, "label")};
    r.height = parse_double(fields[8], line_no, "label");
    r.width = parse_double(fields[9], line_no, "label");
    r.length = parse_double(fields[10], line_no, "label");
    r.location = {parse_double(fields[11], line_no, "label"),
                  parse_double(fields[12], line_no, "label"),
                  parse_double(fields[13], line_no, "label")};
    r.rotation_y = geom::normalize_angle(
        parse_double(fields[14], line_no, "label"));
    out.push_back(std::move(r));
  }
  return out;
}

std::string write_labels(const std::vector<LabelRecord>& labels) {
  std::string out;
  for (const auto& r : labels) {
    out += r.name;
    out += ' ';
    out += format_double(r.truncation);
    out += ' ';
    out += std::to_string(r.occlusion);
    out += ' ';
    out += format_double(r.alpha);
    for (double v : {r.bbox.u_min, r.bbox.v_min, r.bbox.u_max, r.bbox.v_max,
                     r.height, r.width, r.length, r.location.x, r.location.y,
                     r.location.z, r.rotation_y}) {
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

// PPM header token reader: skips whitespace and '#' comments.
std::string next_ppm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = static_cast<char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size()) {
    const char c = static_cast<char>(bytes[pos]);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') break;
    tok.push_back(c);
    ++pos;
  }
  return tok;
}

}  // namespace

ImageRaster parse_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (next_ppm_token(bytes, pos) != "P6")
    throw FormatError("image: not a binary portable pixmap (P6)");
  const std::string ws = next_ppm_token(bytes, pos);
  const std::string hs = next_ppm_token(bytes, pos);
  const std::string ms = next_ppm_token(bytes, pos);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ws);
    h = std::stoi(hs);
    maxval = std::stoi(ms);
  } catch (const std::exception&) {
    throw FormatError("image: malformed pixmap header");
  }
  if (w <= 0 || h <= 0) throw FormatError("image: non-positive dimensions");
  if (maxval != 255) throw FormatError("image: only maxval 255 is supported");
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < pos + need)
    throw FormatError("image: truncated pixel data");
  ImageRaster img;
  img.width = w;
  img.height = h;
  img.rgb.assign(bytes.begin() + pos, bytes.begin() + pos + need);
  return img;
}

ImageRaster read_ppm(const std::filesystem::path& path) {
  return parse_ppm(read_file(path));
}

void write_ppm(const ImageRaster& image, const std::filesystem::path& path) {
  std::string header = "P6\n" + std::to_string(image.width) + " " +
                       std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.rgb.begin(), image.rgb.end());
  write_file(path, bytes);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(out.data()), size))
    throw IoError("cannot read " + path.string());
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (!bytes.empty() &&
      !out.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size())))
    throw IoError("cannot write " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span<const std::uint8_t>(
                       reinterpret_cast<const std::uint8_t*>(text.data()),
                       text.size()));
}

Scene load_scene(const std::filesystem::path& root, const std::string& id) {
  Scene s;
  s.id = id;
  s.cloud = parse_point_cloud(read_file(root / "velodyne" / (id + ".bin")));
  s.image = read_ppm(root / "image_2" / (id + ".ppm"));
  s.labels = parse_labels(read_text_file(root / "label_2" / (id + ".txt")));
  s.calib_text = read_text_file(root / "calib" / (id + ".txt"));
  s.calib = parse_calibration(s.calib_text);
  s.validate();
  return s;
}

void write_scene(const Scene& scene, const std::filesystem::path& root) {
  write_file(root / "velodyne" / (scene.id + ".bin"),
             write_point_cloud(scene.cloud));
  write_ppm(scene.image, root / "image_2" / (scene.id + ".ppm"));
  write_text_file(root / "label_2" / (scene.id + ".txt"),
                  write_labels(scene.labels));
  write_text_file(root / "calib" / (scene.id + ".txt"),
                  scene.calib_text.empty() ? write_calibration(scene.calib)
                                           : scene.calib_text);
}

geom::Box3D box3d_from_label(const LabelRecord& label,
                             const geom::CalibrationSet& calib) {
  // location is the bottom-face center; lift by half the height along the
  // LiDAR up axis, where the box is gravity-aligned by construction
  const geom::Vec3 bottom =
      calib.cam_from_lidar.rigid_inverse().transform_point(label.location);
  geom::Box3D box;
  box.center = bottom + geom::Vec3{0.0, 0.0, 0.5 * label.height};
  box.dims = {label.length, label.width, label.height};
  box.yaw = geom::normalize_angle(-label.rotation_y - M_PI / 2.0);
  return box;
}

LabelRecord label_from_box3d(const geom::Box3D& box, ObjectClass cls,
                             const geom::CalibrationSet& calib,
                             const geom::Box2D& bbox) {
  LabelRecord r;
  r.name = std::string(class_name(cls));
  r.cls = cls;
  r.bbox = bbox;
  r.height = box.dims.z;
  r.width = box.dims.y;
  r.length = box.dims.x;
  const geom::Vec3 bottom = box.center - geom::Vec3{0.0, 0.0, 0.5 * box.dims.z};
  r.location = calib.cam_from_lidar.transform_point(bottom);
  r.rotation_y = geom::normalize_angle(-box.yaw - M_PI / 2.0);
  r.alpha = geom::normalize_angle(
      r.rotation_y - std::atan2(r.location.x, r.location.z));
  return r;
}

std::vector<int> SampleDatabase::entries_of_class(ObjectClass c) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].cls == c) out.push_back(static_cast<int>(i));
  return out;
}

SampleDatabase load_sample_database(const std::filesystem::path& root) {
  const auto index_path = root / "index.json";
  json index;
  try {
    index = json::parse(read_text_file(index_path));
  } catch (const json::exception& e) {
    throw FormatError("sample database index: " + std::string(e.what()));
  }
  SampleDatabase db;
  for (const auto& e : index.at("entries")) {
    SampleEntry entry;
    entry.class_name = e.at("class").get<std::string>();
    entry.cls = class_from_name(entry.class_name);
    entry.points =
        parse_point_cloud(read_file(root / e.at("points").get<std::string>()));
    entry.patch = read_ppm(root / e.at("patch").get<std::string>());
    entry.box = box3d_from_json(e.at("box3d"));
    entry.patch_box = box2d_from_json(e.at("box2d"));
    // canonical-pose invariant: points inside the origin-centered box
    geom::Box3D canonical{{0, 0, 0},
                          entry.box.dims + geom::Vec3{2e-6, 2e-6, 2e-6},
                          0.0};
    for (std::size_t i = 0; i < entry.points.size(); ++i) {
      const Point& p = entry.points.points[i];
      if (!geom::point_in_box3d({p.x, p.y, p.z}, canonical)) {
        throw FormatError("sample database: entry " +
                          std::to_string(db.entries.size()) + " point " +
                          std::to_string(i) + " lies outside its box");
      }
    }
    db.entries.push_back(std::move(entry));
  }
  return db;
}

void save_sample_database(const SampleDatabase& db,
                          const std::filesystem::path& root) {
  json entries = json::array();
  std::map<std::string, int> counters;
  for (const auto& entry : db.entries) {
    const int n = counters[entry.class_name]++;
    char stem[16];
    std::snprintf(stem, sizeof(stem), "%06d", n);
    const std::string rel_bin = entry.class_name + "/" + stem + ".bin";
    const std::string rel_ppm = entry.class_name + "/" + stem + ".ppm";
    write_file(root / rel_bin, write_point_cloud(entry.points));
    write_ppm(entry.patch, root / rel_ppm);
    entries.push_back(json{{"class", entry.class_name},
                           {"points", rel_bin},
                           {"patch", rel_ppm},
                           {"box3d", box3d_to_json(entry.box)},
                           {"box2d", box2d_to_json(entry.patch_box)}});
  }
  write_text_file(root / "index.json",
                  json{{"entries", entries}}.dump(2) + "\n");
}

}  // namespace voxfuse::kitti
