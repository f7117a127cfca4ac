#include "mask_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "errors.hpp"
#include "rig_io.hpp"

namespace boneforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_mask(const MaskImage& m) {
  if (m.width < 1 || m.height < 1) throw ArgumentError("mask has no pixels");
  if (m.values.size() != static_cast<std::size_t>(m.width) * static_cast<std::size_t>(m.height)) {
    throw ArgumentError("mask value count does not match its size");
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

double read_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number()) throw DataError(where + ": '" + key + "' must be a number");
  return j.at(key).get<double>();
}

}  // namespace

void write_mask_png(const fs::path& path, const MaskImage& mask) {
  check_mask(mask);
  std::vector<png_byte> pixels(mask.values.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(mask.values[i], 0.0, 1.0);
    pixels[i] = static_cast<png_byte>(std::lround(255.0 * v));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(mask.width);
  image.height = static_cast<png_uint_32>(mask.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(path.string() + ": cannot write PNG: " + msg);
  }
}

MaskImage read_mask_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError(path.string() + ": cannot read PNG: " + msg);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError(path.string() + ": cannot decode PNG: " + msg);
  }
  MaskImage m;
  m.width = static_cast<int>(image.width);
  m.height = static_cast<int>(image.height);
  m.values.resize(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) m.values[i] = pixels[i] / 255.0;
  return m;
}

void write_mask_raw(const fs::path& path, const MaskImage& mask) {
  check_mask(mask);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write("BFMK", 4);
  put_u32(out, static_cast<std::uint32_t>(mask.width));
  put_u32(out, static_cast<std::uint32_t>(mask.height));
  put_u32(out, 0);
  for (double v : mask.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError(path.string() + ": write failed");
}

MaskImage read_mask_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "BFMK", 4) != 0) {
    throw ParseError(path.string() + ": not a BFMK mask file");
  }
  MaskImage m;
  const std::uint32_t w = get_u32(bytes.data() + 4);
  const std::uint32_t h = get_u32(bytes.data() + 8);
  const std::uint64_t count = static_cast<std::uint64_t>(w) * h;
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) throw ParseError(path.string() + ": bad mask size");
  if (bytes.size() != 16 + 4 * count) {
    throw ParseError(path.string() + ": expected " + std::to_string(16 + 4 * count) + " bytes, found " +
                     std::to_string(bytes.size()));
  }
  m.width = static_cast<int>(w);
  m.height = static_cast<int>(h);
  m.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i));
    if (!std::isfinite(v)) throw ParseError(path.string() + ": non-finite value at pixel " + std::to_string(i));
    m.values[i] = v;
  }
  return m;
}

json camera_to_json(const Camera& camera) {
  return {{"width", camera.width},   {"height", camera.height}, {"fx", camera.fx},
          {"fy", camera.fy},         {"cx", camera.cx},         {"cy", camera.cy},
          {"world_from_camera", transform_to_json(camera.world_from_camera)}};
}

Camera camera_from_json(const json& j) {
  const std::string where = "camera";
  if (!j.is_object()) throw DataError(where + ": expected an object");
  Camera c;
  if (!j.contains("width") || !j.at("width").is_number_integer() || !j.contains("height") ||
      !j.at("height").is_number_integer()) {
    throw DataError(where + ": width and height must be integers");
  }
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.fx = read_number(j, "fx", where);
  c.fy = read_number(j, "fy", where);
  c.cx = read_number(j, "cx", where);
  c.cy = read_number(j, "cy", where);
  if (!j.contains("world_from_camera")) throw DataError(where + ": missing world_from_camera");
  c.world_from_camera = transform_from_json(j.at("world_from_camera"), where + ".world_from_camera");
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw DataError(where + ": " + e.what());
  }
  return c;
}

void save_mask_set(const fs::path& dir, const std::vector<MaskImage>& views) {
  fs::create_directories(dir);
  json list = json::array();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const std::string stem = "view" + std::to_string(v);
    write_mask_png(dir / (stem + ".png"), views[v]);
    write_mask_raw(dir / (stem + ".bfmk"), views[v]);
    list.push_back({{"png", stem + ".png"}, {"raw", stem + ".bfmk"}, {"camera", camera_to_json(views[v].camera)}});
  }
  std::ofstream out(dir / "masks.json");
  if (!out) throw IoError((dir / "masks.json").string() + ": cannot open for writing");
  out << json{{"version", 1}, {"views", list}}.dump(1) << '\n';
}

std::vector<MaskImage> load_mask_set(const fs::path& dir) {
  const fs::path manifest = dir / "masks.json";
  std::ifstream in(manifest);
  if (!in) throw IoError(manifest.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("version", 0) != 1 || !j.contains("views") || !j.at("views").is_array()) {
    throw DataError(manifest.string() + ": expected {version: 1, views: [...]}");
  }
  std::vector<MaskImage> out;
  for (const auto& jv : j.at("views")) {
    if (!jv.is_object() || !jv.contains("camera")) throw DataError(manifest.string() + ": view without camera");
    MaskImage m;
    if (jv.contains("raw") && jv.at("raw").is_string() && fs::exists(dir / jv.at("raw").get<std::string>())) {
      m = read_mask_raw(dir / jv.at("raw").get<std::string>());
    } else if (jv.contains("png") && jv.at("png").is_string()) {
      m = read_mask_png(dir / jv.at("png").get<std::string>());
    } else {
      throw DataError(manifest.string() + ": view has no image file");
    }
    m.camera = camera_from_json(jv.at("camera"));
    if (m.camera.width != m.width || m.camera.height != m.height) {
      throw DataError(manifest.string() + ": camera size does not match its image");
    }
    out.push_back(std::move(m));
  }
  if (out.empty()) throw DataError(manifest.string() + ": no views");
  return out;
}

}  // namespace boneforge
