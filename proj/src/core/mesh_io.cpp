#include "mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace boneforge {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_long(std::string_view s, long long& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void put_double(std::ostream& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// ---------------------------------------------------------------- PLY types

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType ply_type(std::string_view name, const std::string& where) {
  if (name == "char" || name == "int8") return PlyType::Int8;
  if (name == "uchar" || name == "uint8") return PlyType::UInt8;
  if (name == "short" || name == "int16") return PlyType::Int16;
  if (name == "ushort" || name == "uint16") return PlyType::UInt16;
  if (name == "int" || name == "int32") return PlyType::Int32;
  if (name == "uint" || name == "uint32") return PlyType::UInt32;
  if (name == "float" || name == "float32") return PlyType::Float32;
  if (name == "double" || name == "float64") return PlyType::Float64;
  throw ParseError(where + ": unknown property type '" + std::string(name) + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

template <class T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <class T>
void store_le(std::ostream& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

// Sequential reader over the binary body with offset-aware errors.
class BinaryCursor {
 public:
  BinaryCursor(std::istream& in, std::size_t header_bytes, std::string name)
      : in_(in), offset_(header_bytes), name_(std::move(name)) {}

  double read(PlyType t) {
    char buf[8];
    const std::size_t n = ply_size(t);
    in_.read(buf, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ParseError(name_ + ": unexpected end of binary data at byte offset " + std::to_string(offset_));
    }
    offset_ += n;
    switch (t) {
      case PlyType::Int8: return load_le<std::int8_t>(buf);
      case PlyType::UInt8: return load_le<std::uint8_t>(buf);
      case PlyType::Int16: return load_le<std::int16_t>(buf);
      case PlyType::UInt16: return load_le<std::uint16_t>(buf);
      case PlyType::Int32: return load_le<std::int32_t>(buf);
      case PlyType::UInt32: return load_le<std::uint32_t>(buf);
      case PlyType::Float32: return load_le<float>(buf);
      case PlyType::Float64: return load_le<double>(buf);
    }
    return 0.0;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_;
  std::string name_;
};

// Sequential reader over ASCII body tokens with line-aware errors.
class AsciiCursor {
 public:
  AsciiCursor(std::istream& in, std::size_t header_lines, std::string name)
      : in_(in), line_no_(header_lines), name_(std::move(name)) {}

  double read(PlyType) {
    while (pos_ >= tokens_.size()) {
      if (!std::getline(in_, line_)) {
        throw ParseError(name_ + ": unexpected end of ASCII data after line " + std::to_string(line_no_));
      }
      ++line_no_;
      tokens_ = split_ws(line_);
      pos_ = 0;
    }
    double v = 0.0;
    if (!parse_double(tokens_[pos_], v)) {
      throw ParseError(name_ + ":" + std::to_string(line_no_) + ": bad number '" + std::string(tokens_[pos_]) + "'");
    }
    ++pos_;
    return v;
  }
  // Each element instance must end its line.
  void end_record() {
    if (pos_ != tokens_.size()) {
      throw ParseError(name_ + ":" + std::to_string(line_no_) + ": unexpected extra values");
    }
  }
  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::string line_;
  std::vector<std::string_view> tokens_;
  std::size_t pos_ = 0;
  std::size_t line_no_;
  std::string name_;
};

template <class Cursor>
TriMesh read_ply_body(Cursor& cur, const std::vector<PlyElement>& elements, const std::string& name) {
  TriMesh mesh;
  bool have_colors = false;
  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, iface = -1;
    for (std::size_t p = 0; p < el.properties.size(); ++p) {
      const auto& pn = el.properties[p].name;
      const int pi = static_cast<int>(p);
      if (pn == "x") ix = pi;
      if (pn == "y") iy = pi;
      if (pn == "z") iz = pi;
      if (pn == "red") ir = pi;
      if (pn == "green") ig = pi;
      if (pn == "blue") ib = pi;
      if ((pn == "vertex_indices" || pn == "vertex_index") && el.properties[p].is_list) iface = pi;
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw ParseError(name + ": vertex element lacks x/y/z");
    if (is_face && iface < 0) throw ParseError(name + ": face element lacks vertex_indices");
    if (is_vertex) {
      have_colors = ir >= 0 && ig >= 0 && ib >= 0;
      mesh.vertices.reserve(el.count);
      if (have_colors) mesh.colors.emplace();
    }

    std::vector<double> scalars(el.properties.size());
    std::vector<long long> indices;
    for (std::size_t i = 0; i < el.count; ++i) {
      for (std::size_t p = 0; p < el.properties.size(); ++p) {
        const auto& prop = el.properties[p];
        if (!prop.is_list) {
          scalars[p] = cur.read(prop.type);
          continue;
        }
        const double count = cur.read(prop.count_type);
        if (count < 0 || count != std::floor(count)) throw ParseError(name + ": bad list length");
        indices.clear();
        for (long long k = 0; k < static_cast<long long>(count); ++k) {
          indices.push_back(static_cast<long long>(cur.read(prop.type)));
        }
        if (is_face && static_cast<int>(p) == iface) {
          if (indices.size() < 3) throw ParseError(name + ": face with fewer than 3 vertices");
          for (std::size_t k = 1; k + 1 < indices.size(); ++k) {
            for (long long v : {indices[0], indices[k], indices[k + 1]}) {
              if (v < 0 || v > std::numeric_limits<std::uint32_t>::max()) {
                throw ParseError(name + ": negative or oversized vertex index");
              }
            }
            mesh.triangles.push_back({static_cast<std::uint32_t>(indices[0]), static_cast<std::uint32_t>(indices[k]),
                                      static_cast<std::uint32_t>(indices[k + 1])});
          }
        }
      }
      if constexpr (std::is_same_v<Cursor, AsciiCursor>) cur.end_record();
      if (is_vertex) {
        mesh.vertices.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
        if (have_colors) {
          const bool bytes = el.properties[ir].type == PlyType::UInt8;
          const double norm = bytes ? 1.0 / 255.0 : 1.0;
          mesh.colors->emplace_back(scalars[ir] * norm, scalars[ig] * norm, scalars[ib] * norm);
        }
      }
    }
  }
  return mesh;
}

}  // namespace

// ---------------------------------------------------------------------- OBJ

TriMesh read_obj(std::istream& in, const std::string& name) {
  TriMesh mesh;
  std::vector<Vec3> colors;
  bool all_colored = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    const auto tok = split_ws(view);
    if (tok.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    if (tok[0] == "v") {
      if (tok.size() != 4 && tok.size() != 5 && tok.size() != 7) {
        throw ParseError(where + ": vertex needs 3 coordinates (optionally w or rgb)");
      }
      double c[6] = {};
      const std::size_t n = tok.size() == 5 ? 3 : tok.size() - 1;
      for (std::size_t k = 0; k < n; ++k) {
        if (!parse_double(tok[k + 1], c[k])) {
          throw ParseError(where + ": bad number '" + std::string(tok[k + 1]) + "'");
        }
      }
      mesh.vertices.emplace_back(c[0], c[1], c[2]);
      if (tok.size() == 7) {
        colors.emplace_back(c[3], c[4], c[5]);
      } else {
        all_colored = false;
      }
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError(where + ": face needs at least 3 vertices");
      std::vector<std::uint32_t> refs;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        std::string_view ref = tok[k].substr(0, tok[k].find('/'));
        long long idx = 0;
        if (!parse_long(ref, idx) || idx == 0) {
          throw ParseError(where + ": bad vertex reference '" + std::string(tok[k]) + "'");
        }
        const long long count = static_cast<long long>(mesh.vertices.size());
        const long long resolved = idx < 0 ? count + idx : idx - 1;
        if (resolved < 0 || resolved >= count) {
          throw ParseError(where + ": vertex reference " + std::to_string(idx) + " out of range (" +
                           std::to_string(count) + " vertices so far)");
        }
        refs.push_back(static_cast<std::uint32_t>(resolved));
      }
      for (std::size_t k = 1; k + 1 < refs.size(); ++k) mesh.triangles.push_back({refs[0], refs[k], refs[k + 1]});
    }
    // vt, vn, o, g, s, usemtl, mtllib and other statements carry nothing we keep.
  }
  if (in.bad()) throw ParseError(name + ": read error");
  if (all_colored && !colors.empty() && colors.size() == mesh.vertices.size()) mesh.colors = std::move(colors);
  return mesh;
}

void write_obj(std::ostream& out, const TriMesh& mesh) {
  out << "# boneforge mesh\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    out << "v ";
    put_double(out, v.x());
    out << ' ';
    put_double(out, v.y());
    out << ' ';
    put_double(out, v.z());
    if (mesh.colors) {
      for (int c = 0; c < 3; ++c) {
        out << ' ';
        put_double(out, (*mesh.colors)[i][c]);
      }
    }
    out << '\n';
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

// ---------------------------------------------------------------------- PLY

TriMesh read_ply(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t header_bytes = 0;
  std::size_t header_lines = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    header_bytes += line.size() + 1;
    ++header_lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != "ply") throw ParseError(name + ":1: missing 'ply' magic");
  enum class Format { Unknown, Ascii, BinaryLE, BinaryBE } format = Format::Unknown;
  std::vector<PlyElement> elements;
  bool ended = false;
  while (next_line()) {
    const std::string where = name + ":" + std::to_string(header_lines);
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError(where + ": bad format line");
      if (tok[1] == "ascii") format = Format::Ascii;
      else if (tok[1] == "binary_little_endian") format = Format::BinaryLE;
      else if (tok[1] == "binary_big_endian") format = Format::BinaryBE;
      else throw ParseError(where + ": unknown format '" + std::string(tok[1]) + "'");
    } else if (tok[0] == "element") {
      long long count = 0;
      if (tok.size() != 3 || !parse_long(tok[2], count) || count < 0) throw ParseError(where + ": bad element line");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError(where + ": property before any element");
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        prop.is_list = true;
        prop.count_type = ply_type(tok[2], where);
        prop.type = ply_type(tok[3], where);
        prop.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        prop.type = ply_type(tok[1], where);
        prop.name = std::string(tok[2]);
      } else {
        throw ParseError(where + ": bad property line");
      }
      elements.back().properties.push_back(prop);
    } else if (tok[0] == "end_header") {
      ended = true;
      break;
    } else {
      throw ParseError(where + ": unexpected header line '" + line + "'");
    }
  }
  if (!ended) throw ParseError(name + ": header is not terminated by end_header");
  if (format == Format::Unknown) throw ParseError(name + ": header has no format line");
  if (format == Format::BinaryBE) throw ParseError(name + ": binary_big_endian PLY is not supported");

  if (format == Format::Ascii) {
    AsciiCursor cur(in, header_lines, name);
    return read_ply_body(cur, elements, name);
  }
  BinaryCursor cur(in, header_bytes, name);
  return read_ply_body(cur, elements, name);
}

void write_ply(std::ostream& out, const TriMesh& mesh, PlyEncoding encoding) {
  const bool binary = encoding == PlyEncoding::BinaryLittleEndian;
  out << "ply\n" << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "comment boneforge mesh\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (mesh.colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar uint vertex_indices\nend_header\n";

  auto color_byte = [](double c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    if (binary) {
      for (int c = 0; c < 3; ++c) store_le<double>(out, v[c]);
      if (mesh.colors) {
        for (int c = 0; c < 3; ++c) store_le<std::uint8_t>(out, color_byte((*mesh.colors)[i][c]));
      }
    } else {
      put_double(out, v.x());
      out << ' ';
      put_double(out, v.y());
      out << ' ';
      put_double(out, v.z());
      if (mesh.colors) {
        for (int c = 0; c < 3; ++c) out << ' ' << static_cast<int>(color_byte((*mesh.colors)[i][c]));
      }
      out << '\n';
    }
  }
  for (const auto& t : mesh.triangles) {
    if (binary) {
      store_le<std::uint8_t>(out, 3);
      for (auto idx : t) store_le<std::uint32_t>(out, idx);
    } else {
      out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
  }
}

// --------------------------------------------------------------- dispatch

TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string ext = lower_ext(path);
  TriMesh mesh;
  if (ext == ".obj") {
    mesh = read_obj(in, path.string());
  } else if (ext == ".ply") {
    mesh = read_ply(in, path.string());
  } else {
    throw DataError(path.string() + ": unsupported mesh extension '" + ext + "' (expected .obj or .ply)");
  }
  try {
    validate(mesh);
  } catch (const DataError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return mesh;
}

void save_mesh(const std::filesystem::path& path, const TriMesh& mesh, PlyEncoding ply_encoding) {
  validate(mesh);
  const std::string ext = lower_ext(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (ext == ".obj") {
    write_obj(out, mesh);
  } else if (ext == ".ply") {
    write_ply(out, mesh, ply_encoding);
  } else {
    throw DataError(path.string() + ": unsupported mesh extension '" + ext + "'");
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace boneforge
