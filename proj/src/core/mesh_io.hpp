#pragma once

#include <filesystem>
#include <istream>

#include "mesh.hpp"

namespace boneforge {

enum class PlyEncoding { Ascii, BinaryLittleEndian };

// Format is chosen from the extension (.obj or .ply). Parse failures throw
// ParseError naming the line (OBJ, ASCII PLY) or byte offset (binary PLY);
// no partially read mesh is returned.
TriMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const std::filesystem::path& path, const TriMesh& mesh,
               PlyEncoding ply_encoding = PlyEncoding::BinaryLittleEndian);

TriMesh read_obj(std::istream& in, const std::string& name = "<obj>");
void write_obj(std::ostream& out, const TriMesh& mesh);

TriMesh read_ply(std::istream& in, const std::string& name = "<ply>");
void write_ply(std::ostream& out, const TriMesh& mesh, PlyEncoding encoding);

}  // namespace boneforge
