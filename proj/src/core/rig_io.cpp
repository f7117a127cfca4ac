#include "rig_io.hpp"

#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace boneforge {

using nlohmann::json;

namespace {

template <int N>
Eigen::Matrix<double, N, 1> read_floats(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DataError(where + ": missing '" + key + "'");
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != static_cast<std::size_t>(N)) {
    throw DataError(where + ": '" + key + "' must hold " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!arr[i].is_number()) throw DataError(where + ": '" + key + "' must hold numbers");
    out[i] = arr[i].get<double>();
  }
  return out;
}

std::uint32_t parse_id(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint32_t>();
  if (j.is_string()) {
    try {
      std::size_t pos = 0;
      unsigned long v = std::stoul(j.get<std::string>(), &pos);
      if (pos == j.get<std::string>().size()) return static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
    }
  }
  throw DataError(where + ": bone ids must be nonnegative integers");
}

}  // namespace

json transform_to_json(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  return {{"rotation", rot}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

RigidTransform transform_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": expected an object");
  const auto rot = read_floats<9>(j, "rotation", where);
  RigidTransform t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[3 * r + c];
  t.translation = read_floats<3>(j, "translation", where);
  if (!is_rotation(t.rotation)) throw DataError(where + ": rotation is not orthonormal");
  return t;
}

json pose_to_json(const Pose& pose) {
  json locals = json::object();
  for (const auto& [id, t] : pose.locals) locals[to_string(id)] = transform_to_json(t);
  json frame = pose.frame ? json(*pose.frame) : json("canonical");
  return {{"frame", frame}, {"locals", locals}};
}

Pose pose_from_json(const json& j) {
  if (!j.is_object() || !j.contains("frame") || !j.contains("locals")) {
    throw DataError("pose: expected {frame, locals}");
  }
  Pose pose;
  const json& frame = j.at("frame");
  if (frame.is_number_integer()) {
    pose.frame = frame.get<std::int64_t>();
  } else if (!(frame.is_string() && frame.get<std::string>() == "canonical")) {
    throw DataError("pose: frame must be an integer or \"canonical\"");
  }
  const json& locals = j.at("locals");
  if (!locals.is_object()) throw DataError("pose: locals must be an object keyed by bone id");
  for (const auto& [key, value] : locals.items()) {
    const std::string where = "pose local '" + key + "'";
    pose.locals.emplace(BoneId{parse_id(json(key), where)}, transform_from_json(value, where));
  }
  return pose;
}

json rig_to_json(const Rig& rig, const std::vector<Pose>& poses) {
  json bones = json::array();
  for (BoneId id : rig.depth_first()) {
    const Bone& b = rig.bone(id);
    json jb = transform_to_json(b.local);
    jb["id"] = id.value;
    jb["parent"] = b.parent ? json(b.parent->value) : json(nullptr);
    jb["scale"] = {b.scale.x(), b.scale.y(), b.scale.z()};
    bones.push_back(std::move(jb));
  }
  json jposes = json::array();
  for (const auto& p : poses) jposes.push_back(pose_to_json(p));
  return {{"version", kRigFileVersion}, {"next_id", rig.next_id().value}, {"bones", bones}, {"poses", jposes}};
}

RigDocument rig_from_json(const json& j) {
  if (!j.is_object()) throw DataError("rig file: top level must be an object");
  if (!j.contains("version") || !j.at("version").is_number_integer()) {
    throw DataError("rig file: missing integer 'version'");
  }
  const int version = j.at("version").get<int>();
  if (version != kRigFileVersion) {
    throw DataError("rig file: schema version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kRigFileVersion) + ")");
  }
  if (!j.contains("bones") || !j.at("bones").is_array()) throw DataError("rig file: missing 'bones' array");

  std::vector<Bone> bones;
  for (std::size_t i = 0; i < j.at("bones").size(); ++i) {
    const json& jb = j.at("bones")[i];
    const std::string where = "bone[" + std::to_string(i) + "]";
    if (!jb.is_object() || !jb.contains("id")) throw DataError(where + ": missing 'id'");
    Bone b;
    b.id = BoneId{parse_id(jb.at("id"), where)};
    if (jb.contains("parent") && !jb.at("parent").is_null()) b.parent = BoneId{parse_id(jb.at("parent"), where)};
    b.local = transform_from_json(jb, where);
    b.scale = read_floats<3>(jb, "scale", where);
    bones.push_back(std::move(b));
  }
  std::optional<BoneId> next_id;
  if (j.contains("next_id")) next_id = BoneId{parse_id(j.at("next_id"), "next_id")};

  RigDocument doc{Rig::from_bones(std::move(bones), next_id), {}};
  if (j.contains("poses")) {
    if (!j.at("poses").is_array()) throw DataError("rig file: 'poses' must be an array");
    for (const auto& jp : j.at("poses")) {
      Pose p = pose_from_json(jp);
      check_pose_covers(doc.rig, p);
      doc.poses.push_back(std::move(p));
    }
  }
  return doc;
}

void save_rig(const std::filesystem::path& path, const Rig& rig, const std::vector<Pose>& poses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << rig_to_json(rig, poses).dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

RigDocument load_rig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return rig_from_json(j);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_pose(const std::filesystem::path& path, const Pose& pose) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json{{"version", kRigFileVersion}, {"pose", pose_to_json(pose)}}.dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Pose load_pose(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("version") || j.at("version") != kRigFileVersion || !j.contains("pose")) {
    throw DataError(path.string() + ": expected {version: " + std::to_string(kRigFileVersion) + ", pose: {...}}");
  }
  try {
    return pose_from_json(j.at("pose"));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace boneforge
