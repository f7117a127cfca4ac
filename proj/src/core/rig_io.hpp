#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rig.hpp"

namespace boneforge {

inline constexpr int kRigFileVersion = 1;

struct RigDocument {
  Rig rig;
  std::vector<Pose> poses;
};

nlohmann::json transform_to_json(const RigidTransform& t);
RigidTransform transform_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);

nlohmann::json rig_to_json(const Rig& rig, const std::vector<Pose>& poses);
// Validates schema version, rig invariants, and that every pose covers the rig.
RigDocument rig_from_json(const nlohmann::json& j);

void save_rig(const std::filesystem::path& path, const Rig& rig, const std::vector<Pose>& poses);
RigDocument load_rig(const std::filesystem::path& path);

// A single pose as {version, pose: {...}}.
void save_pose(const std::filesystem::path& path, const Pose& pose);
Pose load_pose(const std::filesystem::path& path);

}  // namespace boneforge
