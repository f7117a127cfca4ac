#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "occupancy.hpp"

namespace boneforge {

// 8-bit grayscale PNG, value = round(255 * m).
void write_mask_png(const std::filesystem::path& path, const MaskImage& mask);
// Any PNG libpng can decode, converted to 8-bit gray. The camera is left
// default.
MaskImage read_mask_png(const std::filesystem::path& path);

// Lossless sidecar: "BFMK", u32 width, u32 height, u32 reserved, then
// width*height little-endian float32 values in row-major order.
void write_mask_raw(const std::filesystem::path& path, const MaskImage& mask);
MaskImage read_mask_raw(const std::filesystem::path& path);

nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& j);

// Directory layout: masks.json listing {png, raw, camera} per view, one
// PNG and one raw file per view. Reading prefers the raw file when present.
void save_mask_set(const std::filesystem::path& dir, const std::vector<MaskImage>& views);
std::vector<MaskImage> load_mask_set(const std::filesystem::path& dir);

}  // namespace boneforge
