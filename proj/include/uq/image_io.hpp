#pragma once

#include <filesystem>
#include <optional>

#include "uq/types.hpp"

namespace uq {

// Decodes a PNG/JPEG, resizes to resolution x resolution, scales to [0,1] RGB.
// Returns nullopt when the file cannot be decoded.
std::optional<Image> load_image(const std::filesystem::path& path, int resolution);

void save_png(const Image& img, const std::filesystem::path& path);

}  // namespace uq
