#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crucible/core.hpp"

namespace crucible::transform {

/// Encode an 8-bit grayscale image as a PNG byte stream. Output bytes are a
/// pure function of the pixel data, so content-hash filenames are stable.
std::vector<std::uint8_t> encode_png(const core::ImageAsset& image);

void write_png(const core::ImageAsset& image, const std::filesystem::path& path);

/// Hex digest of (dimensions, pixels), used for dedup filenames in logs.
std::string content_hash(const core::ImageAsset& image);

}  // namespace crucible::transform

namespace crucible {
// The encoder lives beside the renderer; callers address it by what it does.
namespace pngio = transform;
}  // namespace crucible
