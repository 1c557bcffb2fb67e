#pragma once

#include <array>
#include <cstdint>

namespace crucible::transform {

/// Fixed 5x7 bitmap font covering printable ASCII 0x20..0x7E. Each glyph is
/// five column bytes, bit 0 at the top row. The table is append-only: editing
/// a glyph changes rendered bytes, so any change must bump kFontVersion.
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
inline constexpr char kFirstGlyph = 0x20;
inline constexpr char kLastGlyph = 0x7e;
inline constexpr int kGlyphCount = kLastGlyph - kFirstGlyph + 1;  // 95

extern const std::array<std::array<std::uint8_t, 5>, kGlyphCount> kFont5x7;

/// Filler pattern for cells past the end of the text in the last grid row.
/// A full block, distinct from every character glyph.
inline constexpr std::array<std::uint8_t, 5> kPadGlyph = {0x7f, 0x7f, 0x7f, 0x7f, 0x7f};

}  // namespace crucible::transform
