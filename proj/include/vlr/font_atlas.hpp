#pragma once

#include <array>
#include <cstdint>

namespace vlr::font {

/// Glyph cell geometry in design units. One design unit is font_size/9 pt,
/// so a cell is 9 units (= the font size) tall and the advance is 6 units.
inline constexpr int kCellWidth = 6;
inline constexpr int kCellHeight = 9;
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphRows = 8;
/// Glyph rows start one unit below the top of the cell.
inline constexpr int kGlyphTop = 1;

struct Glyph {
  std::array<std::uint8_t, kGlyphRows> rows;

  constexpr bool ink(int col, int row) const noexcept {
    return col >= 0 && col < kGlyphWidth && row >= 0 && row < kGlyphRows &&
           ((rows[static_cast<std::size_t>(row)] >> (kGlyphWidth - 1 - col)) & 1u) != 0;
  }
};

/// Builtin fixed-width atlas. Code points outside printable ASCII render as a box.
const Glyph& glyph(char32_t cp) noexcept;

}  // namespace vlr::font
