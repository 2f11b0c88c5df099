#include "vlr/font_atlas.hpp"

namespace vlr::font {

namespace {

// Rows top to bottom, bit 4 = leftmost column. Printable ASCII 0x20..0x7E.
constexpr std::array<Glyph, 95> kGlyphs = {{
    Glyph{{0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},  // space
    Glyph{{0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04, 0x00}},  // !
    Glyph{{0x0A, 0x0A, 0x0A, 0x00, 0x00, 0x00, 0x00, 0x00}},  // "
    Glyph{{0x0A, 0x0A, 0x1F, 0x0A, 0x1F, 0x0A, 0x0A, 0x00}},  // #
    Glyph{{0x04, 0x0F, 0x14, 0x0E, 0x05, 0x1E, 0x04, 0x00}},  // $
    Glyph{{0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03, 0x00}},  // %
    Glyph{{0x0C, 0x12, 0x14, 0x08, 0x15, 0x12, 0x0D, 0x00}},  // &
    Glyph{{0x04, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00}},  // quote
    Glyph{{0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02, 0x00}},  // (
    Glyph{{0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08, 0x00}},  // )
    Glyph{{0x00, 0x04, 0x15, 0x0E, 0x15, 0x04, 0x00, 0x00}},  // *
    Glyph{{0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00, 0x00}},  // +
    Glyph{{0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},  // ,
    Glyph{{0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00, 0x00}},  // -
    Glyph{{0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C, 0x00}},  // .
    Glyph{{0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00, 0x00}},  // /
    Glyph{{0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E, 0x00}},  // 0
    Glyph{{0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E, 0x00}},  // 1
    Glyph{{0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F, 0x00}},  // 2
    Glyph{{0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E, 0x00}},  // 3
    Glyph{{0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02, 0x00}},  // 4
    Glyph{{0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E, 0x00}},  // 5
    Glyph{{0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E, 0x00}},  // 6
    Glyph{{0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08, 0x00}},  // 7
    Glyph{{0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E, 0x00}},  // 8
    Glyph{{0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C, 0x00}},  // 9
    Glyph{{0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00, 0x00}},  // :
    Glyph{{0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x04, 0x08, 0x00}},  // ;
    Glyph{{0x02, 0x04, 0x08, 0x10, 0x08, 0x04, 0x02, 0x00}},  // <
    Glyph{{0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00, 0x00}},  // =
    Glyph{{0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08, 0x00}},  // >
    Glyph{{0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04, 0x00}},  // ?
    Glyph{{0x0E, 0x11, 0x01, 0x0D, 0x15, 0x15, 0x0E, 0x00}},  // @
    Glyph{{0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11, 0x00}},  // A
    Glyph{{0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E, 0x00}},  // B
    Glyph{{0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E, 0x00}},  // C
    Glyph{{0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C, 0x00}},  // D
    Glyph{{0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F, 0x00}},  // E
    Glyph{{0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10, 0x00}},  // F
    Glyph{{0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F, 0x00}},  // G
    Glyph{{0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11, 0x00}},  // H
    Glyph{{0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E, 0x00}},  // I
    Glyph{{0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C, 0x00}},  // J
    Glyph{{0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11, 0x00}},  // K
    Glyph{{0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F, 0x00}},  // L
    Glyph{{0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11, 0x00}},  // M
    Glyph{{0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x00}},  // N
    Glyph{{0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E, 0x00}},  // O
    Glyph{{0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10, 0x00}},  // P
    Glyph{{0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D, 0x00}},  // Q
    Glyph{{0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11, 0x00}},  // R
    Glyph{{0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E, 0x00}},  // S
    Glyph{{0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04, 0x00}},  // T
    Glyph{{0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E, 0x00}},  // U
    Glyph{{0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04, 0x00}},  // V
    Glyph{{0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A, 0x00}},  // W
    Glyph{{0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11, 0x00}},  // X
    Glyph{{0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x00}},  // Y
    Glyph{{0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F, 0x00}},  // Z
    Glyph{{0x0E, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0E, 0x00}},  // [
    Glyph{{0x00, 0x10, 0x08, 0x04, 0x02, 0x01, 0x00, 0x00}},  // backslash
    Glyph{{0x0E, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0E, 0x00}},  // ]
    Glyph{{0x04, 0x0A, 0x11, 0x00, 0x00, 0x00, 0x00, 0x00}},  // ^
    Glyph{{0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F, 0x00}},  // _
    Glyph{{0x08, 0x04, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00}},  // `
    Glyph{{0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F, 0x00}},  // a
    Glyph{{0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E, 0x00}},  // b
    Glyph{{0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E, 0x00}},  // c
    Glyph{{0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F, 0x00}},  // d
    Glyph{{0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E, 0x00}},  // e
    Glyph{{0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08, 0x00}},  // f
    Glyph{{0x00, 0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E}},  // g
    Glyph{{0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11, 0x00}},  // h
    Glyph{{0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E, 0x00}},  // i
    Glyph{{0x02, 0x00, 0x06, 0x02, 0x02, 0x02, 0x12, 0x0C}},  // j
    Glyph{{0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12, 0x00}},  // k
    Glyph{{0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E, 0x00}},  // l
    Glyph{{0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11, 0x00}},  // m
    Glyph{{0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11, 0x00}},  // n
    Glyph{{0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E, 0x00}},  // o
    Glyph{{0x00, 0x00, 0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10}},  // p
    Glyph{{0x00, 0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x01}},  // q
    Glyph{{0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10, 0x00}},  // r
    Glyph{{0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E, 0x00}},  // s
    Glyph{{0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06, 0x00}},  // t
    Glyph{{0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D, 0x00}},  // u
    Glyph{{0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04, 0x00}},  // v
    Glyph{{0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0A, 0x00}},  // w
    Glyph{{0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x00}},  // x
    Glyph{{0x00, 0x00, 0x11, 0x11, 0x11, 0x0F, 0x01, 0x0E}},  // y
    Glyph{{0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F, 0x00}},  // z
    Glyph{{0x02, 0x04, 0x04, 0x08, 0x04, 0x04, 0x02, 0x00}},  // {
    Glyph{{0x04, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04, 0x00}},  // |
    Glyph{{0x08, 0x04, 0x04, 0x02, 0x04, 0x04, 0x08, 0x00}},  // }
    Glyph{{0x00, 0x00, 0x08, 0x15, 0x02, 0x00, 0x00, 0x00}},  // ~
}};

constexpr Glyph kReplacement{{0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F, 0x00}};

}  // namespace

const Glyph& glyph(char32_t cp) noexcept {
  if (cp >= 0x20 && cp <= 0x7E) return kGlyphs[cp - 0x20];
  return kReplacement;
}

}  // namespace vlr::font
