#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/corpus.hpp"

namespace vlr {

enum class GlyphSource { BuiltinBitmap, ExternalFont };

/// Rasterisation parameters. Defaults reproduce the reference typography
/// (A4 page in points, 72 dpi, 10 pt margins, 9 pt glyphs on a 10 pt line).
struct RenderConfig {
  int page_width_pt = 595;
  int page_height_pt = 842;
  int dpi = 72;
  int margin_x_pt = 10;
  int margin_y_pt = 10;
  std::uint8_t background = 255;
  bool auto_crop = true;
  int font_size_pt = 9;
  int line_height_pt = 10;
  std::uint8_t font_color = 0;
  std::string alignment = "left";
  int indent_first_pt = 0;
  int indent_left_pt = 0;
  int indent_right_pt = 0;
  int spacing_before_pt = 0;
  int spacing_after_pt = 0;
  int border_width_pt = 0;
  GlyphSource glyph_source = GlyphSource::BuiltinBitmap;
  std::string font_path;

  void validate() const;

  /// Keys follow the typography table: page_size, dpi, margins,
  /// background_color, auto_crop, font_family, font_size, line_height,
  /// font_color, alignment, indent, spacing, border_width.
  nlohmann::json to_json() const;
  static RenderConfig from_json(const nlohmann::json& j);

  bool operator==(const RenderConfig&) const = default;
};

/// Stable 64-bit fingerprint over a canonical serialisation of every field.
std::uint64_t config_fingerprint(const RenderConfig& cfg);
std::string canonical_string(const RenderConfig& cfg);

struct RenderedImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 8-bit grayscale
  std::uint64_t config_fingerprint = 0;

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
};

/// Lay out text left-aligned with word wrapping at the right margin and
/// rasterise it. Text that overflows one page continues on further pages
/// whose content regions are stacked vertically. Throws on empty text.
RenderedImage render(std::string_view text, const RenderConfig& cfg);
RenderedImage render(std::span<const TokenId> tokens, const Vocabulary& vocab, const RenderConfig& cfg);

/// Number of render() calls in this process.
std::uint64_t render_call_count() noexcept;

void write_png(const std::string& path, const RenderedImage& img);
void write_pgm(const std::string& path, const RenderedImage& img);

}  // namespace vlr
