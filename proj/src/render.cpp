#include "vlr/render.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include <stb_truetype/stb_truetype.hh>

#include "vlr/error.hpp"
#include "vlr/font_atlas.hpp"
#include "vlr/rng.hpp"

namespace vlr {

namespace {

std::string hex_color(std::uint8_t g) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", g, g, g);
  return buf;
}

std::uint8_t parse_gray(const nlohmann::json& j, const char* key) {
  if (j.is_number_integer()) {
    const int v = j.get<int>();
    if (v < 0 || v > 255) throw config_error(std::string("render.") + key + " out of range");
    return static_cast<std::uint8_t>(v);
  }
  const auto s = j.get<std::string>();
  if (s.size() != 7 || s[0] != '#') throw config_error(std::string("render.") + key + " must be #RRGGBB");
  const unsigned long rgb = std::stoul(s.substr(1), nullptr, 16);
  const unsigned r = (rgb >> 16) & 0xFF, g = (rgb >> 8) & 0xFF, b = rgb & 0xFF;
  if (r != g || g != b) throw config_error(std::string("render.") + key + ": only gray colours are supported");
  return static_cast<std::uint8_t>(r);
}

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0xFFFD;
    std::size_t len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
      cp = ((c & 0x1Fu) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
      len = 2;
    } else if ((c >> 4) == 0xE && i + 2 < s.size()) {
      cp = ((c & 0x0Fu) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6) |
           (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
      len = 3;
    } else if ((c >> 3) == 0x1E && i + 3 < s.size()) {
      cp = ((c & 0x07u) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12) |
           ((static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6) | (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
      len = 4;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

/// Greedy word wrap into lines of at most `width` advance units.
/// `advance` gives the width of one code point.
template <typename Advance>
std::vector<std::u32string> wrap(const std::u32string& text, long width, Advance advance) {
  std::vector<std::u32string> lines(1);
  long used = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == U'\n') {
      lines.emplace_back();
      used = 0;
      ++i;
      continue;
    }
    if (text[i] == U' ') {
      // A space is kept only when the line already has content and it fits.
      if (!lines.back().empty() && used + advance(U' ') <= width) {
        lines.back().push_back(U' ');
        used += advance(U' ');
      }
      ++i;
      continue;
    }
    std::size_t j = i;
    long wlen = 0;
    while (j < text.size() && text[j] != U' ' && text[j] != U'\n') wlen += advance(text[j++]);
    if (used + wlen > width && !lines.back().empty()) {
      while (!lines.back().empty() && lines.back().back() == U' ') {
        used -= advance(U' ');
        lines.back().pop_back();
      }
      lines.emplace_back();
      used = 0;
    }
    for (; i < j; ++i) {
      const long a = advance(text[i]);
      if (used + a > width && !lines.back().empty()) {
        lines.emplace_back();
        used = 0;
      }
      lines.back().push_back(text[i]);
      used += a;
    }
  }
  for (auto& l : lines)
    while (!l.empty() && l.back() == U' ') l.pop_back();
  return lines;
}

/// Pixel index covering a position given in sub-points (1/9 pt).
long subpt_to_px_floor(long subpt, int dpi) { return (subpt * dpi) / 648; }
long subpt_to_px_ceil(long subpt, int dpi) { return (subpt * dpi + 647) / 648; }
long pt_to_px(long pt, int dpi) { return (pt * dpi + 36) / 72; }

struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> px;
  Canvas(int w, int h, std::uint8_t bg) : width(w), height(h), px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), bg) {}
  std::uint8_t& at(long x, long y) { return px[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
};

long lines_per_page(const RenderConfig& cfg) { return (cfg.page_height_pt - 2 * cfg.margin_y_pt) / cfg.line_height_pt; }

/// Full-canvas size in pixels for `lines` lines: one page, or more when the
/// stacked content regions exceed it.
std::pair<int, int> full_canvas_px(const RenderConfig& cfg, long lines) {
  const long per_page = lines_per_page(cfg);
  const long pages = std::max<long>(1, (lines + per_page - 1) / per_page);
  const long height_pt = cfg.page_height_pt + (pages - 1) * per_page * cfg.line_height_pt;
  return {static_cast<int>(pt_to_px(cfg.page_width_pt, cfg.dpi)), static_cast<int>(pt_to_px(height_pt, cfg.dpi))};
}

RenderedImage crop_or_keep(Canvas&& canvas, const RenderConfig& cfg) {
  RenderedImage img;
  img.config_fingerprint = config_fingerprint(cfg);
  int x0 = canvas.width, y0 = canvas.height, x1 = -1, y1 = -1;
  for (int y = 0; y < canvas.height; ++y) {
    for (int x = 0; x < canvas.width; ++x) {
      if (canvas.at(x, y) != cfg.background) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) throw data_error("render: text produced no ink");
  if (!cfg.auto_crop) {
    img.width = canvas.width;
    img.height = canvas.height;
    img.pixels = std::move(canvas.px);
    return img;
  }
  img.width = x1 - x0 + 1;
  img.height = y1 - y0 + 1;
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    std::copy_n(&canvas.at(x0, y0 + y), img.width, img.pixels.begin() + static_cast<std::ptrdiff_t>(y) * img.width);
  return img;
}

RenderedImage render_builtin(const std::u32string& text, const RenderConfig& cfg) {
  using namespace font;
  const long fs = cfg.font_size_pt;          // sub-points per design unit
  const long advance = kCellWidth * fs;      // sub-points per character
  const long content_w = static_cast<long>(cfg.page_width_pt - 2 * cfg.margin_x_pt) * 9;
  const auto lines = wrap(text, content_w, [&](char32_t) { return advance; });

  long max_chars = 0;
  for (const auto& l : lines) max_chars = std::max<long>(max_chars, static_cast<long>(l.size()));
  auto [full_w, full_h] = full_canvas_px(cfg, static_cast<long>(lines.size()));
  int w = full_w, h = full_h;
  if (cfg.auto_crop) {
    // Only the region that can hold ink is materialised; cropping is unaffected.
    const long right = static_cast<long>(cfg.margin_x_pt) * 9 + max_chars * advance;
    const long bottom = (static_cast<long>(cfg.margin_y_pt) + static_cast<long>(lines.size()) * cfg.line_height_pt) * 9 + kCellHeight * fs;
    w = static_cast<int>(std::min<long>(full_w, subpt_to_px_ceil(right, cfg.dpi) + 1));
    h = static_cast<int>(std::min<long>(full_h, subpt_to_px_ceil(bottom, cfg.dpi) + 1));
  }
  Canvas canvas(w, h, cfg.background);

  const long two_dpi = 2L * cfg.dpi;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const long y0 = (static_cast<long>(cfg.margin_y_pt) + static_cast<long>(li) * cfg.line_height_pt) * 9;
    for (std::size_t ci = 0; ci < lines[li].size(); ++ci) {
      const char32_t cp = lines[li][ci];
      if (cp == U' ') continue;
      const Glyph& g = glyph(cp);
      const long x0 = static_cast<long>(cfg.margin_x_pt) * 9 + static_cast<long>(ci) * advance;
      const long gx1 = x0 + kGlyphWidth * fs;
      const long gy0 = y0 + kGlyphTop * fs;
      const long gy1 = gy0 + kGlyphRows * fs;
      const long px0 = subpt_to_px_floor(x0, cfg.dpi), px1 = std::min<long>(w, subpt_to_px_ceil(gx1, cfg.dpi));
      const long py0 = subpt_to_px_floor(gy0, cfg.dpi), py1 = std::min<long>(h, subpt_to_px_ceil(gy1, cfg.dpi));
      for (long py = py0; py < py1; ++py) {
        // Sample each pixel at its centre, exact in integer arithmetic.
        const long ny = (2 * py + 1) * 648 - two_dpi * gy0;
        if (ny < 0) continue;
        const int row = static_cast<int>(ny / (two_dpi * fs));
        for (long px = px0; px < px1; ++px) {
          const long nx = (2 * px + 1) * 648 - two_dpi * x0;
          if (nx < 0) continue;
          const int col = static_cast<int>(nx / (two_dpi * fs));
          if (g.ink(col, row)) canvas.at(px, py) = cfg.font_color;
        }
      }
    }
  }
  return crop_or_keep(std::move(canvas), cfg);
}

struct LoadedFont {
  std::vector<unsigned char> data;
  si_stbtt_fontinfo info{};
};

const LoadedFont& load_font(const std::string& path) {
  static std::mutex mu;
  static std::map<std::string, std::unique_ptr<LoadedFont>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[path];
  if (!slot) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open font: " + path);
    auto f = std::make_unique<LoadedFont>();
    f->data.assign(std::istreambuf_iterator<char>(in), {});
    const int offset = si_stbtt_GetFontOffsetForIndex(f->data.data(), 0);
    if (offset < 0 || !si_stbtt_InitFont(&f->info, f->data.data(), offset))
      throw config_error("not a TrueType font: " + path);
    slot = std::move(f);
  }
  return *slot;
}

RenderedImage render_external(const std::u32string& text, const RenderConfig& cfg) {
  const LoadedFont& font = load_font(cfg.font_path);
  const float px_size = static_cast<float>(cfg.font_size_pt) * static_cast<float>(cfg.dpi) / 72.0f;
  const float scale = si_stbtt_ScaleForPixelHeight(&font.info, px_size);
  int ascent = 0, descent = 0, gap = 0;
  si_stbtt_GetFontVMetrics(&font.info, &ascent, &descent, &gap);
  auto advance_px = [&](char32_t cp) {
    int adv = 0, lsb = 0;
    si_stbtt_GetCodepointHMetrics(&font.info, static_cast<int>(cp), &adv, &lsb);
    return static_cast<long>(adv * scale + 0.5f);
  };
  const long content_w = pt_to_px(cfg.page_width_pt - 2 * cfg.margin_x_pt, cfg.dpi);
  const auto lines = wrap(text, content_w, advance_px);
  auto [w, h] = full_canvas_px(cfg, static_cast<long>(lines.size()));
  Canvas canvas(w, h, cfg.background);
  const long line_px = pt_to_px(cfg.line_height_pt, cfg.dpi);
  const long left = pt_to_px(cfg.margin_x_pt, cfg.dpi);
  const long top = pt_to_px(cfg.margin_y_pt, cfg.dpi);
  std::vector<unsigned char> glyph_buf;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const long baseline = top + static_cast<long>(li) * line_px + static_cast<long>(ascent * scale + 0.5f);
    long pen = left;
    for (char32_t cp : lines[li]) {
      int x0, y0, x1, y1;
      si_stbtt_GetCodepointBitmapBox(&font.info, static_cast<int>(cp), scale, scale, &x0, &y0, &x1, &y1);
      const int gw = x1 - x0, gh = y1 - y0;
      if (gw > 0 && gh > 0) {
        glyph_buf.assign(static_cast<std::size_t>(gw) * static_cast<std::size_t>(gh), 0);
        si_stbtt_MakeCodepointBitmap(&font.info, glyph_buf.data(), gw, gh, gw, scale, scale, static_cast<int>(cp));
        for (int y = 0; y < gh; ++y) {
          for (int x = 0; x < gw; ++x) {
            const long cx = pen + x0 + x, cy = baseline + y0 + y;
            const unsigned cov = glyph_buf[static_cast<std::size_t>(y) * static_cast<std::size_t>(gw) + static_cast<std::size_t>(x)];
            if (cov == 0 || cx < 0 || cy < 0 || cx >= w || cy >= h) continue;
            const int bg = cfg.background, fg = cfg.font_color;
            const int v = bg + ((fg - bg) * static_cast<int>(cov)) / 255;
            auto& dst = canvas.at(cx, cy);
            // Overlapping glyphs keep the darker (more inked) value.
            if (std::abs(v - bg) > std::abs(static_cast<int>(dst) - bg)) dst = static_cast<std::uint8_t>(v);
          }
        }
      }
      pen += advance_px(cp);
    }
  }
  return crop_or_keep(std::move(canvas), cfg);
}

}  // namespace

void RenderConfig::validate() const {
  if (page_width_pt <= 0 || page_height_pt <= 0) throw config_error("render: page size must be positive");
  if (margin_x_pt < 0 || margin_y_pt < 0 || 2 * margin_x_pt >= page_width_pt || 2 * margin_y_pt >= page_height_pt)
    throw config_error("render: margins must be smaller than the page");
  if (dpi != 72 && dpi != 96 && dpi != 144 && dpi != 300) throw config_error("render: dpi must be one of 72, 96, 144, 300");
  if (font_size_pt < 1 || font_size_pt > line_height_pt) throw config_error("render: need 1 <= font_size <= line_height");
  if (lines_per_page(*this) < 1) throw config_error("render: page holds no lines");
  if (glyph_source == GlyphSource::BuiltinBitmap &&
      (page_width_pt - 2 * margin_x_pt) * 9 < font::kCellWidth * font_size_pt)
    throw config_error("render: content width narrower than one glyph");
  if (alignment != "left") throw config_error("render: only left alignment is supported");
  if (indent_first_pt || indent_left_pt || indent_right_pt || spacing_before_pt || spacing_after_pt || border_width_pt)
    throw config_error("render: indents, paragraph spacing, and borders must be 0");
  if (background == font_color) throw config_error("render: font colour equals background");
  if (glyph_source == GlyphSource::ExternalFont && font_path.empty())
    throw config_error("render: external font needs a path");
}

nlohmann::json RenderConfig::to_json() const {
  nlohmann::ordered_json j;
  j["page_size"] = {page_width_pt, page_height_pt};
  j["dpi"] = dpi;
  j["margins"] = {margin_x_pt, margin_y_pt};
  j["background_color"] = hex_color(background);
  j["auto_crop"] = auto_crop;
  j["font_family"] = glyph_source == GlyphSource::BuiltinBitmap ? std::string("builtin") : font_path;
  j["font_size"] = font_size_pt;
  j["line_height"] = line_height_pt;
  j["font_color"] = hex_color(font_color);
  j["alignment"] = alignment == "left" ? "LEFT" : alignment;
  j["indent"] = {indent_first_pt, indent_left_pt, indent_right_pt};
  j["spacing"] = {spacing_before_pt, spacing_after_pt};
  j["border_width"] = border_width_pt;
  return j;
}

RenderConfig RenderConfig::from_json(const nlohmann::json& j) {
  RenderConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "page_size") {
        c.page_width_pt = v.at(0).get<int>();
        c.page_height_pt = v.at(1).get<int>();
      } else if (key == "dpi") {
        c.dpi = v.get<int>();
      } else if (key == "margins") {
        c.margin_x_pt = v.at(0).get<int>();
        c.margin_y_pt = v.at(1).get<int>();
      } else if (key == "background_color") {
        c.background = parse_gray(v, "background_color");
      } else if (key == "auto_crop") {
        c.auto_crop = v.get<bool>();
      } else if (key == "font_family") {
        const auto f = v.get<std::string>();
        if (f == "builtin") {
          c.glyph_source = GlyphSource::BuiltinBitmap;
          c.font_path.clear();
        } else {
          c.glyph_source = GlyphSource::ExternalFont;
          c.font_path = f;
        }
      } else if (key == "font_size") {
        c.font_size_pt = v.get<int>();
      } else if (key == "line_height") {
        c.line_height_pt = v.get<int>();
      } else if (key == "font_color") {
        c.font_color = parse_gray(v, "font_color");
      } else if (key == "alignment") {
        auto a = v.get<std::string>();
        std::transform(a.begin(), a.end(), a.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        c.alignment = a;
      } else if (key == "indent") {
        c.indent_first_pt = v.at(0).get<int>();
        c.indent_left_pt = v.at(1).get<int>();
        c.indent_right_pt = v.at(2).get<int>();
      } else if (key == "spacing") {
        c.spacing_before_pt = v.at(0).get<int>();
        c.spacing_after_pt = v.at(1).get<int>();
      } else if (key == "border_width") {
        c.border_width_pt = v.get<int>();
      } else {
        throw config_error("render: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("render: ") + e.what());
  }
  c.validate();
  return c;
}

std::string canonical_string(const RenderConfig& c) {
  std::ostringstream os;
  os << "v1|page=" << c.page_width_pt << 'x' << c.page_height_pt << "|dpi=" << c.dpi << "|margin=" << c.margin_x_pt
     << ',' << c.margin_y_pt << "|bg=" << int(c.background) << "|crop=" << int(c.auto_crop) << "|size="
     << c.font_size_pt << "|line=" << c.line_height_pt << "|fg=" << int(c.font_color) << "|align=" << c.alignment
     << "|indent=" << c.indent_first_pt << ',' << c.indent_left_pt << ',' << c.indent_right_pt
     << "|spacing=" << c.spacing_before_pt << ',' << c.spacing_after_pt << "|border=" << c.border_width_pt
     << "|glyphs=" << (c.glyph_source == GlyphSource::BuiltinBitmap ? "builtin" : "external:" + c.font_path);
  return os.str();
}

std::uint64_t config_fingerprint(const RenderConfig& cfg) { return fnv1a64(canonical_string(cfg)); }

namespace {
std::atomic<std::uint64_t> g_render_calls{0};
}

std::uint64_t render_call_count() noexcept { return g_render_calls.load(); }

RenderedImage render(std::string_view text, const RenderConfig& cfg) {
  g_render_calls.fetch_add(1);
  cfg.validate();
  const auto cps = decode_utf8(text);
  if (std::all_of(cps.begin(), cps.end(), [](char32_t c) { return c == U' ' || c == U'\n' || c == U'\t'; }))
    throw data_error("render: empty text");
  if (cfg.glyph_source == GlyphSource::ExternalFont) return render_external(cps, cfg);
  return render_builtin(cps, cfg);
}

RenderedImage render(std::span<const TokenId> tokens, const Vocabulary& vocab, const RenderConfig& cfg) {
  if (tokens.empty()) throw data_error("render: empty token sequence");
  return render(vocab.detokenize(tokens), cfg);
}

}  // namespace vlr
