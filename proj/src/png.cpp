#include <array>
#include <fstream>

#include <zlib.h>

#include "vlr/error.hpp"
#include "vlr/render.hpp"

namespace vlr {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

void put_chunk(std::ofstream& os, const char type[4], const std::string& data) {
  std::string buf;
  put_u32(buf, static_cast<std::uint32_t>(data.size()));
  buf.append(type, 4);
  buf += data;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(buf.data() + 4), static_cast<uInt>(buf.size() - 4));
  put_u32(buf, static_cast<std::uint32_t>(crc));
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void write_png(const std::string& path, const RenderedImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write " + path);
  static constexpr std::array<unsigned char, 8> sig = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  os.write(reinterpret_cast<const char*>(sig.data()), sig.size());

  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string{8, 0, 0, 0, 0};  // bit depth 8, grayscale, deflate, no filter, no interlace
  put_chunk(os, "IHDR", ihdr);

  std::string raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (static_cast<std::size_t>(img.width) + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.append(reinterpret_cast<const char*>(&img.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width)]),
               static_cast<std::size_t>(img.width));
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string z(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw data_error("png: deflate failed");
  z.resize(len);
  put_chunk(os, "IDAT", z);
  put_chunk(os, "IEND", {});
}

void write_pgm(const std::string& path, const RenderedImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write " + path);
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

}  // namespace vlr
