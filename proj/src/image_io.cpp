#include "strokescope/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <png.h>

#include "strokescope/errors.hpp"

namespace strokescope {

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

Bytes encode_png(int w, int h, int color_type, int channels, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(w) * h * channels) throw DimensionError("PNG buffer size mismatch");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  Bytes out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

} // namespace

std::vector<std::uint8_t> to_gray8(const RasterImage& img) {
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = to_byte(1.0 - img[i]);
  return out;
}

Bytes encode_png_gray(const RasterImage& img) {
  return encode_png(img.w(), img.h(), PNG_COLOR_TYPE_GRAY, 1, to_gray8(img));
}

Bytes encode_png_rgb(int w, int h, std::span<const std::uint8_t> rgb) {
  return encode_png(w, h, PNG_COLOR_TYPE_RGB, 3, rgb);
}

Bytes encode_pgm(const RasterImage& img) {
  const std::string header = "P5\n" + std::to_string(img.w()) + " " + std::to_string(img.h()) + "\n255\n";
  Bytes out(header.begin(), header.end());
  const auto gray = to_gray8(img);
  out.insert(out.end(), gray.begin(), gray.end());
  return out;
}

std::vector<std::uint8_t> heatmap_rgb(const Grid& values) {
  double peak = 0.0;
  for (double v : values.values()) peak = std::max(peak, std::fabs(v));
  std::vector<std::uint8_t> rgb(values.size() * 3);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double s = peak > 0.0 ? values[i] / peak : 0.0;
    // Positive towards red, negative towards blue, zero white.
    const double r = s < 0.0 ? 1.0 + s : 1.0;
    const double b = s > 0.0 ? 1.0 - s : 1.0;
    const double g = 1.0 - std::fabs(s);
    rgb[3 * i] = to_byte(r);
    rgb[3 * i + 1] = to_byte(g);
    rgb[3 * i + 2] = to_byte(b);
  }
  return rgb;
}

std::pair<int, int> png_dimensions(std::span<const std::uint8_t> png) {
  static constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (png.size() < 24 || std::memcmp(png.data(), kSignature, 8) != 0 || std::memcmp(png.data() + 12, "IHDR", 4) != 0)
    throw IoError("not a PNG stream");
  auto be32 = [&](std::size_t at) {
    return static_cast<int>((png[at] << 24) | (png[at + 1] << 16) | (png[at + 2] << 8) | png[at + 3]);
  };
  return {be32(16), be32(20)};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

Bytes base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  Bytes out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value(c);
    if (v < 0) throw IoError("invalid base64 input");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

} // namespace strokescope
