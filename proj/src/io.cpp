#include "svc/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace svc::io {
namespace {

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)); }

struct PngWriteBuffer {
  std::vector<std::uint8_t> bytes;
};

void png_write_to_buffer(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->bytes.insert(buf->bytes.end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct PngReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void png_read_from_buffer(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->size) png_error(png, "truncated PNG data");
  std::memcpy(out, cur->data + cur->pos, len);
  cur->pos += len;
}

void png_error_throw(png_structp, png_const_charp msg) { throw std::runtime_error(msg); }

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f32_le(std::vector<unsigned char>& out, float f) { put_u32_le(out, std::bit_cast<std::uint32_t>(f)); }

}  // namespace

std::vector<std::uint8_t> encode_png(const Tensorf& img) {
  require(img.c == 1 || img.c == 3, "encode_png: need 1 or 3 channels");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, nullptr);
  png_infop info = png_create_info_struct(png);
  PngWriteBuffer buf;
  try {
    png_set_write_fn(png, &buf, png_write_to_buffer, png_flush_noop);
    png_set_IHDR(png, info, img.w, img.h, 8, img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.w) * img.c);
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x)
        for (int c = 0; c < img.c; ++c) row[static_cast<std::size_t>(x) * img.c + c] = to_byte(img(c, y, x));
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return std::move(buf.bytes);
}

Tensorf decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw ValidationError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, nullptr);
  png_infop info = png_create_info_struct(png);
  PngReadCursor cur{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size(), 0};
  Tensorf out;
  try {
    png_set_read_fn(png, &cur, png_read_from_buffer);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) throw std::runtime_error("unsupported PNG channel count");
    out = Tensorf(channels, h, w);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < channels; ++c)
          out(c, y, x) = row[static_cast<std::size_t>(x) * channels + c] / 255.f;
    }
  } catch (const std::runtime_error& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(std::string("PNG decode failed: ") + e.what());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Tensorf read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "missing file");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const ValidationError& e) {
    throw LoadError(path.string(), e.what());
  }
}

void write_png(const std::filesystem::path& path, const Tensorf& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_svcf(const std::filesystem::path& path, const FlowField& flow) {
  std::vector<unsigned char> buf;
  buf.reserve(12 + static_cast<std::size_t>(flow.height()) * flow.width() * 8);
  buf.insert(buf.end(), {'S', 'V', 'C', 'F'});
  put_u32_le(buf, static_cast<std::uint32_t>(flow.width()));
  put_u32_le(buf, static_cast<std::uint32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      put_f32_le(buf, flow(0, y, x));
      put_f32_le(buf, flow(1, y, x));
    }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

FlowField read_svcf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "missing file");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "SVCF", 4) != 0) throw LoadError(path.string(), "bad SVCF magic");
  const std::uint32_t w = read_u32_le(buf.data() + 4);
  const std::uint32_t h = read_u32_le(buf.data() + 8);
  if (buf.size() != 12 + static_cast<std::size_t>(w) * h * 8) throw LoadError(path.string(), "SVCF size mismatch");
  FlowField flow(static_cast<int>(h), static_cast<int>(w));
  const unsigned char* p = buf.data() + 12;
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      flow(0, y, x) = std::bit_cast<float>(read_u32_le(p));
      flow(1, y, x) = std::bit_cast<float>(read_u32_le(p + 4));
      p += 8;
    }
  return flow;
}

std::string frame_name(const char* prefix, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d.%s", prefix, index, ext);
  return buf;
}

}  // namespace svc::io
