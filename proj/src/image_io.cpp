#include "halo/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "halo/kernels.hpp"

namespace halo::img {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

Tensor read_pgm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, Err::Io, "cannot open " + path);
  char magic[3] = {0};
  if (std::fscanf(f.get(), "%2s", magic) != 1) fail(Err::Load, "bad PGM header: " + path);
  const bool binary = std::strcmp(magic, "P5") == 0;
  if (!binary && std::strcmp(magic, "P2") != 0) fail(Err::Load, "not a PGM file: " + path);
  auto next_int = [&]() {
    int v, ch;
    // skip whitespace and comments
    for (;;) {
      ch = std::fgetc(f.get());
      if (ch == '#') {
        while (ch != '\n' && ch != EOF) ch = std::fgetc(f.get());
      } else if (!std::isspace(ch)) {
        std::ungetc(ch, f.get());
        break;
      }
    }
    if (std::fscanf(f.get(), "%d", &v) != 1) fail(Err::Load, "bad PGM data: " + path);
    return v;
  };
  const int w = next_int(), h = next_int(), maxv = next_int();
  require(w > 0 && h > 0 && maxv > 0 && maxv < 65536, Err::Load, "bad PGM dims: " + path);
  Tensor out({h, w});
  if (binary) {
    std::fgetc(f.get());  // single whitespace after maxval
    const int bytes = maxv > 255 ? 2 : 1;
    std::vector<uint8_t> buf(static_cast<size_t>(w) * bytes);
    for (int y = 0; y < h; ++y) {
      if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
        fail(Err::Load, "truncated PGM: " + path);
      for (int x = 0; x < w; ++x) {
        const int v = bytes == 2 ? (buf[2 * x] << 8) | buf[2 * x + 1] : buf[x];
        out.at(y, x) = static_cast<double>(v) / maxv;
      }
    }
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(y, x) = static_cast<double>(next_int()) / maxv;
  }
  return out;
}

Tensor read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, Err::Io, "cannot open " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
    fail(Err::Load, "not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Err::Load, "PNG decode failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  png_read_update_info(png, info);
  const int channels = static_cast<int>(png_get_channels(png, info));
  std::vector<uint8_t> data(static_cast<size_t>(h) * w * channels);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = data.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const uint8_t* px = data.data() + (static_cast<size_t>(y) * w + x) * channels;
      double v;
      if (channels >= 3)
        v = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
      else
        v = px[0] / 255.0;
      out.at(y, x) = v;
    }
  return out;
}

void write_png(const std::string& path, int h, int w, int channels, const uint8_t* data) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, Err::Io, "cannot open for write: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Err::Io, "PNG encode failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(data + static_cast<size_t>(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

uint8_t to_byte(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void png_string_write(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

struct MemReader {
  const std::string* bytes;
  size_t pos;
};

void png_string_read(png_structp png, png_bytep data, png_size_t len) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + len > r->bytes->size()) png_error(png, "short read");
  std::memcpy(data, r->bytes->data() + r->pos, len);
  r->pos += len;
}

}  // namespace

Tensor read_gray(const std::string& path) {
  if (has_suffix(path, ".pgm")) return read_pgm(path);
  if (has_suffix(path, ".png")) return read_png(path);
  fail(Err::Load, "unsupported image format (want .png or .pgm): " + path);
}

void write_gray_png(const std::string& path, const Tensor& image) {
  const int h = image.dim(0), w = image.dim(1);
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < image.size(); ++i) buf[static_cast<size_t>(i)] = to_byte(image[i]);
  write_png(path, h, w, 1, buf.data());
}

void write_gray_pgm(const std::string& path, const Tensor& image) {
  const int h = image.dim(0), w = image.dim(1);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, Err::Io, "cannot open for write: " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", w, h);
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < image.size(); ++i) buf[static_cast<size_t>(i)] = to_byte(image[i]);
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
    fail(Err::Io, "short write: " + path);
}

void write_rgb_png(const std::string& path, const Tensor& rgb) {
  const int h = rgb.dim(1), w = rgb.dim(2);
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<size_t>(y) * w + x) * 3 + c] = to_byte(rgb.at(c, y, x));
  write_png(path, h, w, 3, buf.data());
}

std::string encode_gray_png(const Tensor& image) {
  const int h = image.dim(0), w = image.dim(1);
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < image.size(); ++i) buf[static_cast<size_t>(i)] = to_byte(image[i]);
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Err::Io, "in-memory PNG encode failed");
  }
  png_set_write_fn(png, &out, png_string_write, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = buf.data() + static_cast<size_t>(y) * w;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Tensor decode_gray_png(const std::string& bytes) {
  require(bytes.size() > 8 && !png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8),
          Err::Load, "decode_gray_png: not PNG data");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Err::Load, "in-memory PNG decode failed");
  }
  MemReader reader{&bytes, 0};
  png_set_read_fn(png, &reader, png_string_read);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  png_read_update_info(png, info);
  const int channels = static_cast<int>(png_get_channels(png, info));
  std::vector<uint8_t> data(static_cast<size_t>(h) * w * channels);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = data.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  Tensor out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const uint8_t* px = data.data() + (static_cast<size_t>(y) * w + x) * channels;
      out.at(y, x) = channels >= 3 ? (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0
                                   : px[0] / 255.0;
    }
  return out;
}

Tensor resize_bilinear(const Tensor& image, int h, int w) {
  Tensor out({h, w});
  kernels::resize_bilinear_forward(image.data(), 1, image.dim(0), image.dim(1), out.data(), h, w);
  return out;
}

Mask resize_nearest(const Mask& mask, int h, int w) {
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(mask.h - 1, static_cast<int>((y + 0.5) * mask.h / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(mask.w - 1, static_cast<int>((x + 0.5) * mask.w / w));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace halo::img
