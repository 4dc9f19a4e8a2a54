#include "mvsuq/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace mvsuq {

uint8_t luma601(uint8_t r, uint8_t g, uint8_t b) {
  return (uint8_t)std::lround(0.299 * r + 0.587 * g + 0.114 * b);
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

int pnm_token(FILE* f) {
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (!std::isspace(c)) {
      break;
    }
    c = std::fgetc(f);
  }
  if (c == EOF) return -1;
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return v;
}

Raster8 read_pnm(FILE* f, bool color, const std::string& path) {
  const int w = pnm_token(f), h = pnm_token(f), maxval = pnm_token(f);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    fail(Err::BadFormat, "unsupported PNM header in " + path);
  Raster8 img(w, h);
  const size_t n = (size_t)w * h * (color ? 3 : 1);
  std::vector<uint8_t> buf(n);
  if (std::fread(buf.data(), 1, n, f) != n) fail(Err::BadFormat, "truncated PNM " + path);
  if (color) {
    for (size_t i = 0; i < (size_t)w * h; ++i)
      img.data[i] = luma601(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
  } else {
    std::memcpy(img.data.data(), buf.data(), n);
  }
  return img;
}

Raster8 read_png(FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(Err::IoError, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(Err::IoError, "libpng init failed");
  }
  std::vector<uint8_t> rgba;
  png_uint_32 w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Err::BadFormat, "corrupt PNG " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  png_set_add_alpha(png, 0xFF, PNG_FILLER_AFTER);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  rgba.resize((size_t)w * h * 4);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = rgba.data() + (size_t)y * w * 4;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Raster8 img((int)w, (int)h);
  for (size_t i = 0; i < (size_t)w * h; ++i)
    img.data[i] = luma601(rgba[4 * i], rgba[4 * i + 1], rgba[4 * i + 2]);
  return img;
}

}  // namespace

Raster8 read_image_gray(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail(Err::IoError, "cannot open " + path);
  uint8_t magic[8] = {};
  if (std::fread(magic, 1, 2, f.get()) != 2) fail(Err::BadFormat, "empty image " + path);
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6'))
    return read_pnm(f.get(), magic[1] == '6', path);
  if (magic[0] == 0x89 && magic[1] == 'P') {
    std::rewind(f.get());
    return read_png(f.get(), path);
  }
  fail(Err::BadFormat, "unrecognized image format " + path);
}

void write_pgm(const std::string& path, const Raster8& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(Err::IoError, "cannot write " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", img.width, img.height);
  if (std::fwrite(img.data.data(), 1, img.data.size(), f.get()) != img.data.size())
    fail(Err::IoError, "short write to " + path);
}

void write_png_gray(const std::string& path, const Raster8& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(Err::IoError, "cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    fail(Err::IoError, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Err::IoError, "PNG write failed for " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.data.data() + (size_t)y * img.width);
  png_write_image(png, rows.data());
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mvsuq
