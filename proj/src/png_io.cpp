#include "inpaint360/png_io.hpp"

#include <cstdio>
#include <memory>

#include <png.h>

#include "inpaint360/errors.hpp"

namespace inpaint360 {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct Raw {
  int width = 0, height = 0, color_type = 0, bit_depth = 0;
  std::vector<std::uint8_t> rows;  // packed rows as stored (16-bit big endian)
  std::vector<std::array<std::uint8_t, 3>> palette;
};

void write_raw(const std::string& path, int width, int height, int color_type, int bit_depth,
               const std::vector<std::uint8_t>& rows, const std::vector<std::array<std::uint8_t, 3>>* palette) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> pal;
  if (palette) {
    for (const auto& c : *palette) pal.push_back({c[0], c[1], c[2]});
    png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
  }
  png_write_info(png, info);
  const std::size_t stride = rows.size() / height;
  for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(rows.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Raw read_raw(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw MissingInput("missing image " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  Raw r;
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.color_type = png_get_color_type(png, info);
  r.bit_depth = png_get_bit_depth(png, info);
  if (r.color_type == PNG_COLOR_TYPE_PALETTE) {
    png_colorp pal = nullptr;
    int n = 0;
    png_get_PLTE(png, info, &pal, &n);
    for (int i = 0; i < n; ++i) r.palette.push_back({pal[i].red, pal[i].green, pal[i].blue});
    if (r.bit_depth < 8) png_set_packing(png);
  }
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  r.rows.resize(stride * r.height);
  for (int y = 0; y < r.height; ++y) png_read_row(png, r.rows.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

}  // namespace

void write_png_rgb(const std::string& path, const RgbImage& img) {
  if (img.channels() != 3) throw DimensionMismatch("write_png_rgb: need 3 channels");
  std::vector<std::uint8_t> rows(img.data().size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = quantize8(img.data()[i]);
  write_raw(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB, 8, rows, nullptr);
}

RgbImage read_png_rgb(const std::string& path) {
  const Raw r = read_raw(path);
  if (r.color_type != PNG_COLOR_TYPE_RGB || r.bit_depth != 8) throw IoError(path + ": expected 8-bit RGB");
  RgbImage img(r.width, r.height, 3);
  for (std::size_t i = 0; i < r.rows.size(); ++i) img.data()[i] = r.rows[i] / 255.0f;
  return img;
}

void write_png_gray8(const std::string& path, const Image<std::uint8_t>& img) {
  write_raw(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 8, img.storage(), nullptr);
}

Image<std::uint8_t> read_png_gray8(const std::string& path) {
  const Raw r = read_raw(path);
  if (r.color_type != PNG_COLOR_TYPE_GRAY || r.bit_depth != 8) throw IoError(path + ": expected 8-bit gray");
  Image<std::uint8_t> img(r.width, r.height, 1);
  img.storage() = r.rows;
  return img;
}

void write_png_gray16(const std::string& path, const Image<std::uint16_t>& img) {
  std::vector<std::uint8_t> rows(img.data().size() * 2);
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    rows[2 * i] = static_cast<std::uint8_t>(img.data()[i] >> 8);
    rows[2 * i + 1] = static_cast<std::uint8_t>(img.data()[i] & 0xff);
  }
  write_raw(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 16, rows, nullptr);
}

Image<std::uint16_t> read_png_gray16(const std::string& path) {
  const Raw r = read_raw(path);
  if (r.color_type != PNG_COLOR_TYPE_GRAY || r.bit_depth != 16) throw IoError(path + ": expected 16-bit gray");
  Image<std::uint16_t> img(r.width, r.height, 1);
  for (std::size_t i = 0; i < img.data().size(); ++i)
    img.data()[i] = static_cast<std::uint16_t>((r.rows[2 * i] << 8) | r.rows[2 * i + 1]);
  return img;
}

void write_png_palette(const std::string& path, const Image<std::uint8_t>& idx,
                       const std::vector<std::array<std::uint8_t, 3>>& palette) {
  if (palette.empty() || palette.size() > 256) throw IoError("palette must have 1..256 entries");
  for (auto v : idx.data())
    if (v >= palette.size()) throw IoError("palette index out of range");
  write_raw(path, idx.width(), idx.height(), PNG_COLOR_TYPE_PALETTE, 8, idx.storage(), &palette);
}

Image<std::uint8_t> read_png_palette(const std::string& path) {
  const Raw r = read_raw(path);
  if (r.color_type != PNG_COLOR_TYPE_PALETTE) throw IoError(path + ": expected palette PNG");
  Image<std::uint8_t> img(r.width, r.height, 1);
  img.storage() = r.rows;
  return img;
}

void write_mask_png(const std::string& path, const Mask& mask) {
  Image<std::uint8_t> g(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < g.data().size(); ++i) g.data()[i] = mask.data()[i] ? 255 : 0;
  write_png_gray8(path, g);
}

Mask read_mask_png(const std::string& path) {
  Image<std::uint8_t> g = read_png_gray8(path);
  for (auto& v : g.data()) {
    if (v != 0 && v != 255) throw IoError(path + ": mask values must be 0 or 255");
    v = v ? 1 : 0;
  }
  return g;
}

RgbImage quantize_rgb(const RgbImage& img) {
  RgbImage out = img;
  for (auto& v : out.data()) v = quantize8(v) / 255.0f;
  return out;
}

}  // namespace inpaint360
