#include "satstereo/image.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <png.h>

#include "satstereo/errors.hpp"

namespace satstereo {

GrayImage::GrayImage(int width, int height, float fill, float max_value)
    : GrayImage(width, height,
                std::vector<float>(static_cast<std::size_t>(std::max(width, 0)) *
                                       static_cast<std::size_t>(std::max(height, 0)),
                                   fill),
                max_value) {}

GrayImage::GrayImage(int width, int height, std::vector<float> pixels, float max_value)
    : width_(width), height_(height), max_value_(max_value), pixels_(std::move(pixels)) {
  if (width < 0 || height < 0 ||
      pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ValidationError("image dimensions do not match pixel buffer");
  }
}

float GrayImage::clamped(int x, int y) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y);
}

float GrayImage::bilinear(double x, double y) const {
  if (!contains(x, y)) return std::numeric_limits<float>::quiet_NaN();
  const int x0 = std::min(static_cast<int>(x), width_ - 1);
  const int y0 = std::min(static_cast<int>(y), height_ - 1);
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

namespace {

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    int v = 0;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      if (!(in >> v)) throw IoError("malformed PGM header in " + path.string());
      return v;
    }
  };
  if (magic != "P5" && magic != "P2") throw IoError("not a grayscale PGM: " + path.string());
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError("unsupported PGM geometry in " + path.string());
  }
  std::vector<float> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  if (magic == "P2") {
    for (auto& v : px) v = static_cast<float>(next_int());
  } else {
    in.get();  // single whitespace after maxval
    const bool wide = maxval > 255;
    std::vector<unsigned char> raw(px.size() * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw IoError("truncated PGM data in " + path.string());
    }
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = wide ? static_cast<float>((raw[2 * i] << 8) | raw[2 * i + 1])
                   : static_cast<float>(raw[i]);
    }
  }
  return GrayImage(w, h, std::move(px), static_cast<float>(maxval));
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

GrayImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed to decode " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG must be single-channel grayscale: " + path.string());
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_swap(png);  // host order on little-endian
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raw(rowbytes * static_cast<std::size_t>(h));
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<float> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    const unsigned char* row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < w; ++x) {
      float v;
      if (depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, row + 2 * x, 2);
        v = s;
      } else {
        v = row[x];
      }
      px[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  return GrayImage(w, h, std::move(px), depth == 16 ? 65535.0f : 255.0f);
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open image " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  return read_pgm(path);
}

void write_image(const GrayImage& image, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ValidationError("bit depth must be 8 or 16");
  const int w = image.width();
  const int h = image.height();
  const float maxv = bit_depth == 8 ? 255.0f : 65535.0f;
  auto quant = [&](float v) {
    return static_cast<unsigned>(std::lround(std::clamp(v, 0.0f, maxv)));
  };

  if (path.extension() == ".png") {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write image " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw IoError("libpng failed to encode " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
                 bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * (bit_depth / 8));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const unsigned v = quant(image.at(x, y));
        if (bit_depth == 16) {
          row[2 * x] = static_cast<unsigned char>(v >> 8);
          row[2 * x + 1] = static_cast<unsigned char>(v & 0xFF);
        } else {
          row[x] = static_cast<unsigned char>(v);
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P5\n" << w << ' ' << h << '\n' << (bit_depth == 8 ? 255 : 65535) << '\n';
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const unsigned v = quant(image.at(x, y));
      if (bit_depth == 16) {
        out.put(static_cast<char>(v >> 8));
        out.put(static_cast<char>(v & 0xFF));
      } else {
        out.put(static_cast<char>(v));
      }
    }
  }
}

}  // namespace satstereo
