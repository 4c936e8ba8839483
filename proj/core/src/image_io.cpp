#include "lsnet/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace lsnet {

namespace {

constexpr float kInv255 = 1.0f / 255.0f;

Tensor rgb_bytes_to_tensor(const std::vector<unsigned char>& rgb, int h, int w) {
  Tensor t(TensorShape{1, 3, h, w});
  for (int c = 0; c < 3; ++c) {
    float* plane = t.plane(0, c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        plane[static_cast<std::size_t>(y) * w + x] =
            static_cast<float>(rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]) * kInv255;
      }
    }
  }
  return t;
}

unsigned char to_byte(float v) {
  const float clamped = std::min(1.0f, std::max(0.0f, v));
  return static_cast<unsigned char>(std::lround(clamped * 255.0f));
}

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngReadCloser() {
    if (png != nullptr) png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
    if (file != nullptr) std::fclose(file);
  }
};

std::vector<unsigned char> read_png_rgb(const std::string& path, int* out_h, int* out_w) {
  PngReadCloser ctx;
  ctx.file = std::fopen(path.c_str(), "rb");
  if (ctx.file == nullptr) throw IoError("cannot open '" + path + "' for reading");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, ctx.file) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("'" + path + "' is not a PNG file");
  }
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (ctx.png == nullptr) throw IoError("libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (ctx.info == nullptr) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) {
    throw IoError("failed to decode PNG '" + path + "'");
  }
  png_init_io(ctx.png, ctx.file);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color_type = png_get_color_type(ctx.png, ctx.info);
  if (bit_depth == 16) {
    throw IoError("'" + path + "': unsupported bit depth 16 (8-bit images only)");
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(ctx.png);
  }
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  std::vector<unsigned char> rgb(static_cast<std::size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = rgb.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  *out_h = static_cast<int>(h);
  *out_w = static_cast<int>(w);
  return rgb;
}

std::vector<unsigned char> read_ppm_rgb(const std::string& path, int* out_h, int* out_w) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open '" + path + "' for reading");
  std::string magic;
  file >> magic;
  if (magic != "P6") throw IoError("'" + path + "': unsupported PPM magic '" + magic + "'");
  auto next_int = [&](const char* what) {
    // Skip whitespace and '#' comment lines between header fields.
    int ch;
    while ((ch = file.peek()) != EOF) {
      if (ch == '#') {
        std::string comment;
        std::getline(file, comment);
      } else if (std::isspace(ch)) {
        file.get();
      } else {
        break;
      }
    }
    long v = -1;
    if (!(file >> v) || v < 0) {
      throw IoError("'" + path + "': bad PPM header (" + what + ")");
    }
    return static_cast<int>(v);
  };
  const int w = next_int("width");
  const int h = next_int("height");
  const int maxval = next_int("maxval");
  if (maxval != 255) {
    throw IoError("'" + path + "': unsupported bit depth (maxval " + std::to_string(maxval) +
                  ", expected 255)");
  }
  file.get();  // single whitespace after maxval
  std::vector<unsigned char> rgb(static_cast<std::size_t>(w) * h * 3);
  file.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (static_cast<std::size_t>(file.gcount()) != rgb.size()) {
    throw IoError("'" + path + "': truncated PPM payload");
  }
  *out_h = h;
  *out_w = w;
  return rgb;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                suffix) == 0;
}

std::vector<unsigned char> read_rgb_any(const std::string& path, int* h, int* w) {
  if (has_suffix(path, ".ppm") || has_suffix(path, ".PPM")) return read_ppm_rgb(path, h, w);
  return read_png_rgb(path, h, w);
}

}  // namespace

Tensor load_image(const std::string& path) {
  int h = 0, w = 0;
  const std::vector<unsigned char> rgb = read_rgb_any(path, &h, &w);
  return rgb_bytes_to_tensor(rgb, h, w);
}

std::pair<Tensor, Tensor> load_image_pair(const std::string& path_a, const std::string& path_b) {
  Tensor a = load_image(path_a);
  Tensor b = load_image(path_b);
  if (!a.same_shape(b)) {
    throw IoError("image pair size mismatch: '" + path_a + "' is " + a.shape().str() + ", '" +
                  path_b + "' is " + b.shape().str());
  }
  return {std::move(a), std::move(b)};
}

Tensor load_mask(const std::string& path) {
  int h = 0, w = 0;
  const std::vector<unsigned char> rgb = read_rgb_any(path, &h, &w);
  Tensor mask(TensorShape{1, 1, h, w});
  float* plane = mask.plane(0, 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) {
    plane[i] = rgb[i * 3] >= 128 ? 1.0f : 0.0f;
  }
  return mask;
}

namespace {

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngWriteCloser() {
    if (png != nullptr) png_destroy_write_struct(&png, info != nullptr ? &info : nullptr);
    if (file != nullptr) std::fclose(file);
  }
};

void write_png(const std::string& path, const std::vector<unsigned char>& bytes, int h, int w,
               int channels) {
  PngWriteCloser ctx;
  ctx.file = std::fopen(path.c_str(), "wb");
  if (ctx.file == nullptr) throw IoError("cannot open '" + path + "' for writing");
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (ctx.png == nullptr) throw IoError("libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (ctx.info == nullptr) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) {
    throw IoError("failed to encode PNG '" + path + "'");
  }
  png_init_io(ctx.png, ctx.file);
  png_set_IHDR(ctx.png, ctx.info, w, h, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * w * channels);
  }
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

void check_image_shape(const Tensor& image, int channels, const char* what) {
  const auto& sh = image.shape();
  if (sh.n != 1 || sh.c != channels || sh.h < 1 || sh.w < 1) {
    throw ShapeError(std::string(what) + ": expected (1, " + std::to_string(channels) +
                     ", H, W), got " + sh.str());
  }
}

}  // namespace

void save_png_gray(const std::string& path, const Tensor& image) {
  check_image_shape(image, 1, "save_png_gray");
  const int h = image.shape().h;
  const int w = image.shape().w;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w);
  const float* plane = image.plane(0, 0);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(plane[i]);
  write_png(path, bytes, h, w, 1);
}

void save_png_rgb(const std::string& path, const Tensor& image) {
  check_image_shape(image, 3, "save_png_rgb");
  const int h = image.shape().h;
  const int w = image.shape().w;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
  for (int c = 0; c < 3; ++c) {
    const float* plane = image.plane(0, c);
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) {
      bytes[i * 3 + c] = to_byte(plane[i]);
    }
  }
  write_png(path, bytes, h, w, 3);
}

void save_ppm_rgb(const std::string& path, const Tensor& image) {
  check_image_shape(image, 3, "save_ppm_rgb");
  const int h = image.shape().h;
  const int w = image.shape().w;
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  file << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int c = 0; c < 3; ++c) {
      const float* plane = image.plane(0, c);
      for (int x = 0; x < w; ++x) {
        row[static_cast<std::size_t>(x) * 3 + c] = to_byte(plane[static_cast<std::size_t>(y) * w + x]);
      }
    }
    file.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!file) throw IoError("failed writing '" + path + "'");
}

}  // namespace lsnet
