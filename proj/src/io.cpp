#include "aquaforge/io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace aquaforge {

namespace {

[[noreturn]] void io_fail(const std::filesystem::path& path, const std::string& msg) {
  throw std::runtime_error(path.string() + ": " + msg);
}

void put_u32le(std::string& buf, std::uint32_t v) {
  buf.push_back(char(v & 0xff));
  buf.push_back(char((v >> 8) & 0xff));
  buf.push_back(char((v >> 16) & 0xff));
  buf.push_back(char((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

void put_f32le(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32le(buf, bits);
}

float get_f32le(const unsigned char* p) {
  std::uint32_t bits = get_u32le(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_fail(path, "cannot open for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) io_fail(path, "short write");
}

std::string aqf_bytes(Index rows, Index cols, int channels,
                      const std::function<float(int, Index, Index)>& sample) {
  std::string buf;
  buf.reserve(16 + std::size_t(rows) * std::size_t(cols) * std::size_t(channels) * 4);
  buf += "AQF1";
  put_u32le(buf, std::uint32_t(rows));
  put_u32le(buf, std::uint32_t(cols));
  put_u32le(buf, std::uint32_t(channels));
  for (Index y = 0; y < rows; ++y)
    for (Index x = 0; x < cols; ++x)
      for (int c = 0; c < channels; ++c) put_f32le(buf, sample(c, y, x));
  return buf;
}

}  // namespace

ImageRgb read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    io_fail(path, std::string("png read failed: ") + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    io_fail(path, "png read failed: " + msg);
  }
  ImageRgb img(Index(image.height), Index(image.width));
  const unsigned char* p = buffer.data();
  for (Index y = 0; y < img.rows(); ++y)
    for (Index x = 0; x < img.cols(); ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = double(*p++) / 255.0;
  return img;
}

void write_png(const std::filesystem::path& path, const ImageRgb& img) {
  require_finite(img, "write_png");
  std::vector<unsigned char> buffer(std::size_t(img.rows()) * std::size_t(img.cols()) * 3);
  unsigned char* p = buffer.data();
  for (Index y = 0; y < img.rows(); ++y)
    for (Index x = 0; x < img.cols(); ++x)
      for (int c = 0; c < 3; ++c) {
        double v = std::min(1.0, std::max(0.0, img(c, y, x)));
        *p++ = (unsigned char)(std::lround(v * 255.0));
      }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(img.cols());
  image.height = png_uint_32(img.rows());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr))
    io_fail(path, std::string("png write failed: ") + image.message);
}

void write_aqf(const std::filesystem::path& path, const Plane& field) {
  write_bytes(path, aqf_bytes(field.rows(), field.cols(), 1,
                              [&](int, Index y, Index x) { return float(field(y, x)); }));
}

void write_aqf(const std::filesystem::path& path, const Field3& field) {
  write_bytes(path, aqf_bytes(field.rows(), field.cols(), 3,
                              [&](int c, Index y, Index x) { return float(field(c, y, x)); }));
}

namespace {

struct AqfHeader {
  Index rows, cols;
  int channels;
};

AqfHeader read_aqf_header(const std::filesystem::path& path,
                          const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "AQF1", 4) != 0)
    io_fail(path, "not an AQF1 file");
  AqfHeader h{Index(get_u32le(bytes.data() + 4)), Index(get_u32le(bytes.data() + 8)),
              int(get_u32le(bytes.data() + 12))};
  std::size_t need = 16 + std::size_t(h.rows) * std::size_t(h.cols) * std::size_t(h.channels) * 4;
  if (bytes.size() != need) io_fail(path, "AQF1 payload size mismatch");
  return h;
}

}  // namespace

Plane read_aqf_plane(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  AqfHeader h = read_aqf_header(path, bytes);
  if (h.channels != 1) io_fail(path, "expected 1 channel, got " + std::to_string(h.channels));
  Plane p(h.rows, h.cols);
  const unsigned char* q = bytes.data() + 16;
  for (Index y = 0; y < h.rows; ++y)
    for (Index x = 0; x < h.cols; ++x, q += 4) p(y, x) = double(get_f32le(q));
  return p;
}

Field3 read_aqf_field3(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  AqfHeader h = read_aqf_header(path, bytes);
  if (h.channels != 3) io_fail(path, "expected 3 channels, got " + std::to_string(h.channels));
  Field3 f(h.rows, h.cols);
  const unsigned char* q = bytes.data() + 16;
  for (Index y = 0; y < h.rows; ++y)
    for (Index x = 0; x < h.cols; ++x)
      for (int c = 0; c < 3; ++c, q += 4) f(c, y, x) = double(get_f32le(q));
  return f;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t crc32_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return std::uint32_t(::crc32(0, bytes.data(), uInt(bytes.size())));
}

}  // namespace aquaforge
