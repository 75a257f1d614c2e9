#include "flowpose/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

namespace flowpose::io {

std::uint32_t crc32(const void* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void ByteSink::put_bytes(const void* p, std::size_t n) {
  const char* c = static_cast<const char*>(p);
  buf.insert(buf.end(), c, c + n);
}
void ByteSink::put_u8(std::uint8_t v) { put_bytes(&v, 1); }
void ByteSink::put_u32(std::uint32_t v) { put_bytes(&v, 4); }
void ByteSink::put_u64(std::uint64_t v) { put_bytes(&v, 8); }
void ByteSink::put_f32(float v) { put_bytes(&v, 4); }
void ByteSink::put_f64(double v) { put_bytes(&v, 8); }

void ByteSink::put_str(const std::string& s) {
  put_u32(static_cast<std::uint32_t>(s.size()));
  put_bytes(s.data(), s.size());
}

void ByteSink::put_mat_f64(const Mat& m) {
  put_u32(static_cast<std::uint32_t>(m.rows()));
  put_u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(m(r, c));
}

void ByteSink::put_mat_f32(const MatF& m) {
  put_u32(static_cast<std::uint32_t>(m.rows()));
  put_u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(m(r, c));
}

void ByteSink::put_named_f64(const std::string& name, const Mat& m) {
  put_str(name);
  put_mat_f64(m);
}

void ByteSource::get_bytes(void* out, std::size_t n) {
  if (remaining() < n) throw FormatError("truncated file");
  std::memcpy(out, p, n);
  p += n;
}
std::uint8_t ByteSource::get_u8() {
  std::uint8_t v;
  get_bytes(&v, 1);
  return v;
}
std::uint32_t ByteSource::get_u32() {
  std::uint32_t v;
  get_bytes(&v, 4);
  return v;
}
std::uint64_t ByteSource::get_u64() {
  std::uint64_t v;
  get_bytes(&v, 8);
  return v;
}
float ByteSource::get_f32() {
  float v;
  get_bytes(&v, 4);
  return v;
}
double ByteSource::get_f64() {
  double v;
  get_bytes(&v, 8);
  return v;
}

std::string ByteSource::get_str() {
  const std::uint32_t n = get_u32();
  if (remaining() < n) throw FormatError("truncated string");
  std::string s(p, p + n);
  p += n;
  return s;
}

Mat ByteSource::get_mat_f64() {
  const std::uint32_t rows = get_u32();
  const std::uint32_t cols = get_u32();
  if (remaining() < std::size_t(rows) * cols * 8) throw FormatError("truncated array");
  Mat m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get_f64();
  return m;
}

MatF ByteSource::get_mat_f32() {
  const std::uint32_t rows = get_u32();
  const std::uint32_t cols = get_u32();
  if (remaining() < std::size_t(rows) * cols * 4) throw FormatError("truncated array");
  MatF m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get_f32();
  return m;
}

Mat ByteSource::get_named_f64(const std::string& expected_name) {
  const std::string name = get_str();
  if (name != expected_name)
    throw FormatError("expected array '" + expected_name + "', found '" + name + "'");
  return get_mat_f64();
}

void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path);
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open: " + path);
  const std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<char> bytes(static_cast<std::size_t>(n));
  in.read(bytes.data(), n);
  if (!in) throw FormatError("read failed: " + path);
  return bytes;
}

void write_pgm(const std::string& path, const Mat& values) {
  const double hi = std::max(values.maxCoeff(), 1e-300);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << "P5\n" << values.cols() << " " << values.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = std::clamp(values(r, c) / hi, 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(v * 255.0 + 0.5)));
    }
}

}  // namespace flowpose::io
