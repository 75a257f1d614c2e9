#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowpose/types.hpp"

namespace flowpose::io {

std::uint32_t crc32(const void* data, std::size_t n);

// Append-only little-endian byte buffer. Whole files are assembled in memory
// and written at once; every container in this project is desk-scale.
struct ByteSink {
  std::vector<char> buf;

  void put_bytes(const void* p, std::size_t n);
  void put_u8(std::uint8_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);
  void put_f64(double v);
  void put_str(const std::string& s);  // u32 length + bytes
  void put_mat_f64(const Mat& m);      // u32 rows, u32 cols, row-major f64
  void put_mat_f32(const MatF& m);     // u32 rows, u32 cols, row-major f32
  void put_named_f64(const std::string& name, const Mat& m);
};

// Cursor over an in-memory file image; throws FormatError on truncation.
struct ByteSource {
  const char* p = nullptr;
  const char* end = nullptr;

  ByteSource(const char* begin, std::size_t n) : p(begin), end(begin + n) {}
  explicit ByteSource(const std::vector<char>& v) : ByteSource(v.data(), v.size()) {}

  std::size_t remaining() const { return static_cast<std::size_t>(end - p); }
  void get_bytes(void* out, std::size_t n);
  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  float get_f32();
  double get_f64();
  std::string get_str();
  Mat get_mat_f64();
  MatF get_mat_f32();
  // Reads a named array and checks the name.
  Mat get_named_f64(const std::string& expected_name);
};

void write_file(const std::string& path, const std::vector<char>& bytes);
std::vector<char> read_file(const std::string& path);

// 8-bit PGM, values scaled so the matrix maximum maps to white.
void write_pgm(const std::string& path, const Mat& values);

}  // namespace flowpose::io
