#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sketchvid/tensor.hpp"

namespace svr {

namespace fs = std::filesystem;

std::vector<uint8_t> read_file_bytes(const fs::path& path);
void write_file_bytes(const fs::path& path, const std::vector<uint8_t>& bytes);
std::string read_file_text(const fs::path& path);
void write_file_text(const fs::path& path, const std::string& text);

// Round a double through IEEE float32. Generated pixel data is quantized
// with this at creation time so float32 file formats round-trip bitwise.
inline double quantize_f32(double v) { return double(float(v)); }
void quantize_f32(Tensor& t);

// Little-endian packed binary writer/reader used by all binary formats.
class BinWriter {
 public:
  void magic(const char m[8]);
  void u8(uint8_t v);
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(const std::string& s);  // u16 length prefix
  void f32_array(const double* data, size_t n);
  void f64_array(const double* data, size_t n);
  const std::vector<uint8_t>& bytes() const { return buf_; }
  void save(const fs::path& path) const { write_file_bytes(path, buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class BinReader {
 public:
  BinReader(std::vector<uint8_t> bytes, std::string origin);
  static BinReader open(const fs::path& path);

  void magic(const char expect[8]);
  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  std::string str();
  void f32_array(double* out, size_t n);
  void f64_array(double* out, size_t n);
  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  void need(size_t n);
  std::vector<uint8_t> buf_;
  size_t pos_ = 0;
  std::string origin_;
};

// 8-bit binary PGM. Tensors are 1 x H x W with values k/255.
void write_pgm(const fs::path& path, const Tensor& raster);
Tensor read_pgm(const fs::path& path);

std::string hex64(uint64_t v);

}  // namespace svr
