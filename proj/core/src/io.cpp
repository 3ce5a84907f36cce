#include "sketchvid/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sketchvid/errors.hpp"

namespace svr {

std::vector<uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open file: " + path.string());
  f.seekg(0, std::ios::end);
  const size_t n = size_t(f.tellg());
  f.seekg(0);
  std::vector<uint8_t> buf(n);
  f.read(reinterpret_cast<char*>(buf.data()), n);
  if (!f) throw data_error("short read on file: " + path.string());
  return buf;
}

void write_file_bytes(const fs::path& path, const std::vector<uint8_t>& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("cannot write file: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw data_error("short write on file: " + path.string());
}

std::string read_file_text(const fs::path& path) {
  auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_file_text(const fs::path& path, const std::string& text) {
  std::vector<uint8_t> b(text.begin(), text.end());
  write_file_bytes(path, b);
}

void quantize_f32(Tensor& t) {
  for (auto& v : t.values()) v = quantize_f32(v);
}

void BinWriter::magic(const char m[8]) {
  buf_.insert(buf_.end(), m, m + 8);
}

void BinWriter::u8(uint8_t v) { buf_.push_back(v); }

void BinWriter::u16(uint16_t v) {
  for (int i = 0; i < 2; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
}

void BinWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
}

void BinWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
}

void BinWriter::f32(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void BinWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

void BinWriter::str(const std::string& s) {
  if (s.size() > 0xffff) throw data_error("string too long for binary format");
  u16(uint16_t(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void BinWriter::f32_array(const double* data, size_t n) {
  for (size_t i = 0; i < n; ++i) f32(float(data[i]));
}

void BinWriter::f64_array(const double* data, size_t n) {
  for (size_t i = 0; i < n; ++i) f64(data[i]);
}

BinReader::BinReader(std::vector<uint8_t> bytes, std::string origin)
    : buf_(std::move(bytes)), origin_(std::move(origin)) {}

BinReader BinReader::open(const fs::path& path) {
  return BinReader(read_file_bytes(path), path.string());
}

void BinReader::need(size_t n) {
  if (pos_ + n > buf_.size()) {
    throw data_error("truncated binary data in " + origin_);
  }
}

void BinReader::magic(const char expect[8]) {
  need(8);
  if (std::memcmp(buf_.data() + pos_, expect, 8) != 0) {
    throw data_error("bad magic in " + origin_ + " (expected " + std::string(expect, 8) + ")");
  }
  pos_ += 8;
}

uint8_t BinReader::u8() {
  need(1);
  return buf_[pos_++];
}

uint16_t BinReader::u16() {
  need(2);
  uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= uint16_t(buf_[pos_ + size_t(i)]) << (8 * i);
  pos_ += 2;
  return v;
}

uint32_t BinReader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(buf_[pos_ + size_t(i)]) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t BinReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(buf_[pos_ + size_t(i)]) << (8 * i);
  pos_ += 8;
  return v;
}

float BinReader::f32() {
  const uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double BinReader::f64() {
  const uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string BinReader::str() {
  const uint16_t n = u16();
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

void BinReader::f32_array(double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = double(f32());
}

void BinReader::f64_array(double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = f64();
}

void write_pgm(const fs::path& path, const Tensor& raster) {
  if (raster.ndim() != 3 || raster.dim(0) != 1) {
    throw data_error("write_pgm expects a 1 x H x W raster, got " + shape_str(raster.shape()));
  }
  const size_t h = raster.dim(1), w = raster.dim(2);
  std::ostringstream head;
  head << "P5\n" << w << " " << h << "\n255\n";
  std::string hs = head.str();
  std::vector<uint8_t> buf(hs.begin(), hs.end());
  buf.reserve(buf.size() + h * w);
  for (size_t i = 0; i < h * w; ++i) {
    const double v = raster[i];
    const long q = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
    buf.push_back(uint8_t(q));
  }
  write_file_bytes(path, buf);
}

Tensor read_pgm(const fs::path& path) {
  auto bytes = read_file_bytes(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream is(text);
  std::string tag;
  is >> tag;
  if (tag != "P5") throw data_error("not a binary PGM: " + path.string());
  size_t w = 0, h = 0;
  int maxval = 0;
  is >> w >> h >> maxval;
  if (!is || maxval != 255) throw data_error("unsupported PGM header in " + path.string());
  is.get();  // single whitespace after maxval
  const size_t offset = size_t(is.tellg());
  if (bytes.size() < offset + w * h) throw data_error("truncated PGM: " + path.string());
  Tensor t(Shape{1, h, w});
  for (size_t i = 0; i < w * h; ++i) t[i] = double(bytes[offset + i]) / 255.0;
  return t;
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[size_t(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace svr
