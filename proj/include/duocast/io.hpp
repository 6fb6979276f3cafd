#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duocast/synthdata.hpp"

namespace duocast {

// DUO1 container, all integers little-endian:
//   "DUO1" | u16 version (1) | u32 count | u16 S | u16 H | u16 W | 6 reserved bytes
//   then per event X frames followed by Y frames, each H*W float32, row-major.
inline constexpr std::size_t kDuo1HeaderSize = 22;
inline constexpr std::uint16_t kDuo1Version = 1;

std::vector<std::uint8_t> encode_duo1(const EventDataset& ds);
EventDataset decode_duo1(const std::vector<std::uint8_t>& bytes);
void write_duo1(const std::string& path, const EventDataset& ds);
EventDataset read_duo1(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Binary PGM (P5, maxval 255) of channel 0, pixel = round(255 * value).
std::vector<std::uint8_t> encode_pgm(const Field& frame);
void write_pgm(const std::string& path, const Field& frame);
// frame_0000.pgm, frame_0001.pgm, ... in out_dir (created if missing).
// Returns the written paths.
std::vector<std::string> render_sequence(const SequenceField& seq, const std::string& out_dir);

// Little-endian helpers shared by the binary containers.
class ByteWriter {
 public:
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void bytes(const void* data, std::size_t n);
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}
  std::uint16_t u16(const char* what);
  std::uint32_t u32(const char* what);
  float f32(const char* what);
  std::string str(std::size_t n, const char* what);
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void need(std::size_t n, const char* what) const;

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace duocast
