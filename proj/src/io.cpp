#include "duocast/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

namespace duocast {

static_assert(std::numeric_limits<float>::is_iec559, "float32 payloads assume IEEE-754");

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}

void ByteReader::need(std::size_t n, const char* what) const {
  if (remaining() < n) throw FormatError(std::string("truncated ") + what, buf_.size());
}

std::uint16_t ByteReader::u16(const char* what) {
  need(2, what);
  const std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32(const char* what) {
  need(4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }

std::string ByteReader::str(std::size_t n, const char* what) {
  need(n, what);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::uint8_t> encode_duo1(const EventDataset& ds) {
  require(ds.frames >= 1 && ds.frames <= 65535, "DUO1: frame count must fit in u16");
  require(ds.height >= 1 && ds.height <= 65535 && ds.width >= 1 && ds.width <= 65535, "DUO1: grid must fit in u16");
  require(ds.events.size() <= std::numeric_limits<std::uint32_t>::max(), "DUO1: too many events");
  ByteWriter w;
  w.bytes("DUO1", 4);
  w.u16(kDuo1Version);
  w.u32(static_cast<std::uint32_t>(ds.events.size()));
  w.u16(static_cast<std::uint16_t>(ds.frames));
  w.u16(static_cast<std::uint16_t>(ds.height));
  w.u16(static_cast<std::uint16_t>(ds.width));
  const std::uint8_t reserved[6] = {0, 0, 0, 0, 0, 0};
  w.bytes(reserved, sizeof reserved);
  for (const EventPair& ev : ds.events) {
    for (const SequenceField* seq : {&ev.x, &ev.y}) {
      require(seq->length() == ds.frames && seq->channels() == 1 && seq->height() == ds.height &&
                  seq->width() == ds.width,
              "DUO1: event shape does not match the dataset header");
      for (const Field& f : seq->frames())
        for (double v : f.values()) {
          const float fv = static_cast<float>(v);
          require(std::isfinite(fv), "DUO1: refusing to serialize a non-finite value");
          w.f32(fv);
        }
    }
  }
  return std::move(w.buffer());
}

EventDataset decode_duo1(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DUO1", 4) != 0) throw FormatError("bad DUO1 magic", 0);
  r.str(4, "magic");
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16("header");
  if (version != kDuo1Version) throw FormatError("unsupported DUO1 version " + std::to_string(version), version_at);
  const std::uint32_t count = r.u32("header");
  const std::size_t shape_at = r.offset();
  const std::uint16_t s = r.u16("header");
  const std::uint16_t h = r.u16("header");
  const std::uint16_t w = r.u16("header");
  r.str(6, "header");
  if (s == 0 || h == 0 || w == 0) throw FormatError("DUO1 header declares an empty shape", shape_at);

  // Payload size in 64 bits; u16 dims and a u32 count cannot overflow it, but
  // the result may exceed what this process can address.
  const std::uint64_t floats_per_event = 2ull * s * h * w;
  const std::uint64_t payload = static_cast<std::uint64_t>(count) * floats_per_event * 4ull;
  if (payload > static_cast<std::uint64_t>(std::numeric_limits<std::ptrdiff_t>::max()))
    throw FormatError("DUO1 shape overflows addressable size", shape_at);
  const std::uint64_t expected = kDuo1HeaderSize + payload;
  if (bytes.size() < expected)
    throw FormatError("truncated DUO1 payload: header declares " + std::to_string(count) + " events needing " +
                          std::to_string(expected) + " bytes, file has " + std::to_string(bytes.size()),
                      bytes.size());
  if (bytes.size() > expected) throw FormatError("trailing bytes after DUO1 payload", expected);

  EventDataset ds;
  ds.frames = s;
  ds.height = h;
  ds.width = w;
  ds.events.reserve(count);
  auto read_seq = [&]() {
    std::vector<Field> frames;
    for (int i = 0; i < s; ++i) {
      std::vector<double> v(static_cast<std::size_t>(h) * w);
      for (double& x : v) {
        const std::size_t at = r.offset();
        const float f = r.f32("payload");
        if (!std::isfinite(f)) throw FormatError("non-finite value in DUO1 payload", at);
        x = f;
      }
      frames.push_back(Field::single(h, w, std::move(v)));
    }
    return SequenceField(std::move(frames));
  };
  for (std::uint32_t e = 0; e < count; ++e) {
    EventPair ev;
    ev.x = read_seq();
    ev.y = read_seq();
    ds.events.push_back(std::move(ev));
  }
  return ds;
}

void write_duo1(const std::string& path, const EventDataset& ds) { write_file_bytes(path, encode_duo1(ds)); }

EventDataset read_duo1(const std::string& path) { return decode_duo1(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_pgm(const Field& frame) {
  require(frame.size() > 0, "PGM: empty frame");
  const std::string header = "P5\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      const double v = frame(0, y, x);
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "PGM: values must lie in [0, 1]");
      out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * v)));
    }
  return out;
}

void write_pgm(const std::string& path, const Field& frame) { write_file_bytes(path, encode_pgm(frame)); }

std::vector<std::string> render_sequence(const SequenceField& seq, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory '" + out_dir + "': " + ec.message());
  std::vector<std::string> paths;
  for (int i = 0; i < seq.length(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", i);
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    write_pgm(path, seq[i]);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace duocast
