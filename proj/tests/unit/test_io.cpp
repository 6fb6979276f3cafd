#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "duocast/checkpoint.hpp"
#include "duocast/io.hpp"
#include "support.hpp"

using namespace duocast;
using namespace duocast::test;

namespace {

// Small dataset whose values are exactly representable as float32.
EventDataset float_dataset(std::size_t n, int s, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  EventDataset ds;
  ds.frames = s;
  ds.height = h;
  ds.width = w;
  for (std::size_t i = 0; i < n; ++i) {
    EventPair e{random_sequence(s, h, w, rng), random_sequence(s, h, w, rng)};
    for (SequenceField* q : {&e.x, &e.y})
      for (int k = 0; k < s; ++k)
        for (double& v : (*q)[k].values()) v = static_cast<float>(v);
    ds.events.push_back(std::move(e));
  }
  return ds;
}

bool equal(const EventDataset& a, const EventDataset& b) {
  if (a.size() != b.size() || a.frames != b.frames || a.height != b.height || a.width != b.width) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int k = 0; k < a.frames; ++k)
      for (std::size_t j = 0; j < a.events[i].x[k].size(); ++j)
        if (a.events[i].x[k].values()[j] != b.events[i].x[k].values()[j] ||
            a.events[i].y[k].values()[j] != b.events[i].y[k].values()[j])
          return false;
  return true;
}

std::uint64_t error_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_duo1(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected a format error");
  return 0;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("duocast_io_" + name)).string();
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("DUO1 header layout is bit exact") {
  const EventDataset ds = float_dataset(3, 2, 4, 5, 1);
  const std::vector<std::uint8_t> b = encode_duo1(ds);
  REQUIRE(b.size() == kDuo1HeaderSize + 3 * 2 * 2 * 4 * 5 * 4);
  CHECK(std::memcmp(b.data(), "DUO1", 4) == 0);
  const std::vector<std::uint8_t> expected_tail{1, 0, 3, 0, 0, 0, 2, 0, 4, 0, 5, 0, 0, 0, 0, 0, 0, 0};
  CHECK(std::vector<std::uint8_t>(b.begin() + 4, b.begin() + 22) == expected_tail);
  // First payload value: event 0, X frame 0, pixel (0, 0), little-endian float32.
  const float first = static_cast<float>(ds.events[0].x[0](0, 0));
  std::uint32_t bits;
  std::memcpy(&bits, &first, 4);
  for (int i = 0; i < 4; ++i) CHECK(b[22 + i] == static_cast<std::uint8_t>(bits >> (8 * i)));
  // Y frames follow the X frames of the same event.
  const float y0 = static_cast<float>(ds.events[0].y[0](0, 0));
  std::memcpy(&bits, &y0, 4);
  CHECK(b[22 + 2 * 20 * 4] == static_cast<std::uint8_t>(bits));
}

TEST_CASE("DUO1 round trips are lossless") {
  const EventDataset ds = float_dataset(4, 3, 6, 7, 2);
  const std::vector<std::uint8_t> bytes = encode_duo1(ds);
  const EventDataset back = decode_duo1(bytes);
  CHECK(equal(ds, back));
  CHECK(encode_duo1(back) == bytes);
  const std::string path = temp_path("roundtrip.duo1");
  write_duo1(path, ds);
  CHECK(read_file_bytes(path) == bytes);
  CHECK(equal(read_duo1(path), ds));
  std::filesystem::remove(path);

  EventDataset empty;
  empty.frames = 2;
  empty.height = 3;
  empty.width = 3;
  const EventDataset e = decode_duo1(encode_duo1(empty));
  CHECK(e.size() == 0);
  CHECK(e.height == 3);
}

TEST_CASE("DUO1 corruption yields structured errors") {
  const std::vector<std::uint8_t> good = encode_duo1(float_dataset(2, 2, 3, 3, 3));

  std::vector<std::uint8_t> b = good;
  b[1] = 'X';
  CHECK(error_offset(b) == 0);
  CHECK(error_offset({}) == 0);

  b = good;
  b[4] = 9;
  CHECK(error_offset(b) == 4);

  // Header declares more events than the file holds.
  b = good;
  put_u32(b, 6, 5);
  CHECK_THROWS_WITH_AS(decode_duo1(b), doctest::Contains("truncated"), FormatError);

  b = good;
  b.resize(b.size() - 3);
  CHECK_THROWS_WITH_AS(decode_duo1(b), doctest::Contains("truncated"), FormatError);

  b = good;
  b.resize(15);
  CHECK_THROWS_AS(decode_duo1(b), FormatError);

  b = good;
  b.push_back(0);
  CHECK(error_offset(b) == good.size());

  b = good;
  b[10] = 0;
  b[11] = 0;
  CHECK_THROWS_AS(decode_duo1(b), FormatError);

  b = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(b.data() + 22 + 4 * 5, &nan, 4);
  CHECK(error_offset(b) == 22 + 4 * 5);

  CHECK_THROWS_AS(read_duo1(temp_path("does_not_exist.duo1")), IoError);
}

TEST_CASE("PGM bytes are exact") {
  const Field f = Field::single(2, 3, {0.0, 1.0, 0.5, 0.2, 0.998, 0.001});
  const std::vector<std::uint8_t> b = encode_pgm(f);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(b.size() == header.size() + 6);
  CHECK(std::string(b.begin(), b.begin() + header.size()) == header);
  const std::vector<std::uint8_t> px(b.begin() + header.size(), b.end());
  CHECK(px == std::vector<std::uint8_t>{0, 255, 128, 51, 254, 0});
  CHECK_THROWS_AS(encode_pgm(Field::single(1, 1, {1.5})), ContractViolation);

  const std::string dir = temp_path("frames");
  std::filesystem::remove_all(dir);
  Rng rng(4);
  const std::vector<std::string> paths = render_sequence(random_sequence(3, 4, 4, rng), dir);
  REQUIRE(paths.size() == 3);
  CHECK(std::filesystem::path(paths[2]).filename() == "frame_0002.pgm");
  CHECK(std::filesystem::file_size(paths[0]) == std::string("P5\n4 4\n255\n").size() + 16);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint round trip and byte-identical re-save") {
  Rng rng(5);
  Checkpoint ck;
  ck.epoch = 7;
  ck.config = "frames=5\nseed=3\n";
  ck.tensors["b/w"] = randn<float>({2, 3, 3, 3}, rng);
  ck.tensors["a"] = randn<float>({4}, rng);
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ck);
  CHECK(std::memcmp(bytes.data(), "DUOC", 4) == 0);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.epoch == 7);
  CHECK(back.config == ck.config);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors.at("b/w").shape() == Shape{2, 3, 3, 3});
  CHECK(back.tensors.at("b/w").storage() == ck.tensors.at("b/w").storage());
  CHECK(encode_checkpoint(back) == bytes);

  const std::string path = temp_path("ck.duoc");
  save_checkpoint(path, ck);
  const Checkpoint loaded = load_checkpoint(path);
  save_checkpoint(path + ".2", loaded);
  CHECK(read_file_bytes(path) == read_file_bytes(path + ".2"));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".2");

  std::vector<std::uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.resize(bad.size() - 1);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.push_back(1);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
}

}  // TEST_SUITE
