#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tokenwarp/container.hpp"
#include "tokenwarp/errors.hpp"

using namespace tokenwarp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tokenwarp_container_test";
  fs::create_directories(dir);
  return dir / name;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  put_u32(b, x);
}

std::vector<std::uint8_t> hand_assembled(const std::vector<std::uint64_t>& dims, const std::vector<float>& values) {
  std::vector<std::uint8_t> b{'T', 'K', 'W', 'P'};
  put_u32(b, 1);
  b.push_back(1);
  b.push_back(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_u64(b, d);
  for (float v : values) put_f32(b, v);
  return b;
}

}  // namespace

TEST(Container, HandAssembledVectorDecodes) {
  const auto bytes = hand_assembled({2}, {1.0f, 2.0f});
  ASSERT_EQ(bytes.size(), 18u + 8u);
  const Tensor t = decode_container(bytes);
  EXPECT_EQ(t.dims, std::vector<std::uint64_t>{2});
  EXPECT_EQ(t.values, (std::vector<float>{1.0f, 2.0f}));
  EXPECT_EQ(encode_container(t), bytes);
}

TEST(Container, FileRoundTripIsBitwise) {
  oracle::Gen gen(1);
  Tensor t{{2, 3, 4, 5}, gen.floats(120, -100, 100)};
  const fs::path p = scratch("rank4.tkwp");
  write_container(p, t);
  EXPECT_EQ(read_container(p), t);
  EXPECT_FALSE(fs::exists(fs::path(p.string() + ".partial")));
}

TEST(Container, EveryRankRoundTrips) {
  oracle::Gen gen(2);
  for (int rank = 1; rank <= 4; ++rank) {
    Tensor t;
    std::uint64_t n = 1;
    for (int r = 0; r < rank; ++r) {
      t.dims.push_back(static_cast<std::uint64_t>(gen.integer(1, 4)));
      n *= t.dims.back();
    }
    t.values = gen.floats(n);
    EXPECT_EQ(decode_container(encode_container(t)), t);
  }
}

TEST(Container, BadMagicIsNamed) {
  auto bytes = hand_assembled({1}, {3.0f});
  std::memcpy(bytes.data(), "XXXX", 4);
  try {
    decode_container(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("XXXX"), std::string::npos);
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Container, RejectsVersionDtypeRankAndTruncation) {
  auto version = hand_assembled({1}, {1.0f});
  version[4] = 2;
  try {
    decode_container(version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  auto dtype = hand_assembled({1}, {1.0f});
  dtype[8] = 2;
  try {
    decode_container(dtype);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
  auto rank = hand_assembled({1}, {1.0f});
  rank[9] = 0;
  EXPECT_THROW(decode_container(rank), FormatError);
  auto truncated = hand_assembled({3}, {1.0f, 2.0f, 3.0f});
  truncated.pop_back();
  EXPECT_THROW(decode_container(truncated), FormatError);
  auto trailing = hand_assembled({1}, {1.0f});
  trailing.push_back(0);
  EXPECT_THROW(decode_container(trailing), FormatError);
  EXPECT_THROW(decode_container(std::vector<std::uint8_t>{'T', 'K'}), FormatError);
}

TEST(Container, TypedViewsRoundTrip) {
  oracle::Gen gen(3);
  const VideoTensor video = gen.video(3, 4, 5, 2);
  EXPECT_EQ(as_video(to_tensor(video)), video);
  const TokenGrid grid = gen.grid(4, 3, 6);
  EXPECT_EQ(as_tokens(to_tensor(grid)), grid);
  const FlowField flow = gen.flow(5, 4, 2);
  const Tensor ft = to_tensor(flow);
  EXPECT_EQ(ft.dims, (std::vector<std::uint64_t>{5, 4, 2}));
  EXPECT_EQ(ft.values[0], flow.u(0, 0));
  EXPECT_EQ(ft.values[1], flow.v(0, 0));
  EXPECT_EQ(as_flow(ft), flow);
  const OcclusionMask mask = gen.mask(3, 7);
  EXPECT_EQ(as_mask(to_tensor(mask)), mask);
  EXPECT_THROW(as_flow(to_tensor(grid)), ParameterError);
  EXPECT_THROW(as_mask(Tensor{{2, 2}, {0.0f, 2.0f, 0.5f, 1.0f}}), ParameterError);
}

TEST(Container, AttentionWeightsTensor) {
  AttentionProbe probe;
  probe.record_weights = true;
  const TokenGrid q = oracle::Gen(4).grid(2, 2, 4);
  scaled_dot_attention(q, q, q, 2, &probe);
  const Tensor t = attention_weights_tensor(probe);
  EXPECT_EQ(t.dims, (std::vector<std::uint64_t>{2, 4, 4}));
  EXPECT_EQ(t.values, probe.weights);
}

TEST(Container, MissingFileIsAnIoError) {
  EXPECT_THROW(read_container(scratch("does_not_exist.tkwp")), IoError);
  EXPECT_THROW(write_container(scratch("no_such_dir") / "x.tkwp", Tensor{{1}, {1.0f}}), IoError);
}
