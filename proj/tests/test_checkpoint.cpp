#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "laneforge/checkpoint.hpp"

using namespace laneforge;

namespace {

std::string tmpdir() {
  auto d = std::filesystem::temp_directory_path() / "laneforge_ck_tests";
  std::filesystem::create_directories(d);
  return d.string();
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

ModelSpec tiny() {
  ModelSpec s;
  s.variant = Variant::scnn_unet_convlstm;
  s.input_height = 32;
  s.input_width = 64;
  s.sequence_length = 2;
  s.base_channels = 4;
  s.convlstm_hidden = 32;
  return s;
}

}  // namespace

TEST_CASE("checkpoint round trip preserves everything") {
  auto ck = init_checkpoint<float>(tiny(), Phase::pretrain, 42);
  ck.epoch = 7;
  std::string path = tmpdir() + "/roundtrip.lfck";
  save_checkpoint(ck, path);
  auto back = load_checkpoint<float>(path);
  CHECK(back.phase == Phase::pretrain);
  CHECK(back.epoch == 7);
  CHECK(back.rng_seed == 42);
  CHECK(back.spec.variant == ck.spec.variant);
  CHECK(back.spec.base_channels == ck.spec.base_channels);
  REQUIRE(back.params.count() == ck.params.count());
  for (const auto& name : ck.params.names()) {
    REQUIRE(back.params.at(name).shape() == ck.params.at(name).shape());
    REQUIRE(back.params.at(name).values() == ck.params.at(name).values());
  }
  // save -> load -> save is byte-stable
  std::string path2 = tmpdir() + "/roundtrip2.lfck";
  save_checkpoint(back, path2);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("checkpoint header bytes") {
  auto ck = init_checkpoint<float>(tiny(), Phase::finetune, 1);
  std::string path = tmpdir() + "/header.lfck";
  save_checkpoint(ck, path);
  auto bytes = slurp(path);
  REQUIRE(bytes.size() > 20);
  CHECK(bytes[0] == 'L');
  CHECK(bytes[1] == 'F');
  CHECK(bytes[2] == 'C');
  CHECK(bytes[3] == 'K');
  CHECK(bytes[4] == 1);  // version u32 little-endian
  CHECK(bytes[5] == 0);
  std::uint32_t count = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | ((std::uint32_t)bytes[11] << 24);
  CHECK(count == ck.params.count());
  // trailer footer length matches the JSON payload
  std::uint64_t tlen = 0;
  for (int i = 0; i < 8; ++i) tlen |= (std::uint64_t)bytes[bytes.size() - 8 + (size_t)i] << (8 * i);
  std::string tail(bytes.end() - 8 - (long)tlen, bytes.end() - 8);
  CHECK(tail.front() == '{');
  CHECK(tail.find("\"phase\"") != std::string::npos);
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto ck = init_checkpoint<float>(tiny(), Phase::pretrain, 3);
  std::string path = tmpdir() + "/corrupt.lfck";
  save_checkpoint(ck, path);
  SECTION("bad magic") {
    auto bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), (std::streamsize)bytes.size());
    os.close();
    CHECK_THROWS_AS(load_checkpoint<float>(path), IoError);
  }
  SECTION("truncated payload") {
    auto bytes = slurp(path);
    bytes.resize(bytes.size() / 2);
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), (std::streamsize)bytes.size());
    os.close();
    CHECK_THROWS_AS(load_checkpoint<float>(path), IoError);
  }
  SECTION("missing file") { CHECK_THROWS_AS(load_checkpoint<float>(tmpdir() + "/nope.lfck"), IoError); }
}

TEST_CASE("f64 checkpoints load into f32 with conversion") {
  auto ck = init_checkpoint<double>(tiny(), Phase::pretrain, 5);
  std::string path = tmpdir() + "/f64.lfck";
  save_checkpoint(ck, path);
  auto back = load_checkpoint<float>(path);
  REQUIRE(back.params.count() == ck.params.count());
  const auto& a = ck.params.at("stem.c1.w");
  const auto& b = back.params.at("stem.c1.w");
  for (long long i = 0; i < a.size(); ++i) CHECK(b[i] == Catch::Approx((float)a[i]).margin(1e-7));
}
