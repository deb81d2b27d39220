#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "sge/dataset.hpp"
#include "sge/io_formats.hpp"
#include "sge/nn.hpp"
#include "sge/rng.hpp"
#include "support/checks.hpp"

using namespace sge;

namespace {

std::string temp_path(const char* stem) {
  return std::string("io_test_") + stem + "_" + std::to_string(::getpid());
}

Model<float> small_model() {
  return build_model<float>(
      Shape4{1, 1, 8, 8},
      {LayerSpec::conv(4, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
       LayerSpec::sge(2), LayerSpec::global_avg_pool(), LayerSpec::dense(3)});
}

}  // namespace

TEST_CASE("tensor container byte layout") {
  SUBCASE("rank-1 singleton is exactly 15 bytes") {
    TensorData t;
    t.dims = {1};
    t.values = {0.0f};
    const std::string bytes = tensor_bytes(t);
    REQUIRE(bytes.size() == 15);  // 4 magic + 2 version + 1 rank + 4 dim + 4 payload
    CHECK(bytes[0] == 'S');
    CHECK(bytes[1] == 'G');
    CHECK(bytes[2] == 'E');
    CHECK(bytes[3] == 'T');
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version lo
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);  // version hi
    CHECK(static_cast<unsigned char>(bytes[6]) == 1);  // rank
    CHECK(static_cast<unsigned char>(bytes[7]) == 1);  // dim 0 = 1, LE
    CHECK(static_cast<unsigned char>(bytes[8]) == 0);
    CHECK(static_cast<unsigned char>(bytes[9]) == 0);
    CHECK(static_cast<unsigned char>(bytes[10]) == 0);
    for (int i = 11; i < 15; ++i) {
      CHECK(static_cast<unsigned char>(bytes[i]) == 0);  // 0.0f
    }
  }
  SUBCASE("rank-4 singleton is 27 bytes") {
    TensorData t;
    t.dims = {1, 1, 1, 1};
    t.values = {1.0f};
    const std::string bytes = tensor_bytes(t);
    CHECK(bytes.size() == 27);  // 4 + 2 + 1 + 16 + 4
    // 1.0f little-endian = 00 00 80 3f
    CHECK(static_cast<unsigned char>(bytes[23]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[24]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[25]) == 0x80);
    CHECK(static_cast<unsigned char>(bytes[26]) == 0x3f);
  }
}

TEST_CASE("tensor container round trips bitwise") {
  std::mt19937_64 rng(31);
  std::normal_distribution<float> dist(0.0f, 3.0f);
  std::uniform_int_distribution<int> rank_dist(1, 8);
  std::uniform_int_distribution<int> dim_dist(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    TensorData t;
    const int rank = rank_dist(rng);
    std::size_t volume = 1;
    for (int i = 0; i < rank; ++i) {
      t.dims.push_back(dim_dist(rng));
      volume *= t.dims.back();
    }
    t.values.resize(volume);
    for (float& v : t.values) v = dist(rng);

    const std::string bytes = tensor_bytes(t);
    TensorData back = tensor_from_bytes(bytes);
    CHECK(back.dims == t.dims);
    REQUIRE(back.values.size() == t.values.size());
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      CHECK(back.values[i] == t.values[i]);
    }
    CHECK(tensor_bytes(back) == bytes);
  }
}

TEST_CASE("tensor container file round trip") {
  const std::string path = temp_path("tensor") + ".sget";
  Tensor4<float> t(Shape4{2, 3, 4, 5});
  std::mt19937_64 rng(32);
  std::normal_distribution<float> dist;
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);

  write_tensor_file(path, to_tensor_data(t));
  TensorData back = read_tensor_file(path);
  Tensor4<float> t2 = tensor4_from_data(back);
  REQUIRE(t2.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t2.data()[i] == t.data()[i]);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_tensor_file(path), IoError);
}

TEST_CASE("tensor container rejects malformed bytes") {
  TensorData t;
  t.dims = {2, 2};
  t.values = {1, 2, 3, 4};
  const std::string good = tensor_bytes(t);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(tensor_from_bytes(bad), BadMagic);
    try {
      tensor_from_bytes(bad);
    } catch (const BadMagic& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("bad version") {
    std::string bad = good;
    bad[4] = 9;
    CHECK_THROWS_AS(tensor_from_bytes(bad), BadVersion);
  }
  SUBCASE("bad rank") {
    std::string bad = good;
    bad[6] = 0;
    CHECK_THROWS_AS(tensor_from_bytes(bad), BadHeader);
    bad[6] = 9;
    CHECK_THROWS_AS(tensor_from_bytes(bad), BadHeader);
  }
  SUBCASE("zero dim") {
    std::string bad = good;
    bad[7] = bad[8] = bad[9] = bad[10] = 0;
    CHECK_THROWS_AS(tensor_from_bytes(bad), BadHeader);
  }
  SUBCASE("truncated payload") {
    std::string bad = good.substr(0, good.size() - 3);
    CHECK_THROWS_AS(tensor_from_bytes(bad), TruncatedPayload);
    try {
      tensor_from_bytes(bad);
    } catch (const TruncatedPayload& e) {
      CHECK(e.offset() > 0);
    }
  }
  SUBCASE("trailing bytes") {
    std::string bad = good + "junk";
    CHECK_THROWS_AS(tensor_from_bytes(bad), TrailingData);
  }
  SUBCASE("writer validates shape") {
    TensorData bad;
    bad.dims = {2, 2};
    bad.values = {1, 2, 3};
    CHECK_THROWS_AS(tensor_bytes(bad), BadHeader);
    TensorData rank0;
    rank0.values = {};
    CHECK_THROWS_AS(tensor_bytes(rank0), BadHeader);
  }
}

TEST_CASE("checkpoint round trips byte-identically through a model") {
  auto model = small_model();
  SeedStreams streams(17);
  std::mt19937_64 wrng = streams.stream("weights");
  model.init_params(wrng);

  nlohmann::json config{{"epochs", 4}, {"lr", 0.05}};
  CheckpointData ck = make_checkpoint(model, 17, config);
  CHECK(ck.header["format"] == "sge-checkpoint");
  CHECK(ck.header["seed"] == 17);
  CHECK(ck.header["config"]["epochs"] == 4);
  CHECK(ck.header["layers"].size() == 6);
  CHECK(ck.header["params"].size() == model.parameters().size());

  const std::string bytes = checkpoint_bytes(ck);
  CheckpointData parsed = checkpoint_from_bytes(bytes);
  CHECK(parsed.header == ck.header);
  CHECK(checkpoint_bytes(parsed) == bytes);

  // load into a freshly built twin and compare parameters bitwise
  auto twin = small_model();
  load_checkpoint(twin, parsed);
  auto pa = model.parameters();
  auto pb = twin.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    REQUIRE(pa[i]->value.size() == pb[i]->value.size());
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j) {
      CHECK(pa[i]->value[j] == pb[i]->value[j]);
    }
  }

  // file round trip
  const std::string path = temp_path("ckpt") + ".sgec";
  write_checkpoint_file(path, ck);
  CheckpointData from_file = read_checkpoint_file(path);
  CHECK(checkpoint_bytes(from_file) == bytes);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint refuses a mismatched model") {
  auto model = small_model();
  SeedStreams streams(17);
  std::mt19937_64 wrng = streams.stream("weights");
  model.init_params(wrng);
  CheckpointData ck = make_checkpoint(model, 17, nlohmann::json::object());

  // different group count: same parameter count, different names won't occur
  // (names match), but dims differ
  auto other = build_model<float>(
      Shape4{1, 1, 8, 8},
      {LayerSpec::conv(4, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
       LayerSpec::sge(4), LayerSpec::global_avg_pool(), LayerSpec::dense(3)});
  CHECK_THROWS_AS(load_checkpoint(other, ck), ShapeMismatch);

  // no gate layer at all: parameter count differs
  auto shallow = build_model<float>(
      Shape4{1, 1, 8, 8},
      {LayerSpec::conv(4, 3), LayerSpec::global_avg_pool(),
       LayerSpec::dense(3)});
  CHECK_THROWS_AS(load_checkpoint(shallow, ck), BadHeader);
}

TEST_CASE("checkpoint rejects malformed bytes") {
  auto model = small_model();
  CheckpointData ck = make_checkpoint(model, 0, nlohmann::json::object());
  const std::string good = checkpoint_bytes(ck);

  std::string bad_magic = good;
  bad_magic[0] = 'Z';
  CHECK_THROWS_AS(checkpoint_from_bytes(bad_magic), BadMagic);

  std::string bad_version = good;
  bad_version[4] = 7;
  CHECK_THROWS_AS(checkpoint_from_bytes(bad_version), BadVersion);

  std::string bad_json = good;
  bad_json[10] = '}';  // corrupt a byte inside the JSON header
  CHECK_THROWS_AS(checkpoint_from_bytes(bad_json), BadHeader);

  std::string truncated = good.substr(0, good.size() - 2);
  CHECK_THROWS_AS(checkpoint_from_bytes(truncated), TruncatedPayload);

  std::string trailing = good + "x";
  CHECK_THROWS_AS(checkpoint_from_bytes(trailing), TrailingData);
}

TEST_CASE("pgm rendering") {
  SUBCASE("header, rounding, and exact bytes") {
    const std::string header = "P5\n2 1\n255\n";
    const std::string bytes = pgm_bytes(1, 2, {0.5f, 1.0f});
    REQUIRE(bytes.size() == header.size() + 2);
    CHECK(bytes.substr(0, header.size()) == header);
    CHECK(static_cast<unsigned char>(bytes[header.size()]) == 128);  // 0.5
    CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 255);
  }
  SUBCASE("clamping") {
    const std::string header = "P5\n3 1\n255\n";
    const std::string bytes = pgm_bytes(1, 3, {-0.25f, 2.0f, 0.0f});
    REQUIRE(bytes.size() == header.size() + 3);
    CHECK(static_cast<unsigned char>(bytes[header.size()]) == 0);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 255);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 2]) == 0);
  }
  SUBCASE("nearest-neighbor upscale") {
    const std::string header = "P5\n6 3\n255\n";
    const std::string bytes = pgm_bytes(1, 2, {0.0f, 1.0f}, 3);
    CHECK(bytes.substr(0, header.size()) == header);
    REQUIRE(bytes.size() == header.size() + 18);
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 6; ++x) {
        const unsigned char px = bytes[header.size() + y * 6 + x];
        CHECK(px == (x < 3 ? 0 : 255));
      }
    }
  }
  SUBCASE("comment rows sit between magic and dimensions") {
    const std::string bytes =
        pgm_bytes(1, 1, {1.0f}, 1, {"seed=7", "line\nbreak"});
    const std::string header = "P5\n# seed=7\n# line break\n1 1\n255\n";
    REQUIRE(bytes.size() == header.size() + 1);
    CHECK(bytes.substr(0, header.size()) == header);
    CHECK(static_cast<unsigned char>(bytes[header.size()]) == 255);
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(pgm_bytes(0, 2, {}), InvalidArgument);
    CHECK_THROWS_AS(pgm_bytes(1, 2, {0.5f}), ShapeMismatch);
    CHECK_THROWS_AS(pgm_bytes(1, 1, {0.5f}, 0), InvalidArgument);
  }
  SUBCASE("file write") {
    const std::string path = temp_path("pgm") + ".pgm";
    write_pgm(path, 2, 2, {0.0f, 0.25f, 0.75f, 1.0f}, 2);
    const std::string content = read_text_file(path);
    CHECK(content == pgm_bytes(2, 2, {0.0f, 0.25f, 0.75f, 1.0f}, 2));
    std::remove(path.c_str());
  }
}

TEST_CASE("csv metadata prefix") {
  const std::string out = csv_with_metadata(
      {{"seed", "7"}, {"groups", "4"}}, "a,b\n1,2\n");
  CHECK(out == "# seed=7\n# groups=4\na,b\n1,2\n");
  CHECK(csv_with_metadata({}, "x\n") == "x\n");
}
