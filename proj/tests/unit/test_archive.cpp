// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "sde/archive.hpp"
#include "sde/float16.hpp"

using namespace sde;

namespace {

std::string tmp_path(const std::string& name) {
  return std::string(SDE_TEST_TMP_DIR) + "/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.vocab_size = 280;
  cfg.max_seq = 64;
  return cfg;
}

}  // namespace

TEST_CASE("binary16 conversion matches known encodings") {
  CHECK(f32_to_f16(0.0f) == 0x0000);
  CHECK(f32_to_f16(1.0f) == 0x3C00);
  CHECK(f32_to_f16(-2.0f) == 0xC000);
  CHECK(f32_to_f16(65504.0f) == 0x7BFF);   // largest finite binary16
  CHECK(f32_to_f16(100000.0f) == 0x7C00);  // overflow -> +inf
  CHECK(f16_to_f32(0x3C00) == 1.0f);
  CHECK(f16_to_f32(0x0001) == doctest::Approx(5.960464e-8));  // smallest subnormal
  // Exactly representable halves roundtrip bitwise.
  for (float v : {0.5f, -0.25f, 3.0f, 1024.0f, 0.0999755859375f}) {
    CHECK(f16_to_f32(f32_to_f16(v)) == v);
  }
}

TEST_CASE("save/load is the identity on f32 models") {
  const Model m = Model::build_toy(small_config(), 77);
  const std::string path = tmp_path("model_roundtrip.sdt");
  save_model(m, path);
  const Model back = load_model(path);
  CHECK(back.config() == m.config());
  CHECK(back.weight_checksum() == m.weight_checksum());
}

TEST_CASE("f16 archives load close to the original") {
  ModelConfig cfg = small_config();
  cfg.dtype = Dtype::f16;
  const Model m = Model::build_toy(cfg, 78);
  const std::string path = tmp_path("model_f16.sdt");
  save_model(m, path);
  const Model back = load_model(path);
  // 0.02-scale weights quantize to ~1e-5 absolute error in binary16.
  CHECK((back.tok_emb - m.tok_emb).cwiseAbs().maxCoeff() < 1e-4f);
  CHECK((back.layers[1].w_up - m.layers[1].w_up).cwiseAbs().maxCoeff() < 1e-4f);
}

TEST_CASE("truncated archives are rejected with a clear error") {
  const Model m = Model::build_toy(small_config(), 79);
  const std::string path = tmp_path("model_trunc.sdt");
  save_model(m, path);
  const std::string bytes = read_file(path);

  SUBCASE("payload cut short") {
    write_file(tmp_path("trunc1.sdt"), bytes.substr(0, bytes.size() - 100));
    CHECK_THROWS_AS(load_model(tmp_path("trunc1.sdt")), ArchiveError);
  }
  SUBCASE("header cut short") {
    write_file(tmp_path("trunc2.sdt"), bytes.substr(0, 20));
    CHECK_THROWS_AS(load_model(tmp_path("trunc2.sdt")), ArchiveError);
  }
  SUBCASE("empty file") {
    write_file(tmp_path("trunc3.sdt"), "");
    CHECK_THROWS_AS(load_model(tmp_path("trunc3.sdt")), ArchiveError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_model(tmp_path("no_such_file.sdt")), ArchiveError);
  }
}

TEST_CASE("shape mismatches name the offending tensor") {
  const Model m = Model::build_toy(small_config(), 80);
  const std::string path = tmp_path("model_shape.sdt");
  save_model(m, path);
  std::string bytes = read_file(path);
  // The header states "tensor tok_emb f32 280x8 0"; claim a different shape.
  const std::string needle = "tensor tok_emb f32 280x8";
  const std::size_t at = bytes.find(needle);
  REQUIRE(at != std::string::npos);
  bytes.replace(at, needle.size(), "tensor tok_emb f32 281x8");
  write_file(tmp_path("shape_bad.sdt"), bytes);
  try {
    load_model(tmp_path("shape_bad.sdt"));
    FAIL("expected ArchiveError");
  } catch (const ArchiveError& e) {
    CHECK(std::string(e.what()).find("tok_emb") != std::string::npos);
  }
}
