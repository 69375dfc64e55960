#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "frost/frost_c.h"

namespace {

std::vector<float> flat_image(int w, int h, int ch, float value) {
  return std::vector<float>(static_cast<std::size_t>(w) * h * ch, value);
}

}  // namespace

TEST_CASE("version and error strings are always available") {
  CHECK(std::string(frost_version()).find("frost") != std::string::npos);
  CHECK(frost_last_error() != nullptr);
}

TEST_CASE("ctx creation validates arguments") {
  frost_ctx* ctx = nullptr;
  CHECK(frost_ctx_create(nullptr, &ctx) == FROST_E_ARG);
  CHECK(frost_ctx_create("", &ctx) == FROST_E_ARG);
  REQUIRE(frost_ctx_create("capi_test_artifacts", &ctx) == FROST_OK);
  CHECK(frost_ctx_set(ctx, "pipeline.seed", "7") == FROST_OK);
  CHECK(frost_ctx_set(ctx, "", "x") == FROST_E_ARG);
  CHECK(frost_ctx_load_config(ctx, "no_such_file.cfg") != FROST_OK);
  frost_ctx_destroy(ctx);
  frost_ctx_destroy(nullptr);  // must be a no-op
}

TEST_CASE("image create/info/read round-trip and validation") {
  const auto data = flat_image(16, 12, 3, 0.25f);
  frost_image* img = nullptr;
  REQUIRE(frost_image_create(16, 12, 3, data.data(), &img) == FROST_OK);
  int w = 0, h = 0, c = 0;
  CHECK(frost_image_info(img, &w, &h, &c) == FROST_OK);
  CHECK(w == 16);
  CHECK(h == 12);
  CHECK(c == 3);
  std::vector<float> back(data.size());
  CHECK(frost_image_read(img, back.data(), back.size()) == FROST_OK);
  CHECK(back == data);
  std::vector<float> small(3);
  CHECK(frost_image_read(img, small.data(), small.size()) == FROST_E_ARG);
  frost_image_destroy(img);

  const auto bad = flat_image(4, 4, 1, 2.0f);  // out of [0,1]
  frost_image* rejected = nullptr;
  CHECK(frost_image_create(4, 4, 1, bad.data(), &rejected) == FROST_E_ARG);
  CHECK(std::string(frost_last_error()).find("[0,1]") != std::string::npos);
}

TEST_CASE("corrupt is deterministic through the C API") {
  std::vector<float> data(static_cast<std::size_t>(32) * 32);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>((i % 97) / 96.0);
  frost_image* img = nullptr;
  REQUIRE(frost_image_create(32, 32, 1, data.data(), &img) == FROST_OK);

  frost_image* a = nullptr;
  frost_image* b = nullptr;
  REQUIRE(frost_corrupt(nullptr, img, "gaussian_noise", 5, 42, &a) == FROST_OK);
  REQUIRE(frost_corrupt(nullptr, img, "gaussian_noise", 5, 42, &b) == FROST_OK);
  std::vector<float> va(data.size()), vb(data.size());
  CHECK(frost_image_read(a, va.data(), va.size()) == FROST_OK);
  CHECK(frost_image_read(b, vb.data(), vb.size()) == FROST_OK);
  CHECK(va == vb);

  frost_image* bad = nullptr;
  CHECK(frost_corrupt(nullptr, img, "fog", 5, 42, &bad) == FROST_E_ARG);
  CHECK(frost_corrupt(nullptr, img, "contrast", 9, 42, &bad) == FROST_E_ARG);

  frost_image_destroy(a);
  frost_image_destroy(b);
  frost_image_destroy(img);
}

TEST_CASE("fingerprint buffer contract") {
  const auto data = flat_image(64, 64, 1, 0.5f);
  frost_image* img = nullptr;
  REQUIRE(frost_image_create(64, 64, 1, data.data(), &img) == FROST_OK);
  std::vector<float> values(225);
  REQUIRE(frost_fingerprint(img, 15, values.data(), values.size()) == FROST_OK);
  for (float v : values) CHECK(v == 0.0f);  // constant image, no HF energy
  CHECK(frost_fingerprint(img, 15, values.data(), 10) == FROST_E_ARG);
  CHECK(frost_fingerprint(img, 40, values.data(), values.size()) == FROST_E_ARG);
  frost_image_destroy(img);
}

TEST_CASE("pipeline ops demand their prerequisites in order") {
  frost_ctx* ctx = nullptr;
  REQUIRE(frost_ctx_create("capi_missing_artifacts", &ctx) == FROST_OK);
  // No dataset yet: train and friends must fail with STATE, not crash.
  CHECK(frost_train(ctx) == FROST_E_STATE);
  CHECK(frost_fit_stats(ctx, "generic", nullptr) == FROST_E_STATE);
  CHECK(frost_build_codebook(ctx) == FROST_E_STATE);
  CHECK(frost_eval(ctx, "5", -1.0, "frost", nullptr) == FROST_E_STATE);
  CHECK(frost_report(ctx) == FROST_E_STATE);
  CHECK(frost_fit_stats(ctx, "nonsense", nullptr) == FROST_E_ARG);
  frost_ctx_destroy(ctx);
}
