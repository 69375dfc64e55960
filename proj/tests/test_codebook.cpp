#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "frost/codebook.hpp"
#include "frost/dataset.hpp"
#include "frost/rng.hpp"

using namespace frost;

namespace {

SpectralFeature feature_of(std::vector<float> v, int n) {
  SpectralFeature f;
  f.n = n;
  f.values = std::move(v);
  return f;
}

// Tiny codebook over n=2 features with well separated prototypes.
Codebook tiny_codebook(double threshold = 0.1) {
  Codebook cb;
  cb.n = 2;
  cb.threshold = threshold;
  for (int m = 0; m < kMacroCount; ++m) {
    const float base = static_cast<float>(10 * (m + 1));
    cb.macro_prototypes[m] = feature_of({base, base, base, base}, 2);
    cb.stat_map[m] =
        std::string("s_macro_") + macro_name(static_cast<MacroCorruption>(m));
  }
  cb.generic_id = "s_da";
  return cb;
}

SpectralFeature random_feature(Rng& rng, int n = 2, float scale = 60.0f) {
  SpectralFeature f;
  f.n = n;
  for (int i = 0; i < n * n; ++i)
    f.values.push_back(static_cast<float>(scale * rng.uniform()));
  return f;
}

}  // namespace

TEST_CASE("match: exact prototype hit gives zero distance and top rank") {
  const Codebook cb = tiny_codebook();
  const MatchResult r = match(cb.macro_prototypes[4], cb);
  CHECK(r.k_hat_1 == MacroCorruption::kNoise);
  CHECK(r.ranked[0].distance == 0.0);
  CHECK(r.k_hat_1 != r.k_hat_2);
  CHECK(!r.uncertain);  // scores well separated with these prototypes
}

TEST_CASE("match: equidistant feature degenerates to uniform scores") {
  Codebook cb = tiny_codebook();
  // All prototypes identical: every distance equal (and nonzero).
  for (int m = 0; m < kMacroCount; ++m)
    cb.macro_prototypes[m] = feature_of({1, 1, 1, 1}, 2);
  const MatchResult r = match(feature_of({2, 2, 2, 2}, 2), cb);
  for (const MatchEntry& e : r.ranked)
    CHECK(e.score == doctest::Approx(0.2));
  CHECK(r.score_gap == doctest::Approx(0.0));
  CHECK(r.uncertain);
  // Ties broken by enum order.
  CHECK(r.k_hat_1 == MacroCorruption::kContrast);
  CHECK(r.k_hat_2 == MacroCorruption::kBrightness);

  // Fully degenerate: feature equals every prototype.
  const MatchResult d = match(feature_of({1, 1, 1, 1}, 2), cb);
  CHECK(d.uncertain);
  for (const MatchEntry& e : d.ranked) CHECK(e.score == doctest::Approx(0.2));
}

TEST_CASE("match rejects dimension mismatches") {
  const Codebook cb = tiny_codebook();
  CHECK_THROWS_AS(match(feature_of({1, 2, 3, 4, 5, 6, 7, 8, 9}, 3), cb),
                  std::invalid_argument);
}

TEST_CASE("scores sum to one and ranking is consistent with distances") {
  const Codebook cb = tiny_codebook();
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const MatchResult r = match(random_feature(rng), cb);
    double sum = 0.0;
    for (const MatchEntry& e : r.ranked) {
      CHECK(e.score >= 0.0);
      CHECK(e.score <= 1.0);
      sum += e.score;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    for (int i = 1; i < kMacroCount; ++i)
      CHECK(r.ranked[i - 1].distance <= r.ranked[i].distance);
    // argmin under raw distances equals argmin under normalized scores.
    int best_by_score = 0;
    for (int i = 1; i < kMacroCount; ++i)
      if (r.ranked[i].score < r.ranked[best_by_score].score) best_by_score = i;
    CHECK(r.ranked[best_by_score].macro == r.k_hat_1);
  }
}

TEST_CASE("select_stats threshold semantics at the extremes") {
  Rng rng(5);
  const Codebook cb0 = tiny_codebook(0.0);
  const Codebook cb1 = tiny_codebook(1.0);
  for (int t = 0; t < 100; ++t) {
    const SpectralFeature f = random_feature(rng);
    // T = 0: strict inequality never holds, always corruption-specific.
    const MatchResult r0 = match(f, cb0);
    CHECK(select_stats(r0, cb0) == cb0.stat_map[static_cast<int>(r0.k_hat_1)]);
    // T = 1: the normalized top-2 gap is < 1, always generic.
    const MatchResult r1 = match(f, cb1);
    CHECK(select_stats(r1, cb1) == cb1.generic_id);
  }
}

TEST_CASE("routing is monotone in the threshold") {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const SpectralFeature f = random_feature(rng);
    const double t1 = rng.uniform();
    const double t2 = rng.uniform(t1, 1.0);
    const Codebook cb_low = tiny_codebook(t1);
    const Codebook cb_high = tiny_codebook(t2);
    const MatchResult r = match(f, cb_low);
    const bool generic_low = select_stats(r, cb_low) == cb_low.generic_id;
    const bool generic_high = select_stats(r, cb_high) == cb_high.generic_id;
    // Raising T never turns a generic routing into a specific one.
    if (generic_low) CHECK(generic_high);
  }
}

TEST_CASE("selection is total, even for degenerate matches") {
  Codebook cb = tiny_codebook(0.0);
  for (int m = 0; m < kMacroCount; ++m)
    cb.macro_prototypes[m] = feature_of({1, 1, 1, 1}, 2);
  const MatchResult degenerate = match(feature_of({1, 1, 1, 1}, 2), cb);
  const StatSetId id = select_stats(degenerate, cb);
  CHECK(id == cb.stat_map[0]);  // T=0 keeps it specific, enum-order tie-break
}

TEST_CASE("infer composes the pipeline deterministically") {
  const ModelParams model = init_model(kClassCount, 77);
  StatLibrary library;
  {
    StatSet clean = model.default_stats;
    clean.id = "clean";
    library.emplace("clean", clean);
    StatSet s_da = model.default_stats;
    s_da.id = "s_da";
    for (auto& l : s_da.per_layer)
      for (float& v : l.running_mean) v += 0.25f;
    library.emplace("s_da", s_da);
    for (int m = 0; m < kMacroCount; ++m) {
      StatSet s = model.default_stats;
      s.id = std::string("s_macro_") + macro_name(static_cast<MacroCorruption>(m));
      for (auto& l : s.per_layer)
        for (float& v : l.running_var) v *= 1.0f + 0.1f * (m + 1);
      library.emplace(s.id, s);
    }
  }
  // Codebook with prototypes from real features so matching is meaningful.
  Codebook cb;
  cb.n = 15;
  cb.threshold = 0.1;
  cb.generic_id = "s_da";
  {
    Rng rng(9);
    for (int m = 0; m < kMacroCount; ++m) {
      SpectralFeature f;
      f.n = 15;
      for (int i = 0; i < 225; ++i)
        f.values.push_back(static_cast<float>(rng.uniform() + m));
      cb.macro_prototypes[m] = std::move(f);
      cb.stat_map[m] =
          std::string("s_macro_") + macro_name(static_cast<MacroCorruption>(m));
    }
  }

  const Image img = render_shape_image(3, 123, 0.06);
  const InferResult a = infer(img, model, library, cb);
  const InferResult b = infer(img, model, library, cb);
  CHECK(a.predicted_class == b.predicted_class);
  CHECK(a.stats_used == b.stats_used);
  CHECK(a.macro == b.macro);
  CHECK(a.predicted_class >= 0);
  CHECK(a.predicted_class < kClassCount);
  CHECK(a.stats_used == select_stats(a.match, cb));

  // Feature equal to a prototype with a confident margin routes specific.
  Codebook far = cb;
  for (int m = 0; m < kMacroCount; ++m)
    for (float& v : far.macro_prototypes[m].values)
      v = static_cast<float>(100 * m);
  // An image feature is nowhere near these; build the match directly.
  const MatchResult pm = match(far.macro_prototypes[0], far);
  CHECK(pm.k_hat_1 == MacroCorruption::kContrast);
  CHECK(select_stats(pm, far) == far.stat_map[0]);

  // Missing StatSet is a configuration error before any forward pass.
  StatLibrary broken = library;
  broken.erase("s_da");
  CHECK_THROWS_WITH_AS(infer(img, model, broken, cb),
                       doctest::Contains("missing"), std::runtime_error);
}

TEST_CASE("codebook files round-trip bit-exactly") {
  Rng rng(11);
  Codebook cb;
  cb.n = 15;
  cb.threshold = 0.2;
  cb.generic_id = "s_da";
  for (int m = 0; m < kMacroCount; ++m) {
    cb.macro_prototypes[m] = random_feature(rng, 15, 3.0f);
    cb.stat_map[m] =
        std::string("s_macro_") + macro_name(static_cast<MacroCorruption>(m));
  }
  const std::string path = "test_codebook.cbk";
  save_codebook(cb, path);
  const Codebook loaded = load_codebook(path);
  CHECK(loaded.n == cb.n);
  CHECK(loaded.threshold == cb.threshold);
  CHECK(loaded.generic_id == cb.generic_id);
  for (int m = 0; m < kMacroCount; ++m) {
    CHECK(loaded.stat_map[m] == cb.stat_map[m]);
    CHECK(loaded.macro_prototypes[m].values == cb.macro_prototypes[m].values);
  }
  std::remove(path.c_str());
}

TEST_CASE("truncated codebook files fail the checksum, never half-load") {
  Rng rng(13);
  Codebook cb;
  cb.n = 4;
  cb.threshold = 0.1;
  cb.generic_id = "s_da";
  for (int m = 0; m < kMacroCount; ++m) {
    cb.macro_prototypes[m] = random_feature(rng, 4, 2.0f);
    cb.stat_map[m] = "s";
  }
  const std::string path = "test_codebook_trunc.cbk";
  save_codebook(cb, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS_WITH_AS(load_codebook(path), doctest::Contains("checksum"),
                       std::runtime_error);

  // Flipping a payload byte is also caught.
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x5A);
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_codebook(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("out-of-range threshold is rejected on save and load") {
  Rng rng(17);
  Codebook cb;
  cb.n = 4;
  cb.threshold = 1.5;
  cb.generic_id = "s_da";
  for (int m = 0; m < kMacroCount; ++m) {
    cb.macro_prototypes[m] = random_feature(rng, 4, 2.0f);
    cb.stat_map[m] = "s";
  }
  CHECK_THROWS_WITH_AS(save_codebook(cb, "never_written.cbk"),
                       doctest::Contains("threshold"), std::runtime_error);

  // Craft a file with T = 1.5 and a valid checksum; load must reject it.
  cb.threshold = 0.5;
  const std::string path = "test_codebook_badt.cbk";
  save_codebook(cb, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  // Patch the stored double (offset: 9 magic + 1 version + 4 n).
  const double bad = 1.5;
  std::memcpy(bytes.data() + 14, &bad, sizeof bad);
  const std::size_t body_len = bytes.size() - 9 - 4;
  const std::uint32_t checksum = crc32(
      reinterpret_cast<const unsigned char*>(bytes.data() + 9), body_len);
  std::memcpy(bytes.data() + bytes.size() - 4, &checksum, 4);
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_codebook(path), doctest::Contains("threshold"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("make_codebook pulls macro prototypes from a bank") {
  PrototypeBank bank;
  bank.n = 2;
  for (int k = 0; k < kCorruptionCount; ++k) {
    bank.fine[k] = feature_of({float(k), float(k), float(k), float(k)}, 2);
    bank.counts[k] = 10;
  }
  macro_group(bank);
  std::array<StatSetId, kMacroCount> stat_map;
  for (int m = 0; m < kMacroCount; ++m)
    stat_map[m] =
        std::string("s_macro_") + macro_name(static_cast<MacroCorruption>(m));
  const Codebook cb = make_codebook(bank, 0.1, stat_map, "s_da");
  CHECK(cb.n == 2);
  for (int m = 0; m < kMacroCount; ++m)
    CHECK(cb.macro_prototypes[m].values == bank.macro[m].values);

  PrototypeBank no_macro = bank;
  no_macro.has_macro = false;
  CHECK_THROWS_AS(make_codebook(no_macro, 0.1, stat_map, "s_da"),
                  std::invalid_argument);
}
