#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <vector>

#include "frost/dataset.hpp"
#include "reference_net.hpp"
#include "frost/nn.hpp"
#include "frost/rng.hpp"

using namespace frost;

namespace {

std::vector<Image> tiny_images(int count, std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < count; ++i)
    out.push_back(
        render_shape_image(i % kClassCount, Rng::derive(seed, i), 0.06));
  return out;
}

std::vector<int> tiny_labels(int count) {
  std::vector<int> labels(count);
  for (int i = 0; i < count; ++i) labels[i] = i % kClassCount;
  return labels;
}

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed,
                     float lo = 0.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.data)
    v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

bool same_bytes(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Central finite differences on the double-precision reference forward
// (tests/reference_net.hpp) against the analytic float32 gradients.
// Checks the largest-magnitude entries of each group. The loss surface has
// ReLU/pool kinks at multiple scales, so the step cascades down until the
// difference quotient is taken on the kink-free segment around the point;
// entries whose analytic and FD gradients are both tiny are checked
// absolutely instead (conv biases are exactly redundant under train-mode
// BN, for instance).
void check_param_group(const ModelParams& model, const StatSet& stats,
                       const Tensor& batch, const std::vector<int>& labels,
                       float* params, const float* analytic, std::size_t count,
                       const char* name, int samples) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(analytic[a]) > std::abs(analytic[b]);
  });
  const int n = std::min<int>(samples, static_cast<int>(count));
  for (int s = 0; s < n; ++s) {
    const std::size_t i = order[static_cast<std::size_t>(s)];
    const double an = analytic[i];
    double best_fd = 0.0, best_rel = 1e30;
    for (const double step : {1e-3, 1e-4, 1e-5}) {
      const float saved = params[i];
      params[i] = saved + static_cast<float>(step);
      const double up = testref::forward_loss(model, stats, batch, labels);
      params[i] = saved - static_cast<float>(step);
      const double down = testref::forward_loss(model, stats, batch, labels);
      params[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double denom = std::max(std::abs(fd), std::abs(an));
      const double rel = denom < 1e-3 ? std::abs(fd - an) : std::abs(fd - an) / denom;
      if (rel < best_rel) {
        best_rel = rel;
        best_fd = fd;
      }
      if (best_rel < 1e-2) break;
    }
    const double denom = std::max(std::abs(best_fd), std::abs(an));
    INFO(name << "[" << i << "] analytic=" << an << " fd=" << best_fd);
    if (denom < 1e-3) {
      CHECK(std::abs(best_fd - an) < 1e-4);
      continue;
    }
    CHECK(best_rel < 1e-2);
  }
}

}  // namespace

TEST_CASE("batchnorm eval with identity stats is a pure rescale") {
  const Tensor x = random_tensor({2, 3, 4, 4}, 1);
  NormStats stats = NormStats::identity(3);
  const Tensor y = batchnorm_apply(x, stats, /*train=*/false);
  const double scale = 1.0 / std::sqrt(1.0 + kBnEps);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    CHECK(y.data[i] == doctest::Approx(x.data[i] * scale).epsilon(1e-6));
}

TEST_CASE("batchnorm train on a per-channel constant batch yields beta") {
  Tensor x({4, 2, 3, 3});
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 9; ++i)
        x.data[(n * 2 + c) * 9 + i] = c == 0 ? 0.7f : -0.2f;
  NormStats stats = NormStats::identity(2);
  stats.beta = {1.5f, -2.5f};
  const Tensor y = batchnorm_apply(x, stats, /*train=*/true);
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 9; ++i)
        CHECK(y.data[(n * 2 + c) * 9 + i] ==
              doctest::Approx(c == 0 ? 1.5f : -2.5f).epsilon(1e-5));
  // Zero batch variance folds into the running average.
  CHECK(stats.running_var[0] == doctest::Approx(0.9f).epsilon(1e-6));
}

TEST_CASE("batchnorm train moments match a direct oracle") {
  const Tensor x = random_tensor({8, 3, 5, 5}, 77, -1.0f, 1.0f);
  NormStats stats = NormStats::identity(3);
  const double momentum = 0.1;
  batchnorm_apply(x, stats, /*train=*/true, kBnEps, momentum);

  const int n_per_ch = 8 * 25;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 25; ++i) sum += x.data[(n * 3 + c) * 25 + i];
    const double mean = sum / n_per_ch;
    double ss = 0.0;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 25; ++i) {
        const double d = x.data[(n * 3 + c) * 25 + i] - mean;
        ss += d * d;
      }
    const double var_unbiased = ss / (n_per_ch - 1);
    CHECK(stats.running_mean[c] ==
          doctest::Approx(momentum * mean).epsilon(1e-5));
    CHECK(stats.running_var[c] ==
          doctest::Approx(0.9 + momentum * var_unbiased).epsilon(1e-5));
  }
}

TEST_CASE("batchnorm rejects channel mismatches") {
  const Tensor x = random_tensor({2, 3, 4, 4}, 1);
  NormStats stats = NormStats::identity(5);
  CHECK_THROWS_AS(batchnorm_apply(x, stats, false), std::invalid_argument);
}

TEST_CASE("eval forward has no cross-sample coupling") {
  const ModelParams model = init_model(10, 3);
  const auto imgs = tiny_images(1, 5);
  const Tensor one = image_to_batch(imgs[0]);
  Tensor eight({8, 3, 64, 64});
  for (int n = 0; n < 8; ++n)
    std::memcpy(eight.data.data() + n * one.data.size(), one.data.data(),
                one.data.size() * sizeof(float));
  const Tensor l1 = forward_eval(model, model.default_stats, one);
  const Tensor l8 = forward_eval(model, model.default_stats, eight);
  for (int n = 0; n < 8; ++n)
    for (int k = 0; k < 10; ++k)
      CHECK(l8.data[n * 10 + k] == l1.data[k]);
}

TEST_CASE("identical StatSet copies give bitwise-identical logits") {
  const ModelParams model = init_model(10, 3);
  StatSet copy = model.default_stats;
  copy.id = "copy";
  const Tensor batch = image_to_batch(tiny_images(1, 6)[0]);
  const Tensor a = forward_eval(model, model.default_stats, batch);
  const Tensor b = forward_eval(model, copy, batch);
  CHECK(same_bytes(a.data, b.data));
}

TEST_CASE("gradients match central finite differences per parameter group") {
  // Train one short epoch first so gradients are not at a random saddle.
  const auto imgs = tiny_images(40, 11);
  const auto labels = tiny_labels(40);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.lr = 0.02;
  tc.seed = 2;
  ModelParams model = train_full(imgs, labels, 10, tc);

  const auto pair = tiny_images(2, 21);
  const Tensor batch = images_to_batch(pair, {0, 1});
  const std::vector<int> pair_labels = {0, 1};

  StatSet stats = model.default_stats;
  Gradients grads;
  train_step_grads(model, stats, batch, pair_labels, 0.1,
                   /*frozen_backbone=*/false, grads);
  // train_step_grads updated running stats; gradients were taken against
  // the pre-update gamma/beta, so evaluate the oracle on that snapshot.
  stats = model.default_stats;

  // The double-precision reference agrees with the float32 forward.
  const double impl_loss = compute_loss(model, stats, batch, pair_labels);
  const double ref_loss = testref::forward_loss(model, stats, batch, pair_labels);
  CHECK(impl_loss == doctest::Approx(ref_loss).epsilon(1e-4));

  const int samples = 12;
  check_param_group(model, stats, batch, pair_labels,
                    model.conv1.weight.data.data(), grads.conv1_w.data.data(),
                    model.conv1.weight.data.size(), "conv1.w", samples);
  check_param_group(model, stats, batch, pair_labels,
                    model.conv1.bias.data.data(), grads.conv1_b.data.data(),
                    model.conv1.bias.data.size(), "conv1.b", samples);
  check_param_group(model, stats, batch, pair_labels,
                    model.conv2.weight.data.data(), grads.conv2_w.data.data(),
                    model.conv2.weight.data.size(), "conv2.w", samples);
  check_param_group(model, stats, batch, pair_labels,
                    model.conv3.weight.data.data(), grads.conv3_w.data.data(),
                    model.conv3.weight.data.size(), "conv3.w", samples);
  check_param_group(model, stats, batch, pair_labels,
                    model.fc_weight.data.data(), grads.fc_w.data.data(),
                    model.fc_weight.data.size(), "fc.w", samples);
  check_param_group(model, stats, batch, pair_labels,
                    model.fc_bias.data.data(), grads.fc_b.data.data(),
                    model.fc_bias.data.size(), "fc.b", samples);
  for (int l = 0; l < 3; ++l) {
    check_param_group(model, stats, batch, pair_labels,
                      stats.per_layer[l].gamma.data(), grads.bn_gamma[l].data(),
                      stats.per_layer[l].gamma.size(), "bn.gamma", samples);
    check_param_group(model, stats, batch, pair_labels,
                      stats.per_layer[l].beta.data(), grads.bn_beta[l].data(),
                      stats.per_layer[l].beta.size(), "bn.beta", samples);
  }
}

TEST_CASE("train_full is deterministic and 0 epochs returns the init") {
  const auto imgs = tiny_images(30, 13);
  const auto labels = tiny_labels(30);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 10;
  tc.seed = 5;

  const ModelParams a = train_full(imgs, labels, 10, tc);
  const ModelParams b = train_full(imgs, labels, 10, tc);
  CHECK(same_bytes(a.conv1.weight.data, b.conv1.weight.data));
  CHECK(same_bytes(a.conv3.weight.data, b.conv3.weight.data));
  CHECK(same_bytes(a.fc_weight.data, b.fc_weight.data));
  CHECK(same_bytes(a.default_stats.per_layer[0].running_mean,
                   b.default_stats.per_layer[0].running_mean));

  TrainConfig zero = tc;
  zero.epochs = 0;
  const ModelParams z = train_full(imgs, labels, 10, zero);
  const ModelParams init = init_model(10, tc.seed);
  CHECK(same_bytes(z.conv1.weight.data, init.conv1.weight.data));
  CHECK(same_bytes(z.fc_weight.data, init.fc_weight.data));
}

TEST_CASE("training aborts with a diagnostic when the loss diverges") {
  const auto imgs = tiny_images(20, 17);
  const auto labels = tiny_labels(20);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 10;
  tc.lr = 1e9;  // guaranteed blow-up
  tc.cosine_decay = false;
  tc.seed = 5;
  CHECK_THROWS_WITH_AS(train_full(imgs, labels, 10, tc),
                       doctest::Contains("diverged"), std::runtime_error);
}

TEST_CASE("norm-only fitting freezes the backbone and moves the stats") {
  const auto imgs = tiny_images(30, 19);
  const auto labels = tiny_labels(30);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 10;
  tc.seed = 7;
  const ModelParams model = train_full(imgs, labels, 10, tc);

  const std::vector<float> w1 = model.conv1.weight.data;
  const std::vector<float> w3 = model.conv3.weight.data;
  const std::vector<float> fw = model.fc_weight.data;

  TrainConfig fit = tc;
  fit.epochs = 1;
  fit.lr = 0.01;
  const StatSet s_da = fit_generic_stats(model, imgs, labels, fit);

  CHECK(same_bytes(model.conv1.weight.data, w1));
  CHECK(same_bytes(model.conv3.weight.data, w3));
  CHECK(same_bytes(model.fc_weight.data, fw));
  CHECK(s_da.id == "s_da");

  // Running statistics must have moved away from the clean ones.
  for (int l = 0; l < 3; ++l) {
    double dist = 0.0;
    for (int c = 0; c < s_da.per_layer[l].channels(); ++c) {
      const double d = s_da.per_layer[l].running_mean[c] -
                       model.default_stats.per_layer[l].running_mean[c];
      dist += d * d;
    }
    CHECK(dist > 0.0);
  }

  const StatSet s_contrast =
      fit_specific_stats(model, CorruptionKind::kContrast, imgs, labels, fit);
  const StatSet s_gauss = fit_specific_stats(
      model, CorruptionKind::kGaussianNoise, imgs, labels, fit);
  CHECK(s_contrast.id == "s_k_contrast");
  CHECK(s_gauss.id == "s_k_gaussian_noise");
  for (int l = 0; l < 3; ++l) {
    double dist = 0.0;
    for (int c = 0; c < s_contrast.per_layer[l].channels(); ++c) {
      const double d = s_contrast.per_layer[l].running_var[c] -
                       s_gauss.per_layer[l].running_var[c];
      dist += d * d;
    }
    CHECK(dist > 0.0);
  }
}

TEST_CASE("macro_average_stats averages members and passes singletons") {
  const ModelParams model = init_model(10, 23);
  std::map<CorruptionKind, StatSet> per_kind;
  for (CorruptionKind kind : all_corruptions()) {
    StatSet s = model.default_stats;
    s.id = std::string("s_k_") + corruption_name(kind);
    const float fill = static_cast<float>(static_cast<int>(kind) + 1);
    for (auto& layer : s.per_layer) {
      std::fill(layer.running_mean.begin(), layer.running_mean.end(), fill);
      std::fill(layer.running_var.begin(), layer.running_var.end(), 2 * fill);
    }
    per_kind.emplace(kind, std::move(s));
  }
  const auto macro = macro_average_stats(per_kind);
  REQUIRE(macro.size() == kMacroCount);
  // Noise members have codes 6,7,8 -> fills 7,8,9 -> mean 8.
  for (const auto& layer : macro.at(MacroCorruption::kNoise).per_layer)
    for (float v : layer.running_mean) CHECK(v == doctest::Approx(8.0f));
  // Defocus is a singleton pass-through of code 2 -> fill 3.
  for (const auto& layer : macro.at(MacroCorruption::kDefocus).per_layer)
    for (float v : layer.running_mean) CHECK(v == doctest::Approx(3.0f));
  // Averaging identical sets is idempotent on gamma.
  for (const auto& layer : macro.at(MacroCorruption::kBlur).per_layer)
    for (float v : layer.gamma) CHECK(v == doctest::Approx(1.0f));

  std::map<CorruptionKind, StatSet> incomplete(per_kind);
  incomplete.erase(CorruptionKind::kContrast);
  CHECK_THROWS_AS(macro_average_stats(incomplete), std::invalid_argument);
}

TEST_CASE("swap_stats is stateless and only changes normalization behavior") {
  const auto imgs = tiny_images(30, 29);
  const auto labels = tiny_labels(30);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 10;
  tc.seed = 9;
  const ModelParams model = train_full(imgs, labels, 10, tc);
  TrainConfig fit = tc;
  fit.lr = 0.01;
  const StatSet s_da = fit_generic_stats(model, imgs, labels, fit);

  const std::vector<float> weights_before = model.conv2.weight.data;
  const Tensor batch = image_to_batch(imgs[0]);

  const Tensor a1 = forward_eval(swap_stats(model, model.default_stats), batch);
  const Tensor b = forward_eval(swap_stats(model, s_da), batch);
  const Tensor a2 = forward_eval(swap_stats(model, model.default_stats), batch);

  CHECK(same_bytes(a1.data, a2.data));       // swap-swap-back identical
  CHECK(!same_bytes(a1.data, b.data));       // different stats, different logits
  CHECK(same_bytes(model.conv2.weight.data, weights_before));

  StatSet wrong = model.default_stats;
  wrong.per_layer.pop_back();
  CHECK_THROWS_AS(swap_stats(model, wrong), std::invalid_argument);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  const auto imgs = tiny_images(20, 31);
  const auto labels = tiny_labels(20);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 10;
  tc.seed = 10;
  const ModelParams model = train_full(imgs, labels, 10, tc);

  const std::string path = "test_model.ckpt";
  save_model(model, path);
  const ModelParams loaded = load_model(path);
  CHECK(loaded.arch_signature() == model.arch_signature());
  CHECK(same_bytes(loaded.conv1.weight.data, model.conv1.weight.data));
  CHECK(same_bytes(loaded.conv2.bias.data, model.conv2.bias.data));
  CHECK(same_bytes(loaded.conv3.weight.data, model.conv3.weight.data));
  CHECK(same_bytes(loaded.fc_weight.data, model.fc_weight.data));
  for (int l = 0; l < 3; ++l) {
    CHECK(same_bytes(loaded.default_stats.per_layer[l].gamma,
                     model.default_stats.per_layer[l].gamma));
    CHECK(same_bytes(loaded.default_stats.per_layer[l].running_var,
                     model.default_stats.per_layer[l].running_var));
  }
  std::remove(path.c_str());
}

TEST_CASE("statset files round-trip bit-exactly") {
  const ModelParams model = init_model(10, 37);
  StatSet s = model.default_stats;
  s.id = "s_da";
  Rng rng(3);
  for (auto& layer : s.per_layer) {
    for (float& v : layer.running_mean) v = static_cast<float>(rng.normal());
    for (float& v : layer.running_var)
      v = static_cast<float>(0.1 + rng.uniform());
  }
  const std::string path = "test_stats.stat";
  save_statset(s, path);
  const StatSet loaded = load_statset(path);
  CHECK(loaded.id == s.id);
  REQUIRE(loaded.per_layer.size() == s.per_layer.size());
  for (std::size_t l = 0; l < s.per_layer.size(); ++l) {
    CHECK(same_bytes(loaded.per_layer[l].gamma, s.per_layer[l].gamma));
    CHECK(same_bytes(loaded.per_layer[l].beta, s.per_layer[l].beta));
    CHECK(same_bytes(loaded.per_layer[l].running_mean,
                     s.per_layer[l].running_mean));
    CHECK(same_bytes(loaded.per_layer[l].running_var,
                     s.per_layer[l].running_var));
  }
  std::remove(path.c_str());
}

TEST_CASE("statset payload accounting matches the closed form") {
  const ModelParams model = init_model(10, 41);
  // 4 vectors x (16+32+64) channels x 4 bytes.
  CHECK(statset_payload_bytes(model.default_stats) == 4u * 112u * 4u);
  CHECK(model_checkpoint_bytes(model) > 0);
}
