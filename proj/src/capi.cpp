#include "frost/frost_c.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "frost/codebook.hpp"
#include "frost/config.hpp"
#include "frost/corruptions.hpp"
#include "frost/dataset.hpp"
#include "frost/image.hpp"
#include "frost/metrics.hpp"
#include "frost/nn.hpp"
#include "frost/pipeline.hpp"
#include "frost/spectral.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

// Inference artifacts cached per context; invalidated whenever a stage
// rewrites them.
struct InferBundle {
  frost::ModelParams model;
  frost::Codebook codebook;
  frost::StatLibrary library;
};

}  // namespace

struct frost_ctx {
  std::string dir;
  frost::Config cfg;
  std::unique_ptr<InferBundle> bundle;

  frost::ArtifactPaths paths() const { return frost::ArtifactPaths(dir); }
  void invalidate() { bundle.reset(); }
};

struct frost_image {
  frost::Image img;
};

namespace {

frost_status classify_error(const std::exception& e) {
  const std::string what = e.what();
  set_error(what);
  if (dynamic_cast<const std::invalid_argument*>(&e)) return FROST_E_ARG;
  auto has = [&what](const char* needle) {
    return what.find(needle) != std::string::npos;
  };
  if (has("missing") || has("run ") || has("not produced")) return FROST_E_STATE;
  if (has("bad magic") || has("truncated") || has("checksum") ||
      has("version") || has("mismatch") || has("malformed"))
    return FROST_E_FORMAT;
  if (has("cannot open") || has("cannot write") || has("short write"))
    return FROST_E_IO;
  return FROST_E_INTERNAL;
}

#define FROST_GUARD_BEGIN try {
#define FROST_GUARD_END                    \
  }                                        \
  catch (const std::exception& e) {        \
    return classify_error(e);              \
  }                                        \
  catch (...) {                            \
    set_error("unknown error");            \
    return FROST_E_INTERNAL;               \
  }

frost_status need(bool cond, const char* msg) {
  if (!cond) {
    set_error(msg);
    return FROST_E_ARG;
  }
  return FROST_OK;
}

void require_artifact(const std::string& path, const char* hint) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("missing artifact " + path + " (" + hint + ")");
}

std::vector<int> parse_severities(const char* severities) {
  std::vector<int> out;
  if (!severities || !*severities) return {4, 5};
  std::istringstream ss(severities);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  if (out.empty()) throw std::invalid_argument("empty severity list");
  for (int s : out)
    if (s < 1 || s > 5)
      throw std::invalid_argument("severity outside 1..5");
  return out;
}

frost::DatasetBundle load_bundle_checked(const frost::ArtifactPaths& paths) {
  require_artifact(paths.dataset(), "run gen-data first");
  return frost::load_dataset(paths.dataset());
}

frost::ModelParams load_model_checked(const frost::ArtifactPaths& paths) {
  require_artifact(paths.model(), "run train first");
  return frost::load_model(paths.model());
}

InferBundle& inference_bundle(frost_ctx* ctx) {
  if (!ctx->bundle) {
    const auto paths = ctx->paths();
    auto bundle = std::make_unique<InferBundle>();
    bundle->model = load_model_checked(paths);
    require_artifact(paths.codebook(), "run build-codebook first");
    bundle->codebook = frost::load_codebook(paths.codebook());
    bundle->library =
        frost::load_stat_library(paths, bundle->model, bundle->codebook);
    ctx->bundle = std::move(bundle);
  }
  return *ctx->bundle;
}

void copy_name(const std::string& s, char* out, size_t len) {
  if (!out || len == 0) return;
  const size_t n = std::min(len - 1, s.size());
  std::memcpy(out, s.data(), n);
  out[n] = '\0';
}

}  // namespace

extern "C" {

const char* frost_version(void) { return "frost 1.0.0"; }

const char* frost_last_error(void) { return g_last_error.c_str(); }

frost_status frost_ctx_create(const char* artifact_dir, frost_ctx** out_ctx) {
  if (auto st = need(out_ctx && artifact_dir && *artifact_dir,
                     "artifact_dir and out_ctx must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  auto ctx = std::make_unique<frost_ctx>();
  ctx->dir = artifact_dir;
  *out_ctx = ctx.release();
  return FROST_OK;
  FROST_GUARD_END
}

void frost_ctx_destroy(frost_ctx* ctx) { delete ctx; }

frost_status frost_ctx_load_config(frost_ctx* ctx, const char* path) {
  if (auto st = need(ctx && path, "ctx and path must be non-null")) return st;
  FROST_GUARD_BEGIN
  ctx->cfg.load_file(path);
  ctx->invalidate();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_ctx_set(frost_ctx* ctx, const char* key, const char* value) {
  if (auto st = need(ctx && key && value && *key,
                     "ctx, key and value must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  ctx->cfg.set(key, value);
  ctx->invalidate();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_gen_data(frost_ctx* ctx) {
  if (auto st = need(ctx != nullptr, "ctx must be non-null")) return st;
  FROST_GUARD_BEGIN
  const auto paths = ctx->paths();
  std::filesystem::create_directories(paths.stats_dir());
  const auto seeds = frost::PipelineSeeds::derive(ctx->cfg);
  const auto data_cfg = frost::DataConfig::from_config(ctx->cfg, seeds.data);
  frost::save_dataset(frost::generate_dataset(data_cfg), paths.dataset());
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_train(frost_ctx* ctx) {
  if (auto st = need(ctx != nullptr, "ctx must be non-null")) return st;
  FROST_GUARD_BEGIN
  const auto paths = ctx->paths();
  const auto seeds = frost::PipelineSeeds::derive(ctx->cfg);
  const auto bundle = load_bundle_checked(paths);
  const auto tc = frost::train_config_from_config(ctx->cfg, "train",
                                                  seeds.train, &std::cout);
  const frost::ModelParams model = frost::train_full(
      bundle.train.images, bundle.train.labels, frost::kClassCount, tc);
  frost::save_model(model, paths.model());
  frost::StatSet clean = model.default_stats;
  clean.id = "clean";
  frost::save_statset(clean, paths.statset("clean"));
  ctx->invalidate();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_fit_stats(frost_ctx* ctx, const char* mode,
                             const char* kind) {
  if (auto st = need(ctx && mode, "ctx and mode must be non-null")) return st;
  FROST_GUARD_BEGIN
  const std::string mode_s = mode;
  if (mode_s != "generic" && mode_s != "specific")
    throw std::invalid_argument("mode must be 'generic' or 'specific'");
  const auto paths = ctx->paths();
  const auto seeds = frost::PipelineSeeds::derive(ctx->cfg);
  const auto bundle = load_bundle_checked(paths);
  const auto model = load_model_checked(paths);
  const frost::CorruptionTable table(ctx->cfg);

  if (mode_s == "generic") {
    const auto fc = frost::train_config_from_config(ctx->cfg, "fit",
                                                    seeds.fit_generic,
                                                    &std::cout);
    const frost::StatSet s = frost::fit_generic_stats(
        model, bundle.train.images, bundle.train.labels, fc, table);
    frost::save_statset(s, paths.statset(s.id));
  } else {
    std::vector<frost::CorruptionKind> kinds;
    if (kind && *kind)
      kinds.push_back(frost::corruption_from_name(kind));
    else
      for (frost::CorruptionKind k : frost::all_corruptions()) kinds.push_back(k);
    for (frost::CorruptionKind k : kinds) {
      const auto fc = frost::train_config_from_config(
          ctx->cfg, "fit", seeds.fit_specific[static_cast<int>(k)],
          &std::cout);
      const frost::StatSet s = frost::fit_specific_stats(
          model, k, bundle.train.images, bundle.train.labels, fc, table);
      frost::save_statset(s, paths.statset(s.id));
    }
  }
  ctx->invalidate();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_build_codebook(frost_ctx* ctx) {
  if (auto st = need(ctx != nullptr, "ctx must be non-null")) return st;
  FROST_GUARD_BEGIN
  const auto paths = ctx->paths();
  const auto seeds = frost::PipelineSeeds::derive(ctx->cfg);
  const auto bundle = load_bundle_checked(paths);
  load_model_checked(paths);  // architecture sanity, not otherwise needed

  require_artifact(paths.statset("s_da"), "run fit-stats --mode generic first");
  std::map<frost::CorruptionKind, frost::StatSet> per_kind;
  for (frost::CorruptionKind k : frost::all_corruptions()) {
    const std::string id = std::string("s_k_") + frost::corruption_name(k);
    require_artifact(paths.statset(id), "run fit-stats --mode specific first");
    per_kind.emplace(k, frost::load_statset(paths.statset(id)));
  }

  frost::ClusteringDiag diag;
  const frost::PrototypeBank bank = frost::build_prototype_stage(
      ctx->cfg, paths, bundle.train.images, seeds, &diag, &std::cout);
  frost::assemble_codebook_stage(ctx->cfg, paths, bank, per_kind, "s_da");

  // Stage-mode diagnostics carry the clustering numbers; the one-shot
  // pipeline writes the richer file.
  {
    std::ofstream out(paths.diagnostics(), std::ios::binary);
    char buf[128];
    out << "frost diagnostics v1\n";
    out << "kmeans_k " << frost::kMacroCount << "\n";
    out << "kmeans_cap " << diag.cap << "\n";
    out << "kmeans_samples " << diag.samples << "\n";
    std::snprintf(buf, sizeof buf, "kmeans_inertia %.4f\n", diag.inertia);
    out << buf;
    std::snprintf(buf, sizeof buf, "kmeans_ari %.6f\n", diag.ari);
    out << buf;
  }
  ctx->invalidate();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_eval(frost_ctx* ctx, const char* severities,
                        double threshold, const char* policy, int* gate_ok) {
  if (auto st = need(ctx != nullptr, "ctx must be non-null")) return st;
  FROST_GUARD_BEGIN
  const auto paths = ctx->paths();
  const auto seeds = frost::PipelineSeeds::derive(ctx->cfg);
  const auto bundle = load_bundle_checked(paths);
  InferBundle& ib = inference_bundle(ctx);
  frost::Codebook cb = ib.codebook;
  if (threshold >= 0.0) cb.threshold = threshold;
  frost::validate_codebook(cb);

  frost::EvalOptions opts;
  opts.severities = parse_severities(severities);
  opts.seed = seeds.eval;
  opts.threads = ctx->cfg.get_int("eval.threads", 1);
  opts.forward_batch = ctx->cfg.get_int("eval.forward_batch", 64);
  opts.log_scale = ctx->cfg.get_bool("spectral.log_scale", true);
  opts.window = frost::window_mode_from_name(
      ctx->cfg.get_str("spectral.window", "corner"));
  opts.trace_path = ctx->cfg.get_str("eval.trace", "");
  const frost::CorruptionTable table(ctx->cfg);

  const std::string policy_s = policy && *policy ? policy : "frost";
  std::vector<frost::PolicySpec> policies;
  if (policy_s == "ablation") {
    policies = frost::ablation_policies(cb.threshold);
  } else if (policy_s == "frost") {
    policies.push_back({frost::PolicyType::kFrost, cb.threshold, "", "frost"});
  } else if (policy_s == "baseline") {
    policies.push_back({frost::PolicyType::kBaseline, 0.0, "", "b"});
  } else if (policy_s == "generic") {
    policies.push_back({frost::PolicyType::kGeneric, 0.0, "", "corr_g"});
  } else if (policy_s == "oracle") {
    policies.push_back({frost::PolicyType::kOracle, 0.0, "", "corr_s"});
  } else {
    throw std::invalid_argument("unknown policy: " + policy_s);
  }

  const auto reports = frost::evaluate_policies(ib.model, ib.library, cb,
                                                bundle.test, policies, opts,
                                                table);
  for (const auto& r : reports)
    frost::save_report_csv(r, paths.report_csv(r.policy));
  if (policy_s == "ablation") {
    const double overhead =
        frost::storage_overhead(ib.model, ib.library, cb);
    {
      std::ofstream ab(paths.ablation(), std::ios::binary);
      ab << frost::format_ablation(reports, overhead);
    }
    std::cout << frost::format_ablation(reports, overhead);
    if (gate_ok) {
      const double b = reports[0].total_accuracy_pct();
      const double corr_g = reports[1].total_accuracy_pct();
      const double frost_acc = reports[3].total_accuracy_pct();
      const double corr_s = reports[4].total_accuracy_pct();
      const double tol = 1.0;
      *gate_ok = (corr_s >= frost_acc - tol) && (frost_acc >= corr_g - tol) &&
                 (corr_g >= b - tol);
    }
  } else {
    char buf[256];
    const auto& r = reports[0];
    std::snprintf(buf, sizeof buf,
                  "%s: accuracy %.2f%%  clean %.2f%%  codebook %.2f%%  "
                  "generic %.2f%%\n",
                  r.policy.c_str(), r.total_accuracy_pct(),
                  r.clean_accuracy_pct(), r.codebook_accuracy_pct(),
                  r.generic_fraction_pct());
    std::cout << buf;
    if (gate_ok) *gate_ok = 1;
  }
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_sweep_threshold(frost_ctx* ctx, const char* severities,
                                   const double* thresholds, size_t count) {
  if (auto st = need(ctx && thresholds && count > 0,
                     "ctx and thresholds must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  const auto paths = ctx->paths();
  const auto seeds = frost::PipelineSeeds::derive(ctx->cfg);
  const auto bundle = load_bundle_checked(paths);
  InferBundle& ib = inference_bundle(ctx);

  frost::EvalOptions opts;
  opts.severities = parse_severities(severities ? severities : "5");
  opts.seed = seeds.eval;
  opts.threads = ctx->cfg.get_int("eval.threads", 1);
  opts.forward_batch = ctx->cfg.get_int("eval.forward_batch", 64);
  opts.log_scale = ctx->cfg.get_bool("spectral.log_scale", true);
  opts.window = frost::window_mode_from_name(
      ctx->cfg.get_str("spectral.window", "corner"));
  opts.include_clean = false;

  std::vector<frost::PolicySpec> policies;
  for (size_t i = 0; i < count; ++i) {
    if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0))
      throw std::invalid_argument("threshold outside [0,1]");
    policies.push_back(
        {frost::PolicyType::kFrost, thresholds[i], "", "frost"});
  }
  const frost::CorruptionTable table(ctx->cfg);
  const auto reports = frost::evaluate_policies(
      ib.model, ib.library, ib.codebook, bundle.test, policies, opts, table);

  std::ofstream sw(paths.sweep(), std::ios::binary);
  sw << "# frost threshold sweep v1\n";
  sw << "severities,";
  for (std::size_t i = 0; i < opts.severities.size(); ++i)
    sw << (i ? ";" : "") << opts.severities[i];
  sw << "\n";
  sw << "threshold,accuracy_pct,codebook_accuracy_pct,generic_fraction_pct\n";
  char buf[160];
  for (size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.4f,%.4f,%.4f\n", thresholds[i],
                  reports[i].total_accuracy_pct(),
                  reports[i].codebook_accuracy_pct(),
                  reports[i].generic_fraction_pct());
    sw << buf;
    std::cout << buf;
  }
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_report(frost_ctx* ctx) {
  if (auto st = need(ctx != nullptr, "ctx must be non-null")) return st;
  FROST_GUARD_BEGIN
  const auto paths = ctx->paths();
  bool printed = false;
  for (const std::string path :
       {paths.ablation(), paths.diagnostics(), paths.sweep()}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::cout << "==== " << path << " ====\n";
    std::cout << in.rdbuf() << "\n";
    printed = true;
  }
  if (!printed)
    throw std::runtime_error(
        "no reports present in " + ctx->dir + " (run eval first)");
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_run_pipeline(frost_ctx* ctx) {
  if (auto st = need(ctx != nullptr, "ctx must be non-null")) return st;
  FROST_GUARD_BEGIN
  frost::run_pipeline(ctx->cfg, ctx->dir, &std::cout);
  ctx->invalidate();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_image_create(int width, int height, int channels,
                                const float* data, frost_image** out_image) {
  if (auto st = need(data && out_image, "data and out_image must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3))
    throw std::invalid_argument("image: bad dimensions");
  auto img = std::make_unique<frost_image>();
  img->img.width = width;
  img->img.height = height;
  img->img.channels = channels;
  img->img.data.assign(data, data + static_cast<std::size_t>(width) * height *
                                        channels);
  frost::validate_image(img->img);
  *out_image = img.release();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_image_load(const char* path, frost_image** out_image) {
  if (auto st = need(path && out_image, "path and out_image must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  auto img = std::make_unique<frost_image>();
  img->img = frost::load_pnm(path);
  *out_image = img.release();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_image_save(const frost_image* image, const char* path) {
  if (auto st = need(image && path, "image and path must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  frost::save_pnm(image->img, path);
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_image_info(const frost_image* image, int* width,
                              int* height, int* channels) {
  if (auto st = need(image != nullptr, "image must be non-null")) return st;
  if (width) *width = image->img.width;
  if (height) *height = image->img.height;
  if (channels) *channels = image->img.channels;
  return FROST_OK;
}

frost_status frost_image_read(const frost_image* image, float* buffer,
                              size_t buffer_len) {
  if (auto st = need(image && buffer, "image and buffer must be non-null"))
    return st;
  if (buffer_len < image->img.data.size()) {
    set_error("buffer too small");
    return FROST_E_ARG;
  }
  std::memcpy(buffer, image->img.data.data(),
              image->img.data.size() * sizeof(float));
  return FROST_OK;
}

void frost_image_destroy(frost_image* image) { delete image; }

frost_status frost_corrupt(frost_ctx* ctx, const frost_image* input,
                           const char* kind, int severity, uint64_t seed,
                           frost_image** out_image) {
  if (auto st = need(input && kind && out_image,
                     "input, kind and out_image must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  const frost::CorruptionTable table =
      ctx ? frost::CorruptionTable(ctx->cfg) : frost::CorruptionTable();
  auto img = std::make_unique<frost_image>();
  img->img = frost::apply_corruption(input->img,
                                     frost::corruption_from_name(kind),
                                     frost::SeverityLevel(severity), seed,
                                     table);
  *out_image = img.release();
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_fingerprint(const frost_image* input, int n,
                               float* out_values, size_t buffer_len) {
  if (auto st = need(input && out_values,
                     "input and out_values must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  if (n < 1 || n > 32) throw std::invalid_argument("n must be in 1..32");
  if (buffer_len < static_cast<size_t>(n) * n)
    throw std::invalid_argument("fingerprint buffer too small");
  const frost::SpectralFeature f = frost::extract_feature(input->img, n);
  std::memcpy(out_values, f.values.data(), f.values.size() * sizeof(float));
  return FROST_OK;
  FROST_GUARD_END
}

frost_status frost_infer(frost_ctx* ctx, const frost_image* input,
                         int* out_class, char* out_macro, size_t macro_len,
                         char* out_stats, size_t stats_len,
                         int* out_used_generic) {
  if (auto st = need(ctx && input, "ctx and input must be non-null"))
    return st;
  FROST_GUARD_BEGIN
  InferBundle& ib = inference_bundle(ctx);
  const frost::InferResult r = frost::infer(
      input->img, ib.model, ib.library, ib.codebook,
      ctx->cfg.get_bool("spectral.log_scale", true),
      frost::window_mode_from_name(
          ctx->cfg.get_str("spectral.window", "corner")));
  if (out_class) *out_class = r.predicted_class;
  copy_name(frost::macro_name(r.macro), out_macro, macro_len);
  copy_name(r.stats_used, out_stats, stats_len);
  if (out_used_generic) *out_used_generic = r.used_generic ? 1 : 0;
  return FROST_OK;
  FROST_GUARD_END
}

}  // extern "C"
