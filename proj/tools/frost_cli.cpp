// Command-line front end for the FROST library. Talks to the shared
// library strictly through the C API in frost/frost_c.h.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frost/frost_c.h"

namespace {

int fail(frost_status status) {
  std::fprintf(stderr, "error (%d): %s\n", static_cast<int>(status),
               frost_last_error());
  return 1;
}

struct CtxGuard {
  frost_ctx* ctx = nullptr;
  ~CtxGuard() { frost_ctx_destroy(ctx); }
};

struct ImageGuard {
  frost_image* img = nullptr;
  ~ImageGuard() { frost_image_destroy(img); }
};

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t next = csv.find(',', pos);
    if (next == std::string::npos) next = csv.size();
    const std::string tok = csv.substr(pos, next - pos);
    if (!tok.empty()) out.push_back(std::stod(tok));
    pos = next + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FROST: corruption detection via FFT fingerprints and "
               "normalization-statistics swapping"};
  app.require_subcommand(1);

  std::string artifacts = "artifacts";
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--artifacts", artifacts,
                 "Artifact directory (env FROST_ARTIFACT_DIR)")
      ->envname("FROST_ARTIFACT_DIR");
  app.add_option("--config", config_path, "Config file (key = value lines)");
  app.add_option("--set", overrides, "Inline config override key=value");

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset");

  auto* train = app.add_subcommand("train", "Train the classifier");

  auto* fit = app.add_subcommand(
      "fit-stats", "Fit normalization statistics on corrupted data");
  std::string fit_mode;
  std::string fit_kind;
  fit->add_option("--mode", fit_mode, "generic|specific")->required();
  fit->add_option("--kind", fit_kind,
                  "Corruption kind for --mode specific (default: all nine)");

  auto* build = app.add_subcommand(
      "build-codebook", "Build prototypes, macro statistics and the codebook");

  auto* corrupt = app.add_subcommand("corrupt", "Corrupt a PGM/PPM image");
  std::string c_in, c_out, c_kind;
  int c_severity = 5;
  std::uint64_t c_seed = 0;
  corrupt->add_option("--in", c_in, "Input image (PGM/PPM)")->required();
  corrupt->add_option("--out", c_out, "Output image")->required();
  corrupt->add_option("--kind", c_kind, "Corruption kind name")->required();
  corrupt->add_option("--severity", c_severity, "Severity 1..5");
  corrupt->add_option("--seed", c_seed, "Random seed");

  auto* fingerprint = app.add_subcommand(
      "fingerprint", "High-frequency FFT feature of an image");
  std::string f_in;
  int f_n = 15;
  fingerprint->add_option("--in", f_in, "Input image (PGM/PPM)")->required();
  fingerprint->add_option("--n", f_n, "Window size (default 15)");

  auto* eval = app.add_subcommand("eval", "Evaluate on corrupted test data");
  std::string e_severities = "4,5";
  std::string e_policy = "frost";
  double e_threshold = -1.0;
  bool e_gate = false;
  eval->add_option("--severities", e_severities, "Comma list, e.g. 4,5");
  eval->add_option("--threshold", e_threshold,
                   "Routing threshold T (default: codebook's)");
  eval->add_option("--policy", e_policy,
                   "frost|baseline|generic|oracle|ablation");
  eval->add_flag("--gate", e_gate,
                 "Run the ablation and exit 2 unless corr_s >= frost >= "
                 "corr_g >= b within 1 point");

  auto* sweep = app.add_subcommand("sweep-threshold",
                                   "Evaluate FROST at several thresholds");
  std::string s_severities = "5";
  std::string s_thresholds = "0.0,0.05,0.1,0.15,0.2,0.3,0.5";
  sweep->add_option("--severities", s_severities, "Comma list, e.g. 5");
  sweep->add_option("--thresholds", s_thresholds, "Comma list of T values");

  auto* report = app.add_subcommand("report", "Print stored reports");

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");

  auto* infer = app.add_subcommand("infer", "Classify one image with routing");
  std::string i_in;
  infer->add_option("--in", i_in, "Input image (PGM/PPM)")->required();

  CLI11_PARSE(app, argc, argv);

  CtxGuard guard;
  if (frost_status st = frost_ctx_create(artifacts.c_str(), &guard.ctx))
    return fail(st);
  if (!config_path.empty())
    if (frost_status st = frost_ctx_load_config(guard.ctx, config_path.c_str()))
      return fail(st);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return 1;
    }
    if (frost_status st = frost_ctx_set(guard.ctx, kv.substr(0, eq).c_str(),
                                        kv.substr(eq + 1).c_str()))
      return fail(st);
  }

  if (gen->parsed()) {
    if (frost_status st = frost_gen_data(guard.ctx)) return fail(st);
    std::printf("dataset written to %s\n", artifacts.c_str());
  } else if (train->parsed()) {
    if (frost_status st = frost_train(guard.ctx)) return fail(st);
    std::printf("model written to %s\n", artifacts.c_str());
  } else if (fit->parsed()) {
    if (frost_status st = frost_fit_stats(
            guard.ctx, fit_mode.c_str(),
            fit_kind.empty() ? nullptr : fit_kind.c_str()))
      return fail(st);
    std::printf("statistics written to %s/stats\n", artifacts.c_str());
  } else if (build->parsed()) {
    if (frost_status st = frost_build_codebook(guard.ctx)) return fail(st);
    std::printf("codebook written to %s\n", artifacts.c_str());
  } else if (corrupt->parsed()) {
    ImageGuard in, out;
    if (frost_status st = frost_image_load(c_in.c_str(), &in.img))
      return fail(st);
    if (frost_status st = frost_corrupt(guard.ctx, in.img, c_kind.c_str(),
                                        c_severity, c_seed, &out.img))
      return fail(st);
    if (frost_status st = frost_image_save(out.img, c_out.c_str()))
      return fail(st);
  } else if (fingerprint->parsed()) {
    ImageGuard in;
    if (frost_status st = frost_image_load(f_in.c_str(), &in.img))
      return fail(st);
    std::vector<float> values(static_cast<std::size_t>(f_n) * f_n);
    if (frost_status st =
            frost_fingerprint(in.img, f_n, values.data(), values.size()))
      return fail(st);
    for (int r = 0; r < f_n; ++r) {
      for (int c = 0; c < f_n; ++c)
        std::printf("%s%.6f", c ? " " : "",
                    values[static_cast<std::size_t>(r) * f_n + c]);
      std::printf("\n");
    }
  } else if (eval->parsed()) {
    const std::string policy = e_gate ? "ablation" : e_policy;
    int gate_ok = 1;
    if (frost_status st = frost_eval(guard.ctx, e_severities.c_str(),
                                     e_threshold, policy.c_str(), &gate_ok))
      return fail(st);
    if (e_gate && !gate_ok) {
      std::fprintf(stderr,
                   "acceptance gate failed: ablation ordering violated\n");
      return 2;
    }
  } else if (sweep->parsed()) {
    const std::vector<double> ts = parse_double_list(s_thresholds);
    if (frost_status st = frost_sweep_threshold(
            guard.ctx, s_severities.c_str(), ts.data(), ts.size()))
      return fail(st);
  } else if (report->parsed()) {
    if (frost_status st = frost_report(guard.ctx)) return fail(st);
  } else if (pipeline->parsed()) {
    if (frost_status st = frost_run_pipeline(guard.ctx)) return fail(st);
    std::printf("pipeline complete; artifacts in %s\n", artifacts.c_str());
  } else if (infer->parsed()) {
    ImageGuard in;
    if (frost_status st = frost_image_load(i_in.c_str(), &in.img))
      return fail(st);
    int cls = -1, generic = 0;
    char macro[32], stats[64];
    if (frost_status st = frost_infer(guard.ctx, in.img, &cls, macro,
                                      sizeof macro, stats, sizeof stats,
                                      &generic))
      return fail(st);
    std::printf("class %d  macro %s  stats %s  route %s\n", cls, macro, stats,
                generic ? "generic" : "specific");
  }
  return 0;
}
