#include "frost/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "frost/rng.hpp"
#include "parallel.hpp"

namespace frost {

namespace {

struct MatchedImage {
  Image corrupted;
  MatchResult match;
};

StatSetId policy_stats_id(const PolicySpec& policy, const Codebook& cb,
                          const MatchResult& match, int true_kind_or_clean) {
  switch (policy.type) {
    case PolicyType::kBaseline:
      return "clean";
    case PolicyType::kGeneric:
      return cb.generic_id;
    case PolicyType::kOracle:
      if (true_kind_or_clean < 0) return "clean";
      return cb.stat_map[static_cast<int>(
          macro_of(static_cast<CorruptionKind>(true_kind_or_clean)))];
    case PolicyType::kFrost: {
      const StatSetId fallback =
          policy.fallback.empty() ? cb.generic_id : policy.fallback;
      if (match.score_gap < policy.threshold) return fallback;
      return cb.stat_map[static_cast<int>(match.k_hat_1)];
    }
  }
  throw std::logic_error("policy_stats_id: bad policy type");
}

bool policy_is_generic_route(const PolicySpec& policy, const Codebook& cb,
                             const StatSetId& used) {
  const StatSetId fallback =
      policy.type == PolicyType::kFrost && !policy.fallback.empty()
          ? policy.fallback
          : cb.generic_id;
  return used == fallback;
}

// Batched argmax predictions for one StatSet over selected images.
void predict_indices(const ModelParams& model, const StatSet& stats,
                     const std::vector<MatchedImage>& cell,
                     const std::vector<std::size_t>& indices,
                     int forward_batch, int threads,
                     std::vector<int>& predictions) {
  set_nn_threads(threads);
  const std::size_t batches =
      (indices.size() + static_cast<std::size_t>(forward_batch) - 1) /
      static_cast<std::size_t>(forward_batch);
  {
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const std::size_t begin = bi * static_cast<std::size_t>(forward_batch);
      const std::size_t end =
          std::min(indices.size(), begin + static_cast<std::size_t>(forward_batch));
      Tensor batch({static_cast<int>(end - begin), 3, 64, 64});
      const std::size_t plane = 64 * 64;
      for (std::size_t i = begin; i < end; ++i) {
        const Image& img = cell[indices[i]].corrupted;
        float* dst = batch.data.data() + (i - begin) * 3 * plane;
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * 64 + x;
            dst[p] = img.at(x, y, 0);
            dst[plane + p] = img.at(x, y, img.channels == 3 ? 1 : 0);
            dst[2 * plane + p] = img.at(x, y, img.channels == 3 ? 2 : 0);
          }
      }
      const Tensor logits = forward_eval(model, stats, batch);
      for (std::size_t i = begin; i < end; ++i) {
        const float* row =
            logits.data.data() + (i - begin) * model.class_count;
        int best = 0;
        for (int k = 1; k < model.class_count; ++k)
          if (row[k] > row[best]) best = k;
        predictions[indices[i]] = best;
      }
    }
  }
}

}  // namespace

std::vector<MetricsReport> evaluate_policies(
    const ModelParams& model, const StatLibrary& library, const Codebook& cb,
    const ShapeDataset& test, const std::vector<PolicySpec>& policies,
    const EvalOptions& opts, const CorruptionTable& table) {
  if (test.images.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (policies.empty()) throw std::invalid_argument("evaluate: no policies");
  for (int sev : opts.severities)
    if (sev < 1 || sev > 5)
      throw std::invalid_argument("evaluate: severity outside 1..5");
  if (library.find("clean") == library.end())
    throw std::invalid_argument("evaluate: library missing 'clean'");
  if (library.find(cb.generic_id) == library.end())
    throw std::invalid_argument("evaluate: library missing generic set");
  for (int m = 0; m < kMacroCount; ++m)
    if (library.find(cb.stat_map[m]) == library.end())
      throw std::invalid_argument("evaluate: library missing macro set " +
                                  cb.stat_map[m]);
  for (const PolicySpec& p : policies)
    if (p.type == PolicyType::kFrost && !p.fallback.empty() &&
        library.find(p.fallback) == library.end())
      throw std::invalid_argument("evaluate: library missing fallback " +
                                  p.fallback);

  std::vector<MetricsReport> reports(policies.size());
  for (std::size_t p = 0; p < policies.size(); ++p) {
    reports[p].policy = policies[p].name;
    reports[p].threshold =
        policies[p].type == PolicyType::kFrost ? policies[p].threshold : 0.0;
    reports[p].severities = opts.severities;
    reports[p].eval_seed = opts.seed;
  }

  std::ofstream trace;
  if (!opts.trace_path.empty()) {
    trace.open(opts.trace_path);
    if (!trace)
      throw std::runtime_error("cannot write trace " + opts.trace_path);
    trace << "# true_kind severity index k1 k2 distances scores route pred\n";
  }
  // Trace follows the first frost policy, if any.
  std::size_t trace_policy = policies.size();
  for (std::size_t p = 0; p < policies.size(); ++p)
    if (policies[p].type == PolicyType::kFrost) {
      trace_policy = p;
      break;
    }

  const std::size_t count = test.images.size();
  std::vector<MatchedImage> cell(count);
  std::vector<int> predictions(count);

  auto run_cell = [&](int kind /* -1 = clean */, int severity) {
    // Corrupt + fingerprint + match, fanned out over images.
    const std::uint64_t cell_seed =
        kind < 0 ? 0
                 : Rng::derive(opts.seed,
                               static_cast<std::uint64_t>(kind) * 8 +
                                   static_cast<std::uint64_t>(severity));
    parallel_for(count, opts.threads, [&](std::size_t i0, std::size_t i1) {
      for (std::size_t i = i0; i < i1; ++i) {
        cell[i].corrupted =
            kind < 0
                ? test.images[i]
                : apply_corruption(test.images[i],
                                   static_cast<CorruptionKind>(kind),
                                   SeverityLevel(severity), cell_seed ^ i,
                                   table);
        const SpectralFeature f =
            extract_feature(cell[i].corrupted, cb.n, opts.log_scale,
                            opts.window);
        cell[i].match = match(f, cb);
      }
    });

    const int true_macro = kind < 0 ? -1 : static_cast<int>(macro_of(
                                               static_cast<CorruptionKind>(kind)));
    for (std::size_t p = 0; p < policies.size(); ++p) {
      const PolicySpec& policy = policies[p];
      MetricsReport& report = reports[p];

      // Group images by the StatSet the policy routes them to.
      std::map<StatSetId, std::vector<std::size_t>> groups;
      std::vector<StatSetId> used(count);
      for (std::size_t i = 0; i < count; ++i) {
        used[i] = policy_stats_id(policy, cb, cell[i].match, kind);
        groups[used[i]].push_back(i);
      }
      for (const auto& [id, indices] : groups)
        predict_indices(model, library.at(id), cell, indices,
                        opts.forward_batch, opts.threads, predictions);

      for (std::size_t i = 0; i < count; ++i) {
        const bool correct = predictions[i] == test.labels[i];
        const bool generic = policy_is_generic_route(policy, cb, used[i]);
        if (kind < 0) {
          ++report.clean_total;
          if (correct) ++report.clean_correct;
          if (generic) ++report.clean_generic;
        } else {
          ++report.cell_total[kind][severity - 1];
          if (correct) ++report.cell_correct[kind][severity - 1];
          if (generic) ++report.cell_generic[kind][severity - 1];
          if (static_cast<int>(cell[i].match.k_hat_1) == true_macro)
            ++report.cell_cb_correct[kind][severity - 1];
        }
        if (p == trace_policy && trace.is_open()) {
          char buf[512];
          std::string dists, scores;
          for (const MatchEntry& e : cell[i].match.ranked) {
            char tmp[48];
            std::snprintf(tmp, sizeof tmp, "%s%.4f", dists.empty() ? "" : ";",
                          e.distance);
            dists += tmp;
            std::snprintf(tmp, sizeof tmp, "%s%.4f", scores.empty() ? "" : ";",
                          e.score);
            scores += tmp;
          }
          std::snprintf(
              buf, sizeof buf, "%s %d %zu %s %s %s %s %s %d\n",
              kind < 0 ? "clean" : corruption_name(static_cast<CorruptionKind>(kind)),
              kind < 0 ? 0 : severity, i, macro_name(cell[i].match.k_hat_1),
              macro_name(cell[i].match.k_hat_2), dists.c_str(), scores.c_str(),
              generic ? "generic" : used[i].c_str(), predictions[i]);
          trace << buf;
        }
      }
    }
  };

  for (CorruptionKind kind : all_corruptions())
    for (int sev : opts.severities) run_cell(static_cast<int>(kind), sev);
  if (opts.include_clean) run_cell(-1, 0);
  return reports;
}

MetricsReport evaluate(const ModelParams& model, const StatLibrary& library,
                       const Codebook& cb, const ShapeDataset& test,
                       const EvalOptions& opts, const CorruptionTable& table) {
  PolicySpec frost;
  frost.type = PolicyType::kFrost;
  frost.threshold = cb.threshold;
  frost.name = "frost";
  return evaluate_policies(model, library, cb, test, {frost}, opts, table)[0];
}

double storage_overhead(const ModelParams& model, const StatLibrary& library,
                        const Codebook& cb) {
  std::size_t bytes = 0;
  for (int m = 0; m < kMacroCount; ++m)
    bytes += statset_payload_bytes(library.at(cb.stat_map[m]));
  bytes += statset_payload_bytes(library.at(cb.generic_id));
  bytes += static_cast<std::size_t>(kMacroCount) *
           static_cast<std::size_t>(cb.n) * cb.n * sizeof(float);
  return 100.0 * static_cast<double>(bytes) /
         static_cast<double>(model_checkpoint_bytes(model));
}

StatLibrary load_stat_library(const ArtifactPaths& paths,
                              const ModelParams& model, const Codebook& cb) {
  StatLibrary library;
  StatSet clean = model.default_stats;
  clean.id = "clean";
  library.emplace("clean", std::move(clean));
  auto load_id = [&](const StatSetId& id) {
    if (library.count(id)) return;
    StatSet s = load_statset(paths.statset(id));
    if (s.id != id)
      throw std::runtime_error("stat set id mismatch in " + paths.statset(id));
    check_stats_match(model, s);
    library.emplace(id, std::move(s));
  };
  load_id(cb.generic_id);
  for (int m = 0; m < kMacroCount; ++m) load_id(cb.stat_map[m]);
  return library;
}

std::vector<PolicySpec> ablation_policies(double threshold) {
  std::vector<PolicySpec> policies(5);
  policies[0] = {PolicyType::kBaseline, 0.0, "", "b"};
  policies[1] = {PolicyType::kGeneric, 0.0, "", "corr_g"};
  policies[2] = {PolicyType::kFrost, threshold, "clean", "b_c"};
  policies[3] = {PolicyType::kFrost, threshold, "", "frost"};
  policies[4] = {PolicyType::kOracle, 0.0, "", "corr_s"};
  return policies;
}

std::string format_ablation(const std::vector<MetricsReport>& reports,
                            double storage_pct) {
  if (reports.empty()) throw std::invalid_argument("format_ablation: empty");
  const MetricsReport& base = reports.front();
  std::ostringstream out;
  char buf[256];
  out << "FROST ablation summary\n";
  out << "======================\n";
  out << "severities:";
  for (int s : base.severities) out << " " << s;
  out << "\nCE baseline: policy '" << base.policy
      << "' (clean-trained model, clean statistics)\n";
  std::snprintf(buf, sizeof buf, "storage overhead: %.4f%% of checkpoint\n\n",
                storage_pct);
  out << buf;

  std::snprintf(buf, sizeof buf, "%-12s %9s %9s %9s %9s %9s\n", "policy",
                "total_acc", "clean_acc", "mCE", "cb_acc", "generic%");
  out << buf;
  for (const MetricsReport& r : reports) {
    std::snprintf(buf, sizeof buf, "%-12s %9.2f %9.2f %9.1f %9.2f %9.2f\n",
                  r.policy.c_str(), r.total_accuracy_pct(),
                  r.clean_accuracy_pct(), report_mce(r, base),
                  r.codebook_accuracy_pct(), r.generic_fraction_pct());
    out << buf;
  }

  out << "\nper-kind accuracy\n";
  for (const MetricsReport& r : reports) {
    out << "\n[" << r.policy << "]\n";
    std::snprintf(buf, sizeof buf, "%-16s", "kind");
    out << buf;
    for (int sev : r.severities) {
      std::snprintf(buf, sizeof buf, "   l%d_acc", sev);
      out << buf;
    }
    out << "   cb_acc\n";
    for (int k = 0; k < kCorruptionCount; ++k) {
      std::snprintf(buf, sizeof buf, "%-16s",
                    corruption_name(static_cast<CorruptionKind>(k)));
      out << buf;
      for (int sev : r.severities) {
        std::snprintf(buf, sizeof buf, " %8.2f", r.cell_accuracy_pct(k, sev));
        out << buf;
      }
      std::snprintf(buf, sizeof buf, " %8.2f\n",
                    r.codebook_accuracy_kind_pct(k));
      out << buf;
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Pipeline.

PipelineSeeds PipelineSeeds::derive(const Config& cfg) {
  PipelineSeeds seeds;
  seeds.master = cfg.get_u64("pipeline.seed", 42);
  seeds.data = Rng::derive(seeds.master, 1);
  seeds.train = Rng::derive(seeds.master, 2);
  seeds.prototypes = Rng::derive(seeds.master, 3);
  seeds.kmeans = Rng::derive(seeds.master, 4);
  seeds.fit_generic = Rng::derive(seeds.master, 5);
  for (int k = 0; k < kCorruptionCount; ++k)
    seeds.fit_specific[k] =
        Rng::derive(seeds.master, 6 + static_cast<std::uint64_t>(k));
  seeds.eval = Rng::derive(seeds.master, 20);
  return seeds;
}

TrainConfig train_config_from_config(const Config& cfg,
                                     const std::string& prefix,
                                     std::uint64_t seed, std::ostream* log) {
  TrainConfig t;
  const bool fitting = prefix == "fit";
  if (fitting) {
    t.epochs = 3;
    t.lr = 0.01;
    t.cosine_decay = false;
  } else {
    t.epochs = 20;
    t.lr = 0.05;
  }
  t.epochs = cfg.get_int(prefix + ".epochs", t.epochs);
  t.batch_size = cfg.get_int(prefix + ".batch_size", t.batch_size);
  t.lr = cfg.get_double(prefix + ".lr", t.lr);
  t.momentum = cfg.get_double(prefix + ".momentum", t.momentum);
  t.weight_decay = cfg.get_double(prefix + ".weight_decay", t.weight_decay);
  t.cosine_decay = cfg.get_bool(prefix + ".cosine", t.cosine_decay);
  t.bn_momentum = cfg.get_double(prefix + ".bn_momentum", t.bn_momentum);
  t.threads = cfg.get_int("nn.threads", t.threads);
  t.seed = seed;
  t.log = log;
  return t;
}

namespace {

double split_accuracy(const ModelParams& model, const StatSet& stats,
                      const ShapeDataset& ds, int forward_batch, int threads) {
  set_nn_threads(threads);
  std::vector<int> preds(ds.images.size());
  const std::size_t batches =
      (ds.images.size() + static_cast<std::size_t>(forward_batch) - 1) /
      static_cast<std::size_t>(forward_batch);
  for (std::size_t bi = 0; bi < batches; ++bi) {
    const std::size_t begin = bi * static_cast<std::size_t>(forward_batch);
    const std::size_t end = std::min(
        ds.images.size(), begin + static_cast<std::size_t>(forward_batch));
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
    const Tensor batch = images_to_batch(ds.images, idx);
    const Tensor logits = forward_eval(model, stats, batch);
    for (std::size_t i = begin; i < end; ++i) {
      const float* row = logits.data.data() + (i - begin) * model.class_count;
      int best = 0;
      for (int k = 1; k < model.class_count; ++k)
        if (row[k] > row[best]) best = k;
      preds[i] = best;
    }
  }
  long long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == ds.labels[i]) ++correct;
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(ds.images.size());
}

double vec_l2_delta(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

PrototypeBank build_prototype_stage(const Config& cfg,
                                    const ArtifactPaths& paths,
                                    const std::vector<Image>& train_images,
                                    const PipelineSeeds& seeds,
                                    ClusteringDiag* diag, std::ostream* log) {
  const int n = cfg.get_int("spectral.n", 15);
  const bool log_scale = cfg.get_bool("spectral.log_scale", true);
  const WindowMode window =
      window_mode_from_name(cfg.get_str("spectral.window", "corner"));
  const int threads = cfg.get_int("eval.threads", 1);
  const int kmeans_cap = cfg.get_int("kmeans.cap", 2000);
  const CorruptionTable table(cfg);

  PrototypeBank bank;
  bank.n = n;
  std::vector<SpectralFeature> kmeans_features;
  std::vector<int> kmeans_truth;
  for (CorruptionKind kind : all_corruptions()) {
    const int k = static_cast<int>(kind);
    const std::uint64_t kind_seed =
        Rng::derive(seeds.prototypes, static_cast<std::uint64_t>(k));
    std::vector<SpectralFeature> features(train_images.size());
    parallel_for(features.size(), threads, [&](std::size_t i0, std::size_t i1) {
      for (std::size_t i = i0; i < i1; ++i) {
        const Image corrupted = apply_corruption(
            train_images[i], kind, SeverityLevel(5), kind_seed ^ i, table);
        features[i] = extract_feature(corrupted, n, log_scale, window);
      }
    });
    RunningMean mean(n * n);
    for (const SpectralFeature& f : features) mean.update(f);
    bank.fine[k] = mean.snapshot(n);
    bank.counts[k] = mean.count();
    save_features(paths.features(corruption_name(kind)), features);
    const std::size_t take = std::min<std::size_t>(
        features.size(), static_cast<std::size_t>(kmeans_cap));
    for (std::size_t i = 0; i < take; ++i) {
      kmeans_features.push_back(features[i]);
      kmeans_truth.push_back(static_cast<int>(macro_of(kind)));
    }
  }
  macro_group(bank);
  save_bank(bank, paths.bank());

  const KMeansResult km =
      kmeans(kmeans_features, kMacroCount, seeds.kmeans,
             cfg.get_int("kmeans.max_iters", 300),
             cfg.get_int("kmeans.restarts", 5));
  const double ari =
      adjusted_rand_index(km.assignment, LabelAssignment{kmeans_truth});
  if (log) *log << "kmeans ARI vs macro labels: " << ari << "\n";
  if (diag) {
    diag->ari = ari;
    diag->inertia = km.inertia;
    diag->samples = kmeans_features.size();
    diag->cap = kmeans_cap;
  }
  return bank;
}

Codebook assemble_codebook_stage(const Config& cfg, const ArtifactPaths& paths,
                                 const PrototypeBank& bank,
                                 const std::map<CorruptionKind, StatSet>& per_kind,
                                 const StatSetId& generic_id) {
  auto macro_sets = macro_average_stats(per_kind);
  for (auto& [macro, s] : macro_sets) save_statset(s, paths.statset(s.id));
  std::array<StatSetId, kMacroCount> stat_map;
  for (int m = 0; m < kMacroCount; ++m)
    stat_map[m] = macro_sets.at(static_cast<MacroCorruption>(m)).id;
  const double threshold = cfg.get_double("codebook.threshold", 0.1);
  const Codebook cb = make_codebook(bank, threshold, stat_map, generic_id);
  save_codebook(cb, paths.codebook());
  return cb;
}

std::vector<MetricsReport> evaluate_stage(const Config& cfg,
                                          const ArtifactPaths& paths,
                                          const ModelParams& model,
                                          const Codebook& cb,
                                          const ShapeDataset& test,
                                          const PipelineSeeds& seeds,
                                          std::ostream* log) {
  const CorruptionTable table(cfg);
  StatLibrary library = load_stat_library(paths, model, cb);
  EvalOptions eval_opts;
  eval_opts.seed = seeds.eval;
  eval_opts.threads = cfg.get_int("eval.threads", 1);
  eval_opts.forward_batch = cfg.get_int("eval.forward_batch", 64);
  eval_opts.log_scale = cfg.get_bool("spectral.log_scale", true);
  eval_opts.window =
      window_mode_from_name(cfg.get_str("spectral.window", "corner"));
  eval_opts.severities = {4, 5};
  const auto policies = ablation_policies(cb.threshold);
  if (log) *log << "[eval ablation]\n";
  const auto reports =
      evaluate_policies(model, library, cb, test, policies, eval_opts, table);
  for (const MetricsReport& r : reports)
    save_report_csv(r, paths.report_csv(r.policy));
  const double overhead = storage_overhead(model, library, cb);
  {
    std::ofstream ab(paths.ablation(), std::ios::binary);
    ab << format_ablation(reports, overhead);
  }

  if (log) *log << "[sweep-threshold]\n";
  EvalOptions sweep_opts = eval_opts;
  sweep_opts.severities = {5};
  sweep_opts.include_clean = false;
  std::vector<PolicySpec> sweep_policies;
  const std::vector<double> sweep_ts = {0.0, 0.05, 0.1, 0.2};
  for (double t : sweep_ts)
    sweep_policies.push_back({PolicyType::kFrost, t, "", "frost"});
  const auto sweep_reports = evaluate_policies(model, library, cb, test,
                                               sweep_policies, sweep_opts, table);
  {
    std::ofstream sw(paths.sweep(), std::ios::binary);
    sw << "# frost threshold sweep v1\n";
    sw << "severities,5\n";
    sw << "threshold,accuracy_pct,codebook_accuracy_pct,generic_fraction_pct\n";
    char buf[160];
    for (std::size_t i = 0; i < sweep_ts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6f,%.4f,%.4f,%.4f\n", sweep_ts[i],
                    sweep_reports[i].total_accuracy_pct(),
                    sweep_reports[i].codebook_accuracy_pct(),
                    sweep_reports[i].generic_fraction_pct());
      sw << buf;
    }
  }
  return reports;
}

void run_pipeline(const Config& cfg, const std::string& artifact_dir,
                  std::ostream* log) {
  namespace fs = std::filesystem;
  const ArtifactPaths paths(artifact_dir);
  fs::create_directories(paths.stats_dir());
  {
    std::ofstream marker(paths.incomplete_marker());
    marker << "pipeline running\n";
  }

  std::vector<std::pair<std::string, std::uint64_t>> seed_log;
  std::string current_stage = "setup";
  try {
    const PipelineSeeds seeds = PipelineSeeds::derive(cfg);
    const int threads = cfg.get_int("eval.threads", 1);
    const int forward_batch = cfg.get_int("eval.forward_batch", 64);
    const CorruptionTable table(cfg);

    // ---- data
    current_stage = "gen-data";
    if (log) *log << "[gen-data]\n";
    const DataConfig data_cfg = DataConfig::from_config(cfg, seeds.data);
    seed_log.emplace_back("data", data_cfg.seed);
    const DatasetBundle bundle = generate_dataset(data_cfg);
    save_dataset(bundle, paths.dataset());

    // ---- training
    current_stage = "train";
    if (log) *log << "[train]\n";
    seed_log.emplace_back("train", seeds.train);
    const TrainConfig tc =
        train_config_from_config(cfg, "train", seeds.train, log);
    const ModelParams model =
        train_full(bundle.train.images, bundle.train.labels, kClassCount, tc);
    save_model(model, paths.model());
    {
      StatSet clean = model.default_stats;
      clean.id = "clean";
      save_statset(clean, paths.statset("clean"));
    }
    const double val_acc = split_accuracy(model, model.default_stats,
                                          bundle.val, forward_batch, threads);
    if (log) *log << "clean val accuracy: " << val_acc << "\n";

    // ---- prototypes + clustering diagnostic
    current_stage = "prototypes";
    if (log) *log << "[prototypes]\n";
    seed_log.emplace_back("prototypes", seeds.prototypes);
    seed_log.emplace_back("kmeans", seeds.kmeans);
    ClusteringDiag diag;
    const PrototypeBank bank = build_prototype_stage(
        cfg, paths, bundle.train.images, seeds, &diag, log);

    // ---- statistics fitting
    current_stage = "fit-generic";
    if (log) *log << "[fit-generic]\n";
    seed_log.emplace_back("fit.generic", seeds.fit_generic);
    const TrainConfig fit_generic_cfg =
        train_config_from_config(cfg, "fit", seeds.fit_generic, log);
    const StatSet s_da = fit_generic_stats(
        model, bundle.train.images, bundle.train.labels, fit_generic_cfg, table);
    save_statset(s_da, paths.statset(s_da.id));

    std::map<CorruptionKind, StatSet> per_kind;
    for (CorruptionKind kind : all_corruptions()) {
      const int k = static_cast<int>(kind);
      current_stage = std::string("fit-specific ") + corruption_name(kind);
      if (log) *log << "[fit-specific " << corruption_name(kind) << "]\n";
      seed_log.emplace_back(std::string("fit.") + corruption_name(kind),
                            seeds.fit_specific[k]);
      const TrainConfig fit_cfg =
          train_config_from_config(cfg, "fit", seeds.fit_specific[k], log);
      StatSet s = fit_specific_stats(model, kind, bundle.train.images,
                                     bundle.train.labels, fit_cfg, table);
      save_statset(s, paths.statset(s.id));
      per_kind.emplace(kind, std::move(s));
    }

    // ---- codebook
    current_stage = "build-codebook";
    if (log) *log << "[build-codebook]\n";
    const Codebook cb =
        assemble_codebook_stage(cfg, paths, bank, per_kind, s_da.id);

    // ---- evaluation + sweep
    current_stage = "eval";
    seed_log.emplace_back("eval", seeds.eval);
    const auto reports =
        evaluate_stage(cfg, paths, model, cb, bundle.test, seeds, log);
    const StatLibrary library = load_stat_library(paths, model, cb);
    const double overhead = storage_overhead(model, library, cb);

    // ---- diagnostics
    current_stage = "diagnostics";
    {
      std::ofstream out(paths.diagnostics(), std::ios::binary);
      char buf[256];
      out << "frost diagnostics v1\n";
      std::snprintf(buf, sizeof buf, "clean_val_accuracy_pct %.4f\n", val_acc);
      out << buf;
      out << "kmeans_k " << kMacroCount << "\n";
      out << "kmeans_cap " << diag.cap << "\n";
      out << "kmeans_samples " << diag.samples << "\n";
      std::snprintf(buf, sizeof buf, "kmeans_inertia %.4f\n", diag.inertia);
      out << buf;
      std::snprintf(buf, sizeof buf, "kmeans_ari %.6f\n", diag.ari);
      out << buf;
      std::snprintf(buf, sizeof buf, "storage_overhead_pct %.6f\n", overhead);
      out << buf;
      out << "spectral_n " << cfg.get_int("spectral.n", 15) << "\n";
      out << "spectral_log_scale "
          << (cfg.get_bool("spectral.log_scale", true) ? 1 : 0) << "\n";
      // Per-layer shift of each fitted set against the clean statistics;
      // the running moments move the most, gamma/beta follow the short
      // gradient schedule.
      auto shift_rows = [&](const StatSet& s) {
        for (std::size_t l = 0; l < s.per_layer.size(); ++l) {
          const NormStats& a = s.per_layer[l];
          const NormStats& c = model.default_stats.per_layer[l];
          std::snprintf(buf, sizeof buf,
                        "stats_shift %s layer%zu mean_l2 %.6f var_l2 %.6f "
                        "gamma_l2 %.6f beta_l2 %.6f\n",
                        s.id.c_str(), l,
                        vec_l2_delta(a.running_mean, c.running_mean),
                        vec_l2_delta(a.running_var, c.running_var),
                        vec_l2_delta(a.gamma, c.gamma),
                        vec_l2_delta(a.beta, c.beta));
          out << buf;
        }
      };
      shift_rows(s_da);
      for (const auto& [kind, s] : per_kind) shift_rows(s);
      for (int m = 0; m < kMacroCount; ++m)
        shift_rows(library.at(cb.stat_map[m]));
    }

    // ---- manifest
    current_stage = "manifest";
    {
      std::ofstream mf(paths.manifest(), std::ios::binary);
      char buf[64];
      mf << "frost pipeline manifest v1\n";
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(cfg.hash()));
      mf << "config_hash " << buf << "\n";
      mf << "master_seed " << seeds.master << "\n";
      for (const auto& [name, value] : seed_log)
        mf << "seed " << name << " " << value << "\n";
      const char* artifacts[] = {"dataset.bin", "model.ckpt",
                                 "prototypes.bank", "codebook.cbk",
                                 "diagnostics.txt", "ablation.txt",
                                 "threshold_sweep.csv"};
      for (const char* a : artifacts) mf << "artifact " << a << "\n";
      for (const MetricsReport& r : reports)
        mf << "artifact report_" << r.policy << ".csv\n";
    }
    fs::remove(paths.incomplete_marker());
  } catch (const std::exception& e) {
    {
      std::ofstream marker(paths.incomplete_marker());
      marker << "failed at stage: " << current_stage << "\n"
             << e.what() << "\n";
    }
    throw std::runtime_error("pipeline stage '" + current_stage +
                             "' failed: " + e.what());
  }
}

}  // namespace frost
