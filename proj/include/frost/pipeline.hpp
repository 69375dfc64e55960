#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "frost/codebook.hpp"
#include "frost/config.hpp"
#include "frost/dataset.hpp"
#include "frost/metrics.hpp"
#include "frost/nn.hpp"

namespace frost {

enum class PolicyType {
  kBaseline,  // clean statistics always
  kGeneric,   // the generic set always
  kFrost,     // threshold routing between macro sets and a fallback
  kOracle,    // true macro's set (upper bound)
};

struct PolicySpec {
  PolicyType type = PolicyType::kFrost;
  double threshold = 0.1;   // frost only
  StatSetId fallback;       // frost fallback; empty means codebook's generic
  std::string name;         // report label
};

struct EvalOptions {
  std::vector<int> severities{4, 5};
  std::uint64_t seed = 1;
  int threads = 1;
  int forward_batch = 64;
  bool log_scale = true;
  WindowMode window = WindowMode::kCorner;
  bool include_clean = true;
  std::string trace_path;  // per-image trace of the first frost policy
};

// Runs every policy over the same corrupted images (one corruption +
// match pass, shared across policies). Reports come back in policy order.
std::vector<MetricsReport> evaluate_policies(
    const ModelParams& model, const StatLibrary& library, const Codebook& cb,
    const ShapeDataset& test, const std::vector<PolicySpec>& policies,
    const EvalOptions& opts, const CorruptionTable& table = CorruptionTable());

// Spec surface: the FROST policy alone.
MetricsReport evaluate(const ModelParams& model, const StatLibrary& library,
                       const Codebook& cb, const ShapeDataset& test,
                       const EvalOptions& opts,
                       const CorruptionTable& table = CorruptionTable());

// (6 stat sets + 5 prototype vectors) as float payload bytes over the
// serialized checkpoint size, in percent.
double storage_overhead(const ModelParams& model, const StatLibrary& library,
                        const Codebook& cb);

// Well-known artifact file names inside an artifact directory.
struct ArtifactPaths {
  std::string root;
  explicit ArtifactPaths(std::string dir) : root(std::move(dir)) {}
  std::string dataset() const { return root + "/dataset.bin"; }
  std::string model() const { return root + "/model.ckpt"; }
  std::string stats_dir() const { return root + "/stats"; }
  std::string statset(const StatSetId& id) const {
    return stats_dir() + "/" + id + ".stat";
  }
  std::string bank() const { return root + "/prototypes.bank"; }
  std::string features(const std::string& kind) const {
    return root + "/features_" + kind + "_l5.feat";
  }
  std::string codebook() const { return root + "/codebook.cbk"; }
  std::string diagnostics() const { return root + "/diagnostics.txt"; }
  std::string manifest() const { return root + "/manifest.txt"; }
  std::string report_csv(const std::string& policy) const {
    return root + "/report_" + policy + ".csv";
  }
  std::string ablation() const { return root + "/ablation.txt"; }
  std::string sweep() const { return root + "/threshold_sweep.csv"; }
  std::string incomplete_marker() const { return root + "/INCOMPLETE"; }
};

// Loads every StatSet the codebook needs (plus "clean" from the model).
StatLibrary load_stat_library(const ArtifactPaths& paths,
                              const ModelParams& model, const Codebook& cb);

// The standard policy set of the ablation layout:
// b, corr_g, b_c, frost, corr_s.
std::vector<PolicySpec> ablation_policies(double threshold);

// Stage seed schedule, all derived from pipeline.seed. The staged CLI flow
// and the one-shot pipeline consume identical seeds, so they produce
// identical artifacts for the same config.
struct PipelineSeeds {
  std::uint64_t master = 0;
  std::uint64_t data = 0;
  std::uint64_t train = 0;
  std::uint64_t prototypes = 0;
  std::uint64_t kmeans = 0;
  std::uint64_t fit_generic = 0;
  std::uint64_t eval = 0;
  std::array<std::uint64_t, kCorruptionCount> fit_specific{};

  static PipelineSeeds derive(const Config& cfg);
};

TrainConfig train_config_from_config(const Config& cfg,
                                     const std::string& prefix,
                                     std::uint64_t seed, std::ostream* log);

struct ClusteringDiag {
  double ari = 0.0;
  double inertia = 0.0;
  std::size_t samples = 0;
  int cap = 0;
};

// Prototypes over the training split at the strongest severity, per-kind
// feature caches, and the k-means/ARI separability diagnostic. Writes
// prototypes.bank and features_<kind>_l5.feat.
PrototypeBank build_prototype_stage(const Config& cfg,
                                    const ArtifactPaths& paths,
                                    const std::vector<Image>& train_images,
                                    const PipelineSeeds& seeds,
                                    ClusteringDiag* diag, std::ostream* log);

// Macro-averages the nine fine StatSets, writes the macro StatSet files
// and the codebook file.
Codebook assemble_codebook_stage(const Config& cfg, const ArtifactPaths& paths,
                                 const PrototypeBank& bank,
                                 const std::map<CorruptionKind, StatSet>& per_kind,
                                 const StatSetId& generic_id);

// Ablation evaluation at severities {4,5} plus the strongest-severity
// threshold sweep; writes the per-policy CSVs, ablation.txt and
// threshold_sweep.csv. Returns the ablation reports in policy order.
std::vector<MetricsReport> evaluate_stage(const Config& cfg,
                                          const ArtifactPaths& paths,
                                          const ModelParams& model,
                                          const Codebook& cb,
                                          const ShapeDataset& test,
                                          const PipelineSeeds& seeds,
                                          std::ostream* log);

// Renders the structured-text summary over ablation reports (row order as
// given). Baseline must be the first report.
std::string format_ablation(const std::vector<MetricsReport>& reports,
                            double storage_pct);

// End-to-end: gen-data, train, prototypes + clustering diagnostic, stat
// fitting, codebook assembly, evaluation, reports, manifest. Every stage
// failure aborts with the stage name; an INCOMPLETE marker stays behind in
// that case.
void run_pipeline(const Config& cfg, const std::string& artifact_dir,
                  std::ostream* log);

}  // namespace frost
