#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "frost/corruptions.hpp"
#include "frost/image.hpp"
#include "frost/prototypes.hpp"

namespace frost {

struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
};

// Per-channel normalization statistics of one BN layer.
struct NormStats {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;

  int channels() const { return static_cast<int>(gamma.size()); }
  static NormStats identity(int channels);
};

void validate_stats(const NormStats& s);

using StatSetId = std::string;

// All normalization statistics of a model, one entry per BN layer.
struct StatSet {
  StatSetId id;
  std::vector<NormStats> per_layer;
};

// TinyCNN: three conv/BN/ReLU stages (16, 32, 64 channels; pools after the
// first two, global average pool after the third) and a linear head.
struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  Tensor weight;  // [out, in, 3, 3]
  Tensor bias;    // [out]
};

struct ModelParams {
  int class_count = 0;
  ConvLayer conv1, conv2, conv3;
  Tensor fc_weight;  // [classes, 64]
  Tensor fc_bias;    // [classes]
  StatSet default_stats;  // statistics estimated on clean training data

  std::string arch_signature() const;
};

constexpr double kBnEps = 1e-5;

// Worker count used by the conv/BN kernels. Outputs are bitwise identical
// for any setting; this is purely a wall-clock knob.
void set_nn_threads(int threads);
int nn_threads();

ModelParams init_model(int class_count, std::uint64_t seed);

// Checks that a StatSet fits the model (3 layers, matching channel counts).
void check_stats_match(const ModelParams& model, const StatSet& stats);

// A model with a chosen StatSet bound for inference. Never mutates the
// model's weights; binding a different set and rebinding the original gives
// bitwise-identical logits.
struct BoundModel {
  const ModelParams* model = nullptr;
  const StatSet* stats = nullptr;
};

BoundModel swap_stats(const ModelParams& model, const StatSet& stats);

// Eval-mode forward pass: deterministic, running statistics only.
// batch is [B, 3, 64, 64]; logits come back [B, classes].
Tensor forward_eval(const BoundModel& bound, const Tensor& batch);
Tensor forward_eval(const ModelParams& model, const StatSet& stats,
                    const Tensor& batch);

// Standalone BN layer (spec surface + unit tests). x is [B, C, H, W].
// Train mode normalizes by batch moments and updates running statistics
// in place; eval mode is a pure function of the running statistics.
Tensor batchnorm_apply(const Tensor& x, NormStats& stats, bool train,
                       double eps = kBnEps, double momentum = 0.1);

struct Gradients {
  Tensor conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b;
  Tensor fc_w, fc_b;
  std::vector<float> bn_gamma[3];
  std::vector<float> bn_beta[3];
};

// Mean cross-entropy of the batch under train-mode BN (batch moments),
// without touching any state. Used by the finite-difference oracle.
double compute_loss(const ModelParams& model, const StatSet& stats,
                    const Tensor& batch, const std::vector<int>& labels);

// Train-mode forward/backward. Updates running stats in `stats` (momentum
// `bn_momentum`), fills `grads`, returns the mean loss. When
// `frozen_backbone` is set, conv/fc gradients are skipped (left zero).
double train_step_grads(const ModelParams& model, StatSet& stats,
                        const Tensor& batch, const std::vector<int>& labels,
                        double bn_momentum, bool frozen_backbone,
                        Gradients& grads);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool cosine_decay = true;
  double bn_momentum = 0.1;
  std::uint64_t seed = 1;
  int threads = 1;
  std::ostream* log = nullptr;

  void validate() const;
};

// Full SGD training from random init; deterministic for a fixed seed.
// Aborts with a diagnostic when the loss stops being finite.
ModelParams train_full(const std::vector<Image>& images,
                       const std::vector<int>& labels, int class_count,
                       const TrainConfig& cfg);

// Norm-layer-only fitting: backbone frozen, gamma/beta by gradient,
// running mean/var by running average. Each sample is corrupted on the fly
// with severity drawn uniformly from {4,5}; generic draws the kind uniformly
// from all nine, specific uses one fixed kind.
StatSet fit_generic_stats(const ModelParams& model,
                          const std::vector<Image>& images,
                          const std::vector<int>& labels,
                          const TrainConfig& cfg,
                          const CorruptionTable& table = CorruptionTable());
StatSet fit_specific_stats(const ModelParams& model, CorruptionKind kind,
                           const std::vector<Image>& images,
                           const std::vector<int>& labels,
                           const TrainConfig& cfg,
                           const CorruptionTable& table = CorruptionTable());

// Elementwise mean of member StatSets per macro group; singletons pass
// through (with a fresh id).
std::map<MacroCorruption, StatSet> macro_average_stats(
    const std::map<CorruptionKind, StatSet>& per_kind);

// Converts images to a [B, 3, 64, 64] tensor (grayscale replicated).
Tensor images_to_batch(const std::vector<Image>& images,
                       const std::vector<std::size_t>& indices);
Tensor image_to_batch(const Image& image);

// Checkpoint: magic "FROSTCKPT1", architecture signature, named tensors.
// Round-trips bit-exactly.
void save_model(const ModelParams& model, const std::string& path);
ModelParams load_model(const std::string& path);

// StatSet file: magic "FROSTSTAT1". Round-trips bit-exactly.
void save_statset(const StatSet& stats, const std::string& path);
StatSet load_statset(const std::string& path);

// Serialized sizes (bytes) used by the storage-overhead accounting.
std::size_t model_checkpoint_bytes(const ModelParams& model);
std::size_t statset_payload_bytes(const StatSet& stats);

}  // namespace frost
