#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "frost/nn.hpp"
#include "frost/prototypes.hpp"
#include "frost/spectral.hpp"

namespace frost {

// Maps macro prototypes to StatSet identifiers, with the uncertainty
// threshold that routes low-margin matches to the generic set.
struct Codebook {
  int n = 0;
  double threshold = 0.1;  // T in [0, 1]
  std::array<SpectralFeature, kMacroCount> macro_prototypes;
  std::array<StatSetId, kMacroCount> stat_map;
  StatSetId generic_id;
};

Codebook make_codebook(const PrototypeBank& bank, double threshold,
                       const std::array<StatSetId, kMacroCount>& stat_map,
                       StatSetId generic_id);

void validate_codebook(const Codebook& cb);

struct MatchEntry {
  MacroCorruption macro;
  double distance;  // raw l2
  double score;     // distance / sum of distances
};

struct MatchResult {
  std::array<MatchEntry, kMacroCount> ranked;  // ascending by distance
  MacroCorruption k_hat_1;
  MacroCorruption k_hat_2;
  bool uncertain = false;  // |score_1 - score_2| < T (or degenerate)
  double score_gap = 0.0;
  double raw_gap = 0.0;  // recorded for diagnostics
};

// l2 distances to the five macro prototypes with sum-normalized scores.
// Ties break by macro enum order; an all-zero distance vector degenerates
// to uniform scores and an uncertain match.
MatchResult match(const SpectralFeature& feature, const Codebook& cb);

// Generic id when the top-2 score gap is below T, otherwise the macro's
// specific id. Total: always returns a valid id from the codebook.
StatSetId select_stats(const MatchResult& result, const Codebook& cb);

struct InferResult {
  int predicted_class = -1;
  bool used_generic = false;
  MacroCorruption macro = MacroCorruption::kContrast;  // k_hat_1
  StatSetId stats_used;
  MatchResult match;
};

using StatLibrary = std::map<StatSetId, StatSet>;

// extract_feature -> match -> select_stats -> swap_stats -> forward(eval)
// -> argmax. Missing StatSetIds are a configuration error raised before any
// forward pass.
InferResult infer(const Image& image, const ModelParams& model,
                  const StatLibrary& library, const Codebook& cb,
                  bool log_scale = true,
                  WindowMode window = WindowMode::kCorner);

// Codebook file: magic "FROSTCBK1", version, n, T, macro entries, generic
// id, CRC-32 of everything after the magic. Round-trips losslessly; loads
// of truncated or edited files fail without producing a partial codebook.
void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t len);

}  // namespace frost
