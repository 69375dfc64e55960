#include "frost/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"

namespace frost {

Codebook make_codebook(const PrototypeBank& bank, double threshold,
                       const std::array<StatSetId, kMacroCount>& stat_map,
                       StatSetId generic_id) {
  if (!bank.has_macro)
    throw std::invalid_argument("make_codebook: bank missing macro prototypes");
  Codebook cb;
  cb.n = bank.n;
  cb.threshold = threshold;
  cb.macro_prototypes = bank.macro;
  cb.stat_map = stat_map;
  cb.generic_id = std::move(generic_id);
  validate_codebook(cb);
  return cb;
}

void validate_codebook(const Codebook& cb) {
  if (cb.n < 1 || cb.n > 32)
    throw std::runtime_error("codebook: bad window size");
  if (!(cb.threshold >= 0.0 && cb.threshold <= 1.0))
    throw std::runtime_error("codebook: threshold outside [0,1]");
  if (cb.generic_id.empty())
    throw std::runtime_error("codebook: empty generic id");
  for (int m = 0; m < kMacroCount; ++m) {
    const SpectralFeature& p = cb.macro_prototypes[m];
    if (p.n != cb.n ||
        p.values.size() != static_cast<std::size_t>(cb.n) * cb.n)
      throw std::runtime_error("codebook: prototype shape mismatch");
    for (float v : p.values)
      if (!std::isfinite(v))
        throw std::runtime_error("codebook: non-finite prototype");
    if (cb.stat_map[m].empty())
      throw std::runtime_error("codebook: missing stat id for macro " +
                               std::string(macro_name(static_cast<MacroCorruption>(m))));
  }
}

MatchResult match(const SpectralFeature& feature, const Codebook& cb) {
  if (feature.n != cb.n ||
      feature.values.size() != static_cast<std::size_t>(cb.n) * cb.n)
    throw std::invalid_argument("match: feature dimension mismatch");

  MatchResult r;
  double total = 0.0;
  for (int m = 0; m < kMacroCount; ++m) {
    const double d = feature_distance(feature, cb.macro_prototypes[m]);
    r.ranked[m] = {static_cast<MacroCorruption>(m), d, 0.0};
    total += d;
  }
  if (total == 0.0) {
    // Feature coincides with every prototype; nothing to distinguish.
    for (auto& e : r.ranked) e.score = 1.0 / kMacroCount;
    r.k_hat_1 = MacroCorruption::kContrast;
    r.k_hat_2 = MacroCorruption::kBrightness;
    r.uncertain = true;
    return r;
  }
  for (auto& e : r.ranked) e.score = e.distance / total;
  std::stable_sort(r.ranked.begin(), r.ranked.end(),
                   [](const MatchEntry& a, const MatchEntry& b) {
                     return a.distance < b.distance;
                   });
  r.k_hat_1 = r.ranked[0].macro;
  r.k_hat_2 = r.ranked[1].macro;
  r.score_gap = std::abs(r.ranked[0].score - r.ranked[1].score);
  r.raw_gap = std::abs(r.ranked[0].distance - r.ranked[1].distance);
  r.uncertain = r.score_gap < cb.threshold;
  return r;
}

StatSetId select_stats(const MatchResult& result, const Codebook& cb) {
  // Recomputed from the gap so one MatchResult can be re-routed under a
  // different threshold (the sweep command relies on this).
  if (result.score_gap < cb.threshold) return cb.generic_id;
  return cb.stat_map[static_cast<int>(result.k_hat_1)];
}

InferResult infer(const Image& image, const ModelParams& model,
                  const StatLibrary& library, const Codebook& cb,
                  bool log_scale, WindowMode window) {
  // Configuration must be complete before any forward pass runs.
  if (library.find(cb.generic_id) == library.end())
    throw std::runtime_error("infer: generic StatSet '" + cb.generic_id +
                             "' missing from library");
  for (int m = 0; m < kMacroCount; ++m)
    if (library.find(cb.stat_map[m]) == library.end())
      throw std::runtime_error("infer: StatSet '" + cb.stat_map[m] +
                               "' missing from library");

  InferResult r;
  const SpectralFeature feature = extract_feature(image, cb.n, log_scale, window);
  r.match = match(feature, cb);
  r.macro = r.match.k_hat_1;
  r.stats_used = select_stats(r.match, cb);
  r.used_generic = r.stats_used == cb.generic_id;

  const StatSet& stats = library.at(r.stats_used);
  const Tensor logits = forward_eval(model, stats, image_to_batch(image));
  int best = 0;
  for (int k = 1; k < model.class_count; ++k)
    if (logits.data[k] > logits.data[best]) best = k;
  r.predicted_class = best;
  return r;
}

// ---------------------------------------------------------------------------

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static std::uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kCbkMagic[9] = {'F', 'R', 'O', 'S', 'T', 'C', 'B', 'K', '1'};

}  // namespace

void save_codebook(const Codebook& cb, const std::string& path) {
  validate_codebook(cb);
  std::ostringstream payload(std::ios::binary);
  payload.put(1);  // version
  binio::write_le<std::uint32_t>(payload, static_cast<std::uint32_t>(cb.n));
  binio::write_f64(payload, cb.threshold);
  for (int m = 0; m < kMacroCount; ++m) {
    binio::write_string(payload, macro_name(static_cast<MacroCorruption>(m)));
    binio::write_string(payload, cb.stat_map[m]);
    binio::write_f32_array(payload, cb.macro_prototypes[m].values.data(),
                           cb.macro_prototypes[m].values.size());
  }
  binio::write_string(payload, cb.generic_id);

  const std::string body = payload.str();
  const std::uint32_t checksum =
      crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kCbkMagic, sizeof kCbkMagic);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  binio::write_le<std::uint32_t>(out, checksum);
  if (!out) throw std::runtime_error("short write: " + path);
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof kCbkMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCbkMagic, sizeof magic) != 0)
    throw std::runtime_error("codebook: bad magic in " + path);

  std::string rest((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (rest.size() < 5) throw std::runtime_error("codebook: truncated file");
  const std::string body = rest.substr(0, rest.size() - 4);
  std::istringstream tail(rest.substr(rest.size() - 4), std::ios::binary);
  const std::uint32_t stored = binio::read_le<std::uint32_t>(tail);
  const std::uint32_t actual =
      crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size());
  if (stored != actual)
    throw std::runtime_error("codebook: checksum mismatch in " + path);

  std::istringstream ps(body, std::ios::binary);
  const int version = ps.get();
  if (version != 1) throw std::runtime_error("codebook: unsupported version");
  Codebook cb;
  cb.n = static_cast<int>(binio::read_le<std::uint32_t>(ps));
  if (cb.n < 1 || cb.n > 32) throw std::runtime_error("codebook: bad n");
  cb.threshold = binio::read_f64(ps);
  for (int m = 0; m < kMacroCount; ++m) {
    const std::string name = binio::read_string(ps);
    if (name != macro_name(static_cast<MacroCorruption>(m)))
      throw std::runtime_error("codebook: macro order mismatch");
    cb.stat_map[m] = binio::read_string(ps);
    cb.macro_prototypes[m].n = cb.n;
    cb.macro_prototypes[m].values.resize(static_cast<std::size_t>(cb.n) * cb.n);
    binio::read_f32_array(ps, cb.macro_prototypes[m].values.data(),
                          cb.macro_prototypes[m].values.size());
  }
  cb.generic_id = binio::read_string(ps);
  validate_codebook(cb);
  return cb;
}

}  // namespace frost
