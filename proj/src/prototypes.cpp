#include "frost/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "frost/rng.hpp"

namespace frost {

namespace {

const char* kMacroNames[kMacroCount] = {"contrast", "brightness", "defocus",
                                        "blur", "noise"};

}  // namespace

const char* macro_name(MacroCorruption macro) {
  return kMacroNames[static_cast<int>(macro)];
}

MacroCorruption macro_from_name(const std::string& name) {
  for (int i = 0; i < kMacroCount; ++i)
    if (name == kMacroNames[i]) return static_cast<MacroCorruption>(i);
  throw std::invalid_argument("unknown macro corruption: " + name);
}

MacroCorruption macro_of(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kContrast: return MacroCorruption::kContrast;
    case CorruptionKind::kBrightness: return MacroCorruption::kBrightness;
    case CorruptionKind::kDefocusBlur: return MacroCorruption::kDefocus;
    case CorruptionKind::kGlassBlur:
    case CorruptionKind::kMotionBlur:
    case CorruptionKind::kZoomBlur: return MacroCorruption::kBlur;
    case CorruptionKind::kImpulseNoise:
    case CorruptionKind::kShotNoise:
    case CorruptionKind::kGaussianNoise: return MacroCorruption::kNoise;
  }
  throw std::invalid_argument("macro_of: bad kind");
}

std::vector<CorruptionKind> macro_members(MacroCorruption macro) {
  std::vector<CorruptionKind> members;
  for (CorruptionKind k : all_corruptions())
    if (macro_of(k) == macro) members.push_back(k);
  return members;
}

void RunningMean::update(const SpectralFeature& f) {
  if (mean_.empty()) mean_.assign(f.values.size(), 0.0);
  if (f.values.size() != mean_.size())
    throw std::invalid_argument("running mean: dimension mismatch");
  ++count_;
  const double inv = 1.0 / static_cast<double>(count_);
  for (std::size_t i = 0; i < mean_.size(); ++i)
    mean_[i] += (static_cast<double>(f.values[i]) - mean_[i]) * inv;
}

void RunningMean::merge(const RunningMean& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (mean_.size() != other.mean_.size())
    throw std::invalid_argument("running mean merge: dimension mismatch");
  const double total = static_cast<double>(count_ + other.count_);
  const double wa = static_cast<double>(count_) / total;
  const double wb = static_cast<double>(other.count_) / total;
  for (std::size_t i = 0; i < mean_.size(); ++i)
    mean_[i] = wa * mean_[i] + wb * other.mean_[i];
  count_ += other.count_;
}

SpectralFeature RunningMean::snapshot(int n) const {
  if (mean_.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("running mean snapshot: dimension mismatch");
  SpectralFeature f;
  f.n = n;
  f.values.reserve(mean_.size());
  for (double v : mean_) f.values.push_back(static_cast<float>(v));
  return f;
}

PrototypeBank build_prototypes(const std::vector<Image>& dataset, int n,
                               SeverityLevel severity, std::uint64_t seed,
                               const CorruptionTable& table, bool log_scale) {
  if (dataset.empty())
    throw std::invalid_argument("build_prototypes: empty dataset");
  PrototypeBank bank;
  bank.n = n;
  for (CorruptionKind kind : all_corruptions()) {
    const int k = static_cast<int>(kind);
    const std::uint64_t kind_seed =
        Rng::derive(seed, static_cast<std::uint64_t>(k));
    RunningMean mean(n * n);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const Image corrupted = apply_corruption(
          dataset[i], kind, severity,
          kind_seed ^ static_cast<std::uint64_t>(i), table);
      mean.update(extract_feature(corrupted, n, log_scale));
    }
    bank.fine[k] = mean.snapshot(n);
    bank.counts[k] = mean.count();
  }
  macro_group(bank);
  return bank;
}

void macro_group(PrototypeBank& bank) {
  for (int k = 0; k < kCorruptionCount; ++k)
    if (bank.fine[k].n != bank.n || bank.counts[k] == 0)
      throw std::invalid_argument("macro_group: missing fine prototype for " +
                                  std::string(corruption_name(
                                      static_cast<CorruptionKind>(k))));
  for (int m = 0; m < kMacroCount; ++m) {
    const auto members = macro_members(static_cast<MacroCorruption>(m));
    std::vector<double> acc(static_cast<std::size_t>(bank.n) * bank.n, 0.0);
    double total = 0.0;
    for (CorruptionKind kind : members) {
      const int k = static_cast<int>(kind);
      const double w = static_cast<double>(bank.counts[k]);
      total += w;
      for (std::size_t i = 0; i < acc.size(); ++i)
        acc[i] += w * static_cast<double>(bank.fine[k].values[i]);
    }
    SpectralFeature f;
    f.n = bank.n;
    f.values.reserve(acc.size());
    for (double v : acc) f.values.push_back(static_cast<float>(v / total));
    bank.macro[m] = std::move(f);
  }
  bank.has_macro = true;
}

void validate_bank(const PrototypeBank& bank) {
  if (bank.n < 1 || bank.n > 32)
    throw std::runtime_error("prototype bank: bad n");
  for (int k = 0; k < kCorruptionCount; ++k) {
    if (bank.fine[k].n != bank.n ||
        bank.fine[k].values.size() !=
            static_cast<std::size_t>(bank.n) * bank.n)
      throw std::runtime_error("prototype bank: fine prototype shape");
    for (float v : bank.fine[k].values)
      if (!std::isfinite(v) || v < 0.0f)
        throw std::runtime_error("prototype bank: non-finite or negative");
  }
  if (!bank.has_macro) return;
  // Macro prototypes must equal the count-weighted means of their members.
  PrototypeBank check = bank;
  macro_group(check);
  for (int m = 0; m < kMacroCount; ++m) {
    for (std::size_t i = 0; i < bank.macro[m].values.size(); ++i) {
      const double got = bank.macro[m].values[i];
      const double want = check.macro[m].values[i];
      const double tol = 1e-6 * std::max(1.0, std::abs(want));
      if (std::abs(got - want) > tol)
        throw std::runtime_error("prototype bank: macro inconsistency");
    }
  }
}

namespace {

void write_payload_f32(std::ofstream& out, const SpectralFeature& f) {
  out.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(float)));
}

void read_payload_f32(std::ifstream& in, SpectralFeature& f, int n) {
  f.n = n;
  f.values.resize(static_cast<std::size_t>(n) * n);
  in.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(f.values.size() * sizeof(float)));
  if (!in) throw std::runtime_error("prototype bank: truncated payload");
}

}  // namespace

void save_bank(const PrototypeBank& bank, const std::string& path) {
  validate_bank(bank);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "FROSTPROTO 1\n";
  out << "n " << bank.n << "\n";
  out << "fine " << kCorruptionCount << "\n";
  for (int k = 0; k < kCorruptionCount; ++k)
    out << corruption_name(static_cast<CorruptionKind>(k)) << " "
        << bank.counts[k] << "\n";
  out << "macro " << (bank.has_macro ? kMacroCount : 0) << "\n";
  if (bank.has_macro)
    for (int m = 0; m < kMacroCount; ++m)
      out << macro_name(static_cast<MacroCorruption>(m)) << "\n";
  out << "payload\n";
  for (int k = 0; k < kCorruptionCount; ++k) write_payload_f32(out, bank.fine[k]);
  if (bank.has_macro)
    for (int m = 0; m < kMacroCount; ++m) write_payload_f32(out, bank.macro[m]);
  if (!out) throw std::runtime_error("short write: " + path);
}

PrototypeBank load_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  auto expect_line = [&in, &path](const std::string& what) {
    std::string l;
    if (!std::getline(in, l))
      throw std::runtime_error("prototype bank: truncated header in " + path);
    return l;
  };
  if (expect_line("magic") != "FROSTPROTO 1")
    throw std::runtime_error("prototype bank: bad magic in " + path);
  PrototypeBank bank;
  {
    std::istringstream ls(expect_line("n"));
    std::string key;
    ls >> key >> bank.n;
    if (key != "n") throw std::runtime_error("prototype bank: expected n");
  }
  int fine_count = 0;
  {
    std::istringstream ls(expect_line("fine"));
    std::string key;
    ls >> key >> fine_count;
    if (key != "fine" || fine_count != kCorruptionCount)
      throw std::runtime_error("prototype bank: expected 9 fine prototypes");
  }
  for (int k = 0; k < kCorruptionCount; ++k) {
    std::istringstream ls(expect_line("kind"));
    std::string name;
    std::uint64_t count = 0;
    ls >> name >> count;
    if (name != corruption_name(static_cast<CorruptionKind>(k)))
      throw std::runtime_error("prototype bank: kind order mismatch");
    bank.counts[k] = count;
  }
  int macro_count = 0;
  {
    std::istringstream ls(expect_line("macro"));
    std::string key;
    ls >> key >> macro_count;
    if (key != "macro" || (macro_count != 0 && macro_count != kMacroCount))
      throw std::runtime_error("prototype bank: bad macro count");
  }
  for (int m = 0; m < macro_count; ++m) {
    if (expect_line("macro name") !=
        macro_name(static_cast<MacroCorruption>(m)))
      throw std::runtime_error("prototype bank: macro order mismatch");
  }
  if (expect_line("payload") != "payload")
    throw std::runtime_error("prototype bank: missing payload marker");
  for (int k = 0; k < kCorruptionCount; ++k)
    read_payload_f32(in, bank.fine[k], bank.n);
  bank.has_macro = macro_count == kMacroCount;
  if (bank.has_macro)
    for (int m = 0; m < kMacroCount; ++m)
      read_payload_f32(in, bank.macro[m], bank.n);
  validate_bank(bank);
  return bank;
}

namespace {

double sq_dist(const std::vector<double>& a, const float* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

struct SingleRun {
  std::vector<int> labels;
  std::vector<std::vector<double>> centers;
  double inertia = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

SingleRun kmeans_once(const std::vector<SpectralFeature>& features, int k,
                      Rng& rng, int max_iters) {
  const std::size_t count = features.size();
  const std::size_t dim = features.front().values.size();

  // k-means++ seeding.
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  std::vector<double> min_d2(count, std::numeric_limits<double>::infinity());
  std::vector<char> used(count, 0);
  {
    const std::size_t first = rng.index(count);
    used[first] = 1;
    centers.emplace_back(features[first].values.begin(),
                         features[first].values.end());
  }
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double d2 = sq_dist(centers.back(), features[i].values.data());
      if (d2 < min_d2[i]) min_d2[i] = d2;
      total += min_d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        acc += min_d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      // All remaining distances are zero (duplicates, or k == count);
      // take the first point that is not a center yet.
      while (pick + 1 < count && used[pick]) ++pick;
    }
    used[pick] = 1;
    centers.emplace_back(features[pick].values.begin(),
                         features[pick].values.end());
  }

  std::vector<int> labels(count, -1);
  std::vector<double> dist_to_center(count, 0.0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      int best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d2 = sq_dist(centers[c], features[i].values.data());
        if (d2 < best_d2) {
          best_d2 = d2;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
      dist_to_center[i] = best_d2;
      inertia += best_d2;
    }
    // Lloyd's alternation cannot increase the objective.
    if (inertia > prev_inertia + 1e-9 * std::max(1.0, prev_inertia))
      throw std::logic_error("kmeans: inertia increased");
    prev_inertia = inertia;
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(
        k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < count; ++i) {
      const int c = labels[i];
      ++sizes[c];
      for (std::size_t j = 0; j < dim; ++j)
        sums[c][j] += static_cast<double>(features[i].values[j]);
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        // Refill from the farthest member of the largest cluster.
        int largest = 0;
        for (int c2 = 1; c2 < k; ++c2)
          if (sizes[c2] > sizes[largest]) largest = c2;
        std::size_t far_idx = 0;
        double far_d2 = -1.0;
        for (std::size_t i = 0; i < count; ++i)
          if (labels[i] == largest && dist_to_center[i] > far_d2) {
            far_d2 = dist_to_center[i];
            far_idx = i;
          }
        centers[c].assign(features[far_idx].values.begin(),
                          features[far_idx].values.end());
        // Allow the objective to be re-evaluated from scratch next sweep.
        prev_inertia = std::numeric_limits<double>::infinity();
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j)
        centers[c][j] = sums[c][j] / static_cast<double>(sizes[c]);
    }
  }

  SingleRun run;
  run.labels = std::move(labels);
  run.centers = std::move(centers);
  run.inertia = prev_inertia;
  run.iterations = iter;
  return run;
}

}  // namespace

KMeansResult kmeans(const std::vector<SpectralFeature>& features, int k,
                    std::uint64_t seed, int max_iters, int restarts) {
  if (features.empty()) throw std::invalid_argument("kmeans: empty features");
  if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
  if (static_cast<std::size_t>(k) > features.size())
    throw std::invalid_argument("kmeans: k exceeds feature count");
  const std::size_t dim = features.front().values.size();
  for (const auto& f : features)
    if (f.values.size() != dim)
      throw std::invalid_argument("kmeans: inconsistent dimensions");

  SingleRun best;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(r)));
    SingleRun run = kmeans_once(features, k, rng, max_iters);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  KMeansResult result;
  result.assignment.labels = std::move(best.labels);
  result.centers = std::move(best.centers);
  result.inertia = best.inertia;
  result.iterations = best.iterations;
  return result;
}

double adjusted_rand_index(const LabelAssignment& a, const LabelAssignment& b) {
  if (a.labels.size() != b.labels.size())
    throw std::invalid_argument("adjusted_rand_index: length mismatch");
  const std::size_t n = a.labels.size();
  if (n == 0) throw std::invalid_argument("adjusted_rand_index: empty");

  auto relabel = [](const std::vector<int>& raw, std::vector<int>& out) {
    std::vector<int> sorted(raw);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    out.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
      out[i] = static_cast<int>(
          std::lower_bound(sorted.begin(), sorted.end(), raw[i]) -
          sorted.begin());
    return static_cast<int>(sorted.size());
  };
  std::vector<int> la, lb;
  const int ka = relabel(a.labels, la);
  const int kb = relabel(b.labels, lb);

  std::vector<std::uint64_t> table(static_cast<std::size_t>(ka) * kb, 0);
  std::vector<std::uint64_t> row(ka, 0), col(kb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++table[static_cast<std::size_t>(la[i]) * kb + lb[i]];
    ++row[la[i]];
    ++col[lb[i]];
  }
  auto comb2 = [](std::uint64_t m) {
    return 0.5 * static_cast<double>(m) * static_cast<double>(m - 1);
  };
  double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (std::uint64_t v : table) sum_cells += comb2(v);
  for (std::uint64_t v : row) sum_rows += comb2(v);
  for (std::uint64_t v : col) sum_cols += comb2(v);
  const double total = comb2(n);
  const double expected = sum_rows * sum_cols / total;
  const double maximum = 0.5 * (sum_rows + sum_cols);
  if (maximum == expected) return 1.0;  // both partitions trivial
  return (sum_cells - expected) / (maximum - expected);
}

}  // namespace frost
