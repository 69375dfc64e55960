#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frost/corruptions.hpp"
#include "frost/prototypes.hpp"

namespace frost {

// Raw evaluation counts for one policy over a (kind x severity) grid plus
// the clean split. Cells that were not evaluated have total == 0. All
// derived numbers are recomputed from the integer counts so that reruns
// serialize byte-identically.
struct MetricsReport {
  std::string policy;
  double threshold = 0.0;
  std::vector<int> severities;
  std::uint64_t eval_seed = 0;

  int cell_total[kCorruptionCount][5] = {};
  int cell_correct[kCorruptionCount][5] = {};
  int cell_cb_correct[kCorruptionCount][5] = {};
  int cell_generic[kCorruptionCount][5] = {};
  int clean_total = 0;
  int clean_correct = 0;
  int clean_generic = 0;

  double cell_error_pct(int kind, int severity) const;
  double cell_accuracy_pct(int kind, int severity) const;
  // Sum of per-severity error percentages over the evaluated set (the CE
  // numerator/denominator unit).
  double kind_error_sum(int kind) const;
  double total_accuracy_pct() const;
  double clean_error_pct() const;
  double clean_accuracy_pct() const;
  double codebook_accuracy_pct() const;
  double codebook_accuracy_kind_pct(int kind) const;
  double codebook_accuracy_macro_pct(MacroCorruption macro) const;
  double generic_fraction_pct() const;
  double clean_generic_fraction_pct() const;
};

// CE = 100 * sum(model errors) / sum(baseline errors) over matching
// severity lists. Throws when the baseline error sum is zero.
double corruption_error(const std::vector<double>& model_errors,
                        const std::vector<double>& baseline_errors);

// Per-kind CE and its mean over the nine kinds, relative to a baseline
// report evaluated on the same severities.
double report_ce(const MetricsReport& model, const MetricsReport& baseline,
                 int kind);
double report_mce(const MetricsReport& model, const MetricsReport& baseline);

void save_report_csv(const MetricsReport& report, const std::string& path);
MetricsReport load_report_csv(const std::string& path);

}  // namespace frost
