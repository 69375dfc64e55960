#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <vector>

#include "frost/metrics.hpp"

using namespace frost;

namespace {

MetricsReport sample_report(const char* policy, int correct_per_cell) {
  MetricsReport r;
  r.policy = policy;
  r.threshold = 0.1;
  r.severities = {4, 5};
  r.eval_seed = 42;
  for (int k = 0; k < kCorruptionCount; ++k)
    for (int sev : r.severities) {
      r.cell_total[k][sev - 1] = 100;
      r.cell_correct[k][sev - 1] = correct_per_cell;
      r.cell_cb_correct[k][sev - 1] = 90;
      r.cell_generic[k][sev - 1] = 25;
    }
  r.clean_total = 100;
  r.clean_correct = 95;
  r.clean_generic = 60;
  return r;
}

}  // namespace

TEST_CASE("corruption_error ratio semantics") {
  CHECK(corruption_error({10, 20}, {10, 20}) == doctest::Approx(100.0));
  CHECK(corruption_error({5, 10}, {10, 20}) == doctest::Approx(50.0));
  CHECK(corruption_error({30}, {20}) == doctest::Approx(150.0));
  CHECK_THROWS_AS(corruption_error({10}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(corruption_error({10}, {10, 20}), std::invalid_argument);
  CHECK_THROWS_AS(corruption_error({}, {}), std::invalid_argument);
}

TEST_CASE("report-level CE and mCE agree with the definition") {
  const MetricsReport base = sample_report("b", 40);    // 60% error per cell
  const MetricsReport model = sample_report("frost", 70);  // 30% error
  for (int k = 0; k < kCorruptionCount; ++k)
    CHECK(report_ce(model, base, k) == doctest::Approx(50.0));
  CHECK(report_mce(model, base) == doctest::Approx(50.0));
  // mCE equals the mean of the per-kind CE column.
  double mean = 0.0;
  for (int k = 0; k < kCorruptionCount; ++k) mean += report_ce(model, base, k);
  CHECK(report_mce(model, base) == doctest::Approx(mean / kCorruptionCount));
}

TEST_CASE("derived percentages stay in range and combine correctly") {
  const MetricsReport r = sample_report("frost", 70);
  CHECK(r.total_accuracy_pct() == doctest::Approx(70.0));
  CHECK(r.clean_error_pct() == doctest::Approx(5.0));
  CHECK(r.codebook_accuracy_pct() == doctest::Approx(90.0));
  CHECK(r.generic_fraction_pct() == doctest::Approx(25.0));
  CHECK(r.clean_generic_fraction_pct() == doctest::Approx(60.0));
  for (int k = 0; k < kCorruptionCount; ++k) {
    CHECK(r.cell_error_pct(k, 4) == doctest::Approx(30.0));
    CHECK(r.codebook_accuracy_kind_pct(k) == doctest::Approx(90.0));
  }
  // Overall codebook accuracy equals the count-weighted mean of per-kind
  // accuracies (all counts equal here).
  double weighted = 0.0;
  for (int k = 0; k < kCorruptionCount; ++k)
    weighted += r.codebook_accuracy_kind_pct(k);
  CHECK(r.codebook_accuracy_pct() == doctest::Approx(weighted / kCorruptionCount));
}

TEST_CASE("csv round-trip preserves every count") {
  const MetricsReport r = sample_report("frost", 63);
  const std::string path = "test_report.csv";
  save_report_csv(r, path);
  const MetricsReport loaded = load_report_csv(path);
  CHECK(loaded.policy == r.policy);
  CHECK(loaded.threshold == doctest::Approx(r.threshold));
  CHECK(loaded.severities == r.severities);
  CHECK(loaded.eval_seed == r.eval_seed);
  for (int k = 0; k < kCorruptionCount; ++k)
    for (int sev : r.severities) {
      CHECK(loaded.cell_total[k][sev - 1] == r.cell_total[k][sev - 1]);
      CHECK(loaded.cell_correct[k][sev - 1] == r.cell_correct[k][sev - 1]);
      CHECK(loaded.cell_cb_correct[k][sev - 1] == r.cell_cb_correct[k][sev - 1]);
      CHECK(loaded.cell_generic[k][sev - 1] == r.cell_generic[k][sev - 1]);
    }
  CHECK(loaded.clean_total == r.clean_total);
  CHECK(loaded.clean_correct == r.clean_correct);
  CHECK(loaded.clean_generic == r.clean_generic);

  // Serialization is byte-stable.
  save_report_csv(loaded, "test_report2.csv");
  std::ifstream a(path, std::ios::binary), b("test_report2.csv", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  std::remove(path.c_str());
  std::remove("test_report2.csv");
}
