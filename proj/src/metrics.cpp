#include "frost/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace frost {

namespace {

double pct(long long num, long long den) {
  if (den == 0) return 0.0;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double MetricsReport::cell_error_pct(int kind, int severity) const {
  const int t = cell_total[kind][severity - 1];
  if (t == 0) return 0.0;
  return pct(t - cell_correct[kind][severity - 1], t);
}

double MetricsReport::cell_accuracy_pct(int kind, int severity) const {
  const int t = cell_total[kind][severity - 1];
  if (t == 0) return 0.0;
  return pct(cell_correct[kind][severity - 1], t);
}

double MetricsReport::kind_error_sum(int kind) const {
  double sum = 0.0;
  for (int sev : severities) sum += cell_error_pct(kind, sev);
  return sum;
}

double MetricsReport::total_accuracy_pct() const {
  long long total = 0, correct = 0;
  for (int k = 0; k < kCorruptionCount; ++k)
    for (int s = 0; s < 5; ++s) {
      total += cell_total[k][s];
      correct += cell_correct[k][s];
    }
  return pct(correct, total);
}

double MetricsReport::clean_error_pct() const {
  return pct(clean_total - clean_correct, clean_total);
}

double MetricsReport::clean_accuracy_pct() const {
  return pct(clean_correct, clean_total);
}

double MetricsReport::codebook_accuracy_pct() const {
  long long total = 0, correct = 0;
  for (int k = 0; k < kCorruptionCount; ++k)
    for (int s = 0; s < 5; ++s) {
      total += cell_total[k][s];
      correct += cell_cb_correct[k][s];
    }
  return pct(correct, total);
}

double MetricsReport::codebook_accuracy_kind_pct(int kind) const {
  long long total = 0, correct = 0;
  for (int s = 0; s < 5; ++s) {
    total += cell_total[kind][s];
    correct += cell_cb_correct[kind][s];
  }
  return pct(correct, total);
}

double MetricsReport::codebook_accuracy_macro_pct(MacroCorruption macro) const {
  long long total = 0, correct = 0;
  for (CorruptionKind kind : macro_members(macro)) {
    const int k = static_cast<int>(kind);
    for (int s = 0; s < 5; ++s) {
      total += cell_total[k][s];
      correct += cell_cb_correct[k][s];
    }
  }
  return pct(correct, total);
}

double MetricsReport::generic_fraction_pct() const {
  long long total = 0, generic = 0;
  for (int k = 0; k < kCorruptionCount; ++k)
    for (int s = 0; s < 5; ++s) {
      total += cell_total[k][s];
      generic += cell_generic[k][s];
    }
  return pct(generic, total);
}

double MetricsReport::clean_generic_fraction_pct() const {
  return pct(clean_generic, clean_total);
}

double corruption_error(const std::vector<double>& model_errors,
                        const std::vector<double>& baseline_errors) {
  if (model_errors.size() != baseline_errors.size() || model_errors.empty())
    throw std::invalid_argument("corruption_error: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < model_errors.size(); ++i) {
    num += model_errors[i];
    den += baseline_errors[i];
  }
  if (den <= 0.0)
    throw std::invalid_argument("corruption_error: zero baseline error sum");
  return 100.0 * num / den;
}

double report_ce(const MetricsReport& model, const MetricsReport& baseline,
                 int kind) {
  if (model.severities != baseline.severities)
    throw std::invalid_argument("report_ce: severity sets differ");
  std::vector<double> me, be;
  for (int sev : model.severities) {
    me.push_back(model.cell_error_pct(kind, sev));
    be.push_back(baseline.cell_error_pct(kind, sev));
  }
  return corruption_error(me, be);
}

double report_mce(const MetricsReport& model, const MetricsReport& baseline) {
  double sum = 0.0;
  for (int k = 0; k < kCorruptionCount; ++k)
    sum += report_ce(model, baseline, k);
  return sum / kCorruptionCount;
}

void save_report_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[64];
  out << "# frost metrics v1\n";
  out << "policy," << report.policy << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", report.threshold);
  out << "threshold," << buf << "\n";
  out << "severities,";
  for (std::size_t i = 0; i < report.severities.size(); ++i)
    out << (i ? ";" : "") << report.severities[i];
  out << "\n";
  out << "eval_seed," << report.eval_seed << "\n";
  out << "kind,severity,total,correct,cb_correct,generic\n";
  for (int k = 0; k < kCorruptionCount; ++k)
    for (int sev : report.severities)
      out << corruption_name(static_cast<CorruptionKind>(k)) << "," << sev
          << "," << report.cell_total[k][sev - 1] << ","
          << report.cell_correct[k][sev - 1] << ","
          << report.cell_cb_correct[k][sev - 1] << ","
          << report.cell_generic[k][sev - 1] << "\n";
  out << "clean,0," << report.clean_total << "," << report.clean_correct
      << ",0," << report.clean_generic << "\n";
  if (!out) throw std::runtime_error("short write: " + path);
}

MetricsReport load_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  MetricsReport r;
  std::string line;
  if (!std::getline(in, line) || line != "# frost metrics v1")
    throw std::runtime_error("metrics csv: bad header in " + path);
  auto kv = [&line](const std::string& key) {
    if (line.rfind(key + ",", 0) != 0)
      throw std::runtime_error("metrics csv: expected " + key);
    return line.substr(key.size() + 1);
  };
  std::getline(in, line);
  r.policy = kv("policy");
  std::getline(in, line);
  r.threshold = std::stod(kv("threshold"));
  std::getline(in, line);
  {
    std::istringstream ss(kv("severities"));
    std::string tok;
    while (std::getline(ss, tok, ';'))
      if (!tok.empty()) r.severities.push_back(std::stoi(tok));
  }
  std::getline(in, line);
  r.eval_seed = std::stoull(kv("eval_seed"));
  std::getline(in, line);  // column header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string kind_name, tok;
    std::getline(ss, kind_name, ',');
    int fields[5] = {};
    for (int i = 0; i < 5; ++i) {
      if (!std::getline(ss, tok, ','))
        throw std::runtime_error("metrics csv: short row in " + path);
      fields[i] = std::stoi(tok);
    }
    if (kind_name == "clean") {
      r.clean_total = fields[1];
      r.clean_correct = fields[2];
      r.clean_generic = fields[4];
    } else {
      const int k = static_cast<int>(corruption_from_name(kind_name));
      const int sev = fields[0];
      if (sev < 1 || sev > 5)
        throw std::runtime_error("metrics csv: bad severity in " + path);
      r.cell_total[k][sev - 1] = fields[1];
      r.cell_correct[k][sev - 1] = fields[2];
      r.cell_cb_correct[k][sev - 1] = fields[3];
      r.cell_generic[k][sev - 1] = fields[4];
    }
  }
  return r;
}

}  // namespace frost
