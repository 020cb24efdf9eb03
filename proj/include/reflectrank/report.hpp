#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reflectrank/eval.hpp"

namespace rr::report {

// Footer stamped into every emitted artifact so a run can be regenerated
// from its digest and seeds.
struct Provenance {
  std::string config_digest;
  std::vector<std::uint64_t> seeds;
};

void save_records(const std::vector<eval::EvalRecord>& records,
                  const std::filesystem::path& path);
std::vector<eval::EvalRecord> load_records(const std::filesystem::path& path);

// "name" column + per-K metrics, percent with 2 decimals. Emits <stem>.csv
// and <stem>.txt; empty rows produce a header-only file plus an INCOMPLETE
// marker next to it.
struct MetricsRow {
  std::string name;
  std::map<int, double> values;  // k -> value in [0,1]
  std::size_t n_users = 0;
  std::size_t failures = 0;
};

void emit_metrics_table(const std::vector<MetricsRow>& rows, const std::filesystem::path& stem,
                        const Provenance& provenance);

void emit_activity_groups(const std::vector<eval::ActivityGroupRow>& rows,
                          const std::filesystem::path& stem, const Provenance& provenance);

void emit_best_of_n(const eval::BestOfNCurve& curve, const std::filesystem::path& stem,
                    const Provenance& provenance);

void write_incomplete_marker(const std::filesystem::path& dir, const std::string& why);

std::string format_pct(double value);  // 2 decimals, value in [0,1] -> percent

}  // namespace rr::report
