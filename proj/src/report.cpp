#include "reflectrank/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace rr::report {
namespace {

using nlohmann::json;

std::string footer(const Provenance& p) {
  std::string s = "# config_digest=" + p.config_digest + " seeds=";
  for (std::size_t i = 0; i < p.seeds.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(p.seeds[i]);
  }
  return s + "\n";
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

}  // namespace

std::string format_pct(double value) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << value * 100.0;
  return ss.str();
}

void save_records(const std::vector<eval::EvalRecord>& records,
                  const std::filesystem::path& path) {
  auto f = open_out(path);
  for (const auto& r : records) {
    json j{{"user_id", r.user_id},
           {"repeat_index", r.repeat_index},
           {"candidate_seed", r.candidate_seed},
           {"candidate_item_ids", r.candidate_item_ids},
           {"failed", r.failed}};
    if (r.rank_of_positive) j["rank_of_positive"] = *r.rank_of_positive;
    if (r.failed) j["fail_reason"] = r.fail_reason;
    json nd = json::object();
    for (const auto& [k, v] : r.ndcg) nd[std::to_string(k)] = v;
    j["ndcg"] = nd;
    f << j.dump() << '\n';
  }
}

std::vector<eval::EvalRecord> load_records(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<eval::EvalRecord> records;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    eval::EvalRecord r;
    r.user_id = j.at("user_id").get<std::string>();
    r.repeat_index = j.at("repeat_index").get<int>();
    r.candidate_seed = j.at("candidate_seed").get<std::uint64_t>();
    r.candidate_item_ids = j.at("candidate_item_ids").get<std::vector<std::string>>();
    r.failed = j.value("failed", false);
    r.fail_reason = j.value("fail_reason", "");
    if (j.contains("rank_of_positive")) r.rank_of_positive = j["rank_of_positive"].get<int>();
    for (const auto& [k, v] : j.at("ndcg").items()) r.ndcg[std::stoi(k)] = v.get<double>();
    records.push_back(std::move(r));
  }
  return records;
}

void emit_metrics_table(const std::vector<MetricsRow>& rows, const std::filesystem::path& stem,
                        const Provenance& provenance) {
  std::vector<int> ks;
  for (const auto& row : rows)
    for (const auto& [k, v] : row.values)
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  std::sort(ks.begin(), ks.end());

  {
    auto f = open_out(stem.string() + ".csv");
    f << "method";
    for (int k : ks) f << ",NDCG@" << k;
    f << ",users,failures\n";
    for (const auto& row : rows) {
      f << row.name;
      for (int k : ks) {
        auto it = row.values.find(k);
        f << "," << (it == row.values.end() ? "" : format_pct(it->second));
      }
      f << "," << row.n_users << "," << row.failures << "\n";
    }
    f << footer(provenance);
  }
  {
    auto f = open_out(stem.string() + ".txt");
    f << std::left << std::setw(24) << "method";
    for (int k : ks) f << std::right << std::setw(10) << ("NDCG@" + std::to_string(k));
    f << std::right << std::setw(8) << "users" << std::setw(10) << "failures" << "\n";
    for (const auto& row : rows) {
      f << std::left << std::setw(24) << row.name;
      for (int k : ks) {
        auto it = row.values.find(k);
        f << std::right << std::setw(10) << (it == row.values.end() ? "-" : format_pct(it->second));
      }
      f << std::right << std::setw(8) << row.n_users << std::setw(10) << row.failures << "\n";
    }
    f << footer(provenance);
  }
  if (rows.empty()) write_incomplete_marker(stem.parent_path(), "empty metrics table " + stem.filename().string());
}

void emit_activity_groups(const std::vector<eval::ActivityGroupRow>& rows,
                          const std::filesystem::path& stem, const Provenance& provenance) {
  auto f = open_out(stem.string() + ".csv");
  std::vector<int> ks;
  for (const auto& row : rows)
    for (const auto& [k, v] : row.mean)
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  std::sort(ks.begin(), ks.end());
  f << "group,users";
  for (int k : ks) f << ",NDCG@" << k;
  f << "\n";
  for (const auto& row : rows) {
    f << row.label << "," << row.n_users;
    for (int k : ks) {
      auto it = row.mean.find(k);
      f << "," << (it != row.mean.end() && it->second ? format_pct(*it->second) : "null");
    }
    f << "\n";
  }
  f << footer(provenance);
}

void emit_best_of_n(const eval::BestOfNCurve& curve, const std::filesystem::path& stem,
                    const Provenance& provenance) {
  auto f = open_out(stem.string() + ".csv");
  f << "n,ndcg10_best_of_n\n";
  for (const auto& [n, v] : curve.points) f << n << "," << format_pct(v) << "\n";
  if (curve.truncated) f << "# truncated: some users had fewer attempts than the largest n\n";
  f << footer(provenance);
}

void write_incomplete_marker(const std::filesystem::path& dir, const std::string& why) {
  auto f = open_out(dir / "INCOMPLETE");
  f << why << "\n";
}

}  // namespace rr::report
