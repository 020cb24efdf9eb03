#include "reflectrank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "reflectrank/common.hpp"

namespace rr::eval {

double ndcg_at_k(std::optional<int> rank, int k) {
  if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  if (!rank || *rank > k) return 0.0;
  if (*rank < 1) throw std::invalid_argument("ndcg_at_k: rank must be >= 1");
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

std::uint64_t candidate_seed(const EvalProtocol& protocol, const std::string& user_id,
                             int repeat_index) {
  int rep = protocol.rerandomize_per_repeat ? repeat_index : 0;
  return mix_seed(protocol.negative_sampling_seed,
                  fnv1a64(user_id) ^ (static_cast<std::uint64_t>(rep) << 32));
}

agent::RankingTask make_candidates(const corpus::InteractionSequence& sequence,
                                   const std::vector<corpus::Item>& catalog,
                                   const EvalProtocol& protocol, int repeat_index,
                                   const corpus::UserRecord& user) {
  if (sequence.interactions.size() < 2)
    throw std::invalid_argument("make_candidates: sequence must have >= 2 interactions");

  std::unordered_set<std::string> seen;
  for (const auto& in : sequence.interactions) seen.insert(in.item_id);

  const std::string& positive_id = sequence.interactions.back().item_id;
  std::vector<std::size_t> pool;
  pool.reserve(catalog.size());
  std::size_t positive_idx = catalog.size();
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i].item_id == positive_id) {
      positive_idx = i;
      continue;
    }
    if (protocol.exclude_seen && seen.count(catalog[i].item_id)) continue;
    pool.push_back(i);
  }
  if (positive_idx == catalog.size())
    throw std::invalid_argument("make_candidates: positive item " + positive_id +
                                " not in catalog");
  if (pool.size() < static_cast<std::size_t>(protocol.n_negatives))
    throw std::invalid_argument("make_candidates: catalog too small, need " +
                                std::to_string(protocol.n_negatives) + " negatives, have " +
                                std::to_string(pool.size()));

  Rng rng(candidate_seed(protocol, sequence.user_id, repeat_index));
  // partial Fisher-Yates: first n_negatives entries are the sample
  for (int i = 0; i < protocol.n_negatives; ++i) {
    std::size_t j = i + rng.uniform_int(pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }

  std::vector<corpus::Item> candidates;
  candidates.reserve(static_cast<std::size_t>(protocol.n_negatives) + 1);
  candidates.push_back(catalog[positive_idx]);
  for (int i = 0; i < protocol.n_negatives; ++i)
    candidates.push_back(catalog[pool[static_cast<std::size_t>(i)]]);
  for (std::size_t i = candidates.size(); i > 1; --i)
    std::swap(candidates[i - 1], candidates[rng.uniform_int(i)]);

  agent::RankingTask task;
  task.candidates = std::move(candidates);
  task.positive_item_id = positive_id;
  task.memory.user = user;
  task.memory.user.user_id = sequence.user_id;
  // history = everything before the held-out item; catalog lookup for titles
  std::unordered_map<std::string, const corpus::Item*> by_id;
  for (const auto& it : catalog) by_id[it.item_id] = &it;
  for (std::size_t i = 0; i + 1 < sequence.interactions.size(); ++i) {
    const auto& in = sequence.interactions[i];
    auto it = by_id.find(in.item_id);
    if (it == by_id.end()) continue;
    task.memory.history.emplace_back(
        *it->second, in.positive ? agent::Feedback::positive : agent::Feedback::negative);
  }
  return task;
}

EvalTable leave_one_out_eval(const reward::Ranker& ranker,
                             const std::vector<corpus::InteractionSequence>& users,
                             const std::vector<corpus::Item>& catalog,
                             const EvalProtocol& protocol,
                             const std::unordered_map<std::string, corpus::UserRecord>* user_records,
                             bool parallel) {
  std::vector<corpus::InteractionSequence> ordered = users;
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.user_id < b.user_id; });

  const std::size_t n = ordered.size();
  const int repeats = protocol.repeats;
  std::vector<EvalRecord> records(n * static_cast<std::size_t>(repeats));

  auto eval_user = [&](std::size_t u) {
    corpus::UserRecord user;
    if (user_records) {
      auto it = user_records->find(ordered[u].user_id);
      if (it != user_records->end()) user = it->second;
    }
    for (int rep = 0; rep < repeats; ++rep) {
      EvalRecord& rec = records[u * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(rep)];
      rec.user_id = ordered[u].user_id;
      rec.repeat_index = rep;
      rec.candidate_seed = candidate_seed(protocol, ordered[u].user_id, rep);
      try {
        agent::RankingTask task = make_candidates(ordered[u], catalog, protocol, rep, user);
        for (const auto& c : task.candidates) rec.candidate_item_ids.push_back(c.item_id);
        agent::RankingOutput out = ranker(task);
        rec.rank_of_positive = agent::rank_of(out, task.positive_item_id);
        for (int k : protocol.k_values) rec.ndcg[k] = ndcg_at_k(rec.rank_of_positive, k);
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.fail_reason = e.what();
      }
    }
  };

  if (parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(n); ++u)
      eval_user(static_cast<std::size_t>(u));
  } else {
    for (std::size_t u = 0; u < n; ++u) eval_user(u);
  }

  EvalTable table;
  table.records = std::move(records);
  for (std::size_t u = 0; u < n; ++u) {
    std::map<int, double> acc;
    bool failed = false;
    int ok = 0;
    for (int rep = 0; rep < repeats; ++rep) {
      const EvalRecord& rec = table.records[u * static_cast<std::size_t>(repeats) +
                                            static_cast<std::size_t>(rep)];
      if (rec.failed) {
        failed = true;
        continue;
      }
      ++ok;
      for (const auto& [k, v] : rec.ndcg) acc[k] += v;
    }
    if (failed || ok == 0) {
      ++table.failures;  // excluded, never silently dropped
      continue;
    }
    ++table.n_users;
    for (auto& [k, v] : acc) table.mean[k] += v / ok;
  }
  for (auto& [k, v] : table.mean)
    if (table.n_users > 0) v /= static_cast<double>(table.n_users);
  return table;
}

reward::Ranker oracle_ranker() {
  return [](const agent::RankingTask& task) {
    agent::RankingOutput out;
    out.ranked.emplace_back(task.positive_item_id, "");
    for (const auto& c : task.candidates)
      if (c.item_id != task.positive_item_id) out.ranked.emplace_back(c.item_id, "");
    return out;
  };
}

reward::Ranker random_ranker(std::uint64_t seed) {
  return [seed](const agent::RankingTask& task) {
    // independent permutation per task, stable across runs
    std::uint64_t task_key = fnv1a64(task.positive_item_id);
    for (const auto& c : task.candidates) task_key = fnv1a64(c.item_id, task_key);
    task_key = fnv1a64(task.memory.user.user_id, task_key);
    Rng rng(mix_seed(seed, task_key));
    std::vector<std::size_t> idx(task.candidates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    agent::RankingOutput out;
    for (std::size_t i : idx) out.ranked.emplace_back(task.candidates[i].item_id, "");
    return out;
  };
}

reward::Ranker popularity_ranker(const std::vector<corpus::Interaction>& train_interactions) {
  auto counts = std::make_shared<std::unordered_map<std::string, std::size_t>>();
  for (const auto& in : train_interactions) ++(*counts)[in.item_id];
  return [counts](const agent::RankingTask& task) {
    std::vector<std::size_t> idx(task.candidates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      std::size_t ca = 0, cb = 0;
      if (auto it = counts->find(task.candidates[a].item_id); it != counts->end()) ca = it->second;
      if (auto it = counts->find(task.candidates[b].item_id); it != counts->end()) cb = it->second;
      if (ca != cb) return ca > cb;
      return task.candidates[a].item_id < task.candidates[b].item_id;  // ties by id
    });
    agent::RankingOutput out;
    for (std::size_t i : idx) out.ranked.emplace_back(task.candidates[i].item_id, "");
    return out;
  };
}

std::vector<ActivityGroupRow> activity_group_report(
    const std::vector<EvalRecord>& records,
    const std::unordered_map<std::string, std::size_t>& interaction_counts, DatasetKind dataset) {
  struct Group {
    std::string label;
    std::size_t lo, hi;
  };
  std::vector<Group> groups =
      dataset == DatasetKind::ml1m
          ? std::vector<Group>{{"Low Activity (10-24)", 10, 24},
                               {"Medium Activity (25-39)", 25, 39},
                               {"High Activity (>=40)", 40, SIZE_MAX}}
          : std::vector<Group>{{"Low Activity (10-19)", 10, 19},
                               {"Medium Activity (20-39)", 20, 39},
                               {"High Activity (>=40)", 40, SIZE_MAX}};

  // per-user mean over repeats first
  std::map<std::string, std::pair<std::map<int, double>, int>> per_user;
  for (const auto& rec : records) {
    if (rec.failed) continue;
    auto& [acc, cnt] = per_user[rec.user_id];
    for (const auto& [k, v] : rec.ndcg) acc[k] += v;
    ++cnt;
  }

  std::vector<ActivityGroupRow> rows;
  for (const auto& g : groups) {
    ActivityGroupRow row;
    row.label = g.label;
    std::map<int, double> acc;
    for (const auto& [uid, data] : per_user) {
      auto it = interaction_counts.find(uid);
      if (it == interaction_counts.end()) continue;
      if (it->second < g.lo || it->second > g.hi) continue;
      ++row.n_users;
      for (const auto& [k, v] : data.first) acc[k] += v / data.second;
    }
    if (row.n_users == 0) {
      if (!per_user.empty())
        for (const auto& [k, v] : per_user.begin()->second.first) row.mean[k] = std::nullopt;
    } else {
      for (const auto& [k, v] : acc) row.mean[k] = v / static_cast<double>(row.n_users);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

BestOfNCurve best_of_n(const std::vector<std::vector<double>>& per_attempt,
                       const std::vector<int>& n_values) {
  BestOfNCurve curve;
  for (int n : n_values) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& attempts : per_attempt) {
      if (attempts.empty()) continue;
      std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), attempts.size());
      if (take < static_cast<std::size_t>(n)) curve.truncated = true;
      sum += *std::max_element(attempts.begin(), attempts.begin() + static_cast<std::ptrdiff_t>(take));
      ++counted;
    }
    if (counted > 0) curve.points.emplace_back(n, sum / static_cast<double>(counted));
  }
  return curve;
}

}  // namespace rr::eval
