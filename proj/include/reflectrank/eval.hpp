#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "reflectrank/agent.hpp"
#include "reflectrank/corpus.hpp"
#include "reflectrank/reward.hpp"

namespace rr::eval {

struct EvalProtocol {
  std::vector<int> k_values{1, 5, 10, 20};
  int n_negatives = 19;
  int repeats = 3;
  std::uint64_t negative_sampling_seed = 0;
  bool exclude_seen = true;            // negatives never overlap the user's history
  bool rerandomize_per_repeat = true;  // fresh negatives per repeat_index
};

struct EvalRecord {
  std::string user_id;
  int repeat_index = 0;
  std::uint64_t candidate_seed = 0;  // replaying it regenerates the candidate set
  std::vector<std::string> candidate_item_ids;
  std::optional<int> rank_of_positive;
  std::map<int, double> ndcg;  // k -> value in [0,1]
  bool failed = false;
  std::string fail_reason;
};

struct EvalTable {
  std::map<int, double> mean;  // k -> mean over users of mean over repeats, in [0,1]
  std::size_t n_users = 0;
  std::size_t failures = 0;  // users excluded because the ranker failed
  std::vector<EvalRecord> records;
};

// Single relevant item: 1/log2(rank+1) inside the cutoff, else 0.
double ndcg_at_k(std::optional<int> rank, int k);

// Leave-one-out task for one user: positive = last item of the sequence,
// n_negatives drawn seeded by (protocol seed, user_id, repeat) from catalog
// items outside the user's history, candidate order shuffled with the same
// stream.
agent::RankingTask make_candidates(const corpus::InteractionSequence& sequence,
                                   const std::vector<corpus::Item>& catalog,
                                   const EvalProtocol& protocol, int repeat_index,
                                   const corpus::UserRecord& user = {});

// The deterministic seed make_candidates uses for a given (user, repeat).
std::uint64_t candidate_seed(const EvalProtocol& protocol, const std::string& user_id,
                             int repeat_index);

// Per-user per-repeat records plus the aggregate table. Users evaluate
// independently; with parallel=true the ranker must be safe to call from
// multiple threads. Aggregation is ordered by user_id either way, so the
// result does not depend on the thread count.
EvalTable leave_one_out_eval(const reward::Ranker& ranker,
                             const std::vector<corpus::InteractionSequence>& users,
                             const std::vector<corpus::Item>& catalog,
                             const EvalProtocol& protocol,
                             const std::unordered_map<std::string, corpus::UserRecord>* user_records = nullptr,
                             bool parallel = true);

reward::Ranker oracle_ranker();
reward::Ranker random_ranker(std::uint64_t seed);
reward::Ranker popularity_ranker(const std::vector<corpus::Interaction>& train_interactions);

enum class DatasetKind { ml1m, cds };

struct ActivityGroupRow {
  std::string label;
  std::size_t n_users = 0;
  std::map<int, std::optional<double>> mean;  // null when the group is empty
};

// Groups users by raw interaction count: ML-1M 10-24 / 25-39 / >=40,
// CDs 10-19 / 20-39 / >=40.
std::vector<ActivityGroupRow> activity_group_report(
    const std::vector<EvalRecord>& records,
    const std::unordered_map<std::string, std::size_t>& interaction_counts, DatasetKind dataset);

struct BestOfNCurve {
  std::vector<std::pair<int, double>> points;  // (n, mean over users of max of first n)
  bool truncated = false;                      // some user had fewer attempts than max n
};

// per_attempt[u] = that user's attempt scores in order.
BestOfNCurve best_of_n(const std::vector<std::vector<double>>& per_attempt,
                       const std::vector<int>& n_values = {1, 5, 10, 20, 50});

}  // namespace rr::eval
