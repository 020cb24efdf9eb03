#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "reflectrank/agent.hpp"

namespace rr::reward {

struct RewardBand {
  int lo = 1;  // inclusive, 1-based ranks
  int hi = 1;  // inclusive
  double reward = 0.0;
};

// Position-interval reward map for the ranking task. Intervals must be
// disjoint, sorted, and contiguous from rank 1; rewards non-increasing.
struct RewardSchedule {
  std::vector<RewardBand> bands;
  double absent_reward = -1.0;  // positive item missing or beyond the last band

  static RewardSchedule defaults() {
    return {{{1, 1, 1.0}, {2, 5, 0.5}, {6, 10, 0.0}, {11, 20, -0.5}}, -1.0};
  }

  void validate() const;
};

double ranking_reward(std::optional<int> rank, const RewardSchedule& schedule);

using Ranker = std::function<agent::RankingOutput(const agent::RankingTask&)>;

// Scores a memory update indirectly: run the ranker on the follow-up task
// with the updated memory and reward the resulting rank of the positive item
// under the same schedule as the primary ranking task.
double reflection_reward(const agent::AgentMemory& updated_memory, agent::RankingTask followup,
                         const Ranker& ranker, const RewardSchedule& schedule);

}  // namespace rr::reward
