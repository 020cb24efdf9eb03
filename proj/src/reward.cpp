#include "reflectrank/reward.hpp"

namespace rr::reward {

void RewardSchedule::validate() const {
  if (bands.empty()) throw std::invalid_argument("reward schedule has no bands");
  int expect_lo = 1;
  double prev = bands.front().reward;
  for (const auto& b : bands) {
    if (b.lo != expect_lo || b.hi < b.lo)
      throw std::invalid_argument("reward bands must be sorted, disjoint, and contiguous from 1");
    if (b.reward > prev) throw std::invalid_argument("rewards must be non-increasing with rank");
    prev = b.reward;
    expect_lo = b.hi + 1;
  }
  if (absent_reward > prev)
    throw std::invalid_argument("absent reward must not exceed the last band");
}

double ranking_reward(std::optional<int> rank, const RewardSchedule& schedule) {
  if (!rank) return schedule.absent_reward;
  if (*rank < 1) throw std::invalid_argument("rank must be >= 1");
  for (const auto& b : schedule.bands)
    if (*rank >= b.lo && *rank <= b.hi) return b.reward;
  return schedule.absent_reward;  // beyond the last band
}

double reflection_reward(const agent::AgentMemory& updated_memory, agent::RankingTask followup,
                         const Ranker& ranker, const RewardSchedule& schedule) {
  followup.memory = updated_memory;
  agent::RankingOutput output = ranker(followup);
  return ranking_reward(agent::rank_of(output, followup.positive_item_id), schedule);
}

}  // namespace rr::reward
