#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "reflectrank/agent.hpp"
#include "reflectrank/eval.hpp"

namespace rr::sim {

// Deterministic backend for closed-loop simulation without a live model.
// Ranking prompts are answered with a digest-seeded permutation of the
// current task's candidates, reflection prompts with a digest-tagged
// description, so a run is a pure function of corpus and seeds.
class ScriptedBackend : public llm::Backend {
 public:
  void set_task(const agent::RankingTask* task) { task_ = task; }
  std::string complete_once(const llm::CompletionRequest& request) override;

 private:
  const agent::RankingTask* task_ = nullptr;
};

struct SimConfig {
  eval::EvalProtocol protocol;
  agent::CycleConfig cycle;
  int cycles_per_user = 3;  // agent cycles over the last interactions
};

struct SimResult {
  std::vector<agent::AgentMemory> memories;  // final memory per user, user_id order
  std::vector<eval::EvalRecord> records;     // one per cycle
};

// Runs the prediction -> comparison -> reflection -> update loop for each
// user over their most recent interactions. Deterministic given the inputs;
// a ScriptedBackend is fed the current task automatically.
SimResult run_simulation(llm::Backend& backend,
                         const std::vector<corpus::InteractionSequence>& users,
                         const std::vector<corpus::Item>& catalog,
                         const std::unordered_map<std::string, corpus::UserRecord>& user_records,
                         const SimConfig& config);

}  // namespace rr::sim
