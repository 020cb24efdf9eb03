#include "reflectrank/sim.hpp"

#include <algorithm>

#include "reflectrank/common.hpp"

namespace rr::sim {

std::string ScriptedBackend::complete_once(const llm::CompletionRequest& request) {
  std::string digest = llm::prompt_digest(request.messages);
  bool reflection = !request.messages.empty() &&
                    request.messages.front().content.find("preference analyst") != std::string::npos;
  if (reflection) {
    return "<think>\nThe user's feedback suggests their stated preferences need a revision; "
           "adjusting what they appear to enjoy.\n</think>\n"
           "Updated User description: refined preference profile (trace " + digest + ")";
  }
  if (!task_)
    throw llm::LlmError(llm::ErrorKind::MalformedResponse, "scripted backend has no current task");
  agent::RankingOutput out;
  out.think = "Weighing the user's stated preferences and viewing history against each candidate.";
  std::vector<std::size_t> idx(task_->candidates.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(fnv1a64(digest));
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  for (std::size_t i : idx) out.ranked.emplace_back(task_->candidates[i].item_id, "fits the profile");
  return agent::render_ranking_output(out, task_->candidates);
}

SimResult run_simulation(llm::Backend& backend,
                         const std::vector<corpus::InteractionSequence>& users,
                         const std::vector<corpus::Item>& catalog,
                         const std::unordered_map<std::string, corpus::UserRecord>& user_records,
                         const SimConfig& config) {
  auto* scripted = dynamic_cast<ScriptedBackend*>(&backend);

  std::vector<corpus::InteractionSequence> ordered = users;
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.user_id < b.user_id; });

  SimResult result;
  for (const auto& seq : ordered) {
    corpus::UserRecord user;
    if (auto it = user_records.find(seq.user_id); it != user_records.end()) user = it->second;
    user.user_id = seq.user_id;

    agent::AgentMemory memory;
    memory.user = user;

    std::size_t len = seq.interactions.size();
    std::size_t cycles = std::min<std::size_t>(static_cast<std::size_t>(config.cycles_per_user),
                                               len >= 2 ? len - 1 : 0);
    for (std::size_t c = 0; c < cycles; ++c) {
      // prefix sequence ending at the c-th of the last `cycles` interactions
      std::size_t end = len - cycles + c + 1;
      corpus::InteractionSequence prefix{seq.user_id,
                                         {seq.interactions.begin(),
                                          seq.interactions.begin() + static_cast<std::ptrdiff_t>(end)}};
      agent::RankingTask task =
          eval::make_candidates(prefix, catalog, config.protocol, static_cast<int>(c), user);
      // the agent's own evolving memory replaces the freshly derived one,
      // keeping the reflection-updated description
      task.memory = memory;
      if (scripted) scripted->set_task(&task);

      const corpus::Interaction& held_out = prefix.interactions.back();
      agent::Feedback actual =
          held_out.positive ? agent::Feedback::positive : agent::Feedback::negative;
      agent::CycleResult cycle = agent::run_agent_cycle(
          backend, memory, task.candidates, task.positive_item_id, actual, config.cycle);
      memory = cycle.memory;

      eval::EvalRecord rec;
      rec.user_id = seq.user_id;
      rec.repeat_index = static_cast<int>(c);
      rec.candidate_seed = eval::candidate_seed(config.protocol, seq.user_id, static_cast<int>(c));
      for (const auto& cand : task.candidates) rec.candidate_item_ids.push_back(cand.item_id);
      rec.rank_of_positive = agent::rank_of(cycle.output, task.positive_item_id);
      for (int k : config.protocol.k_values)
        rec.ndcg[k] = eval::ndcg_at_k(rec.rank_of_positive, k);
      result.records.push_back(std::move(rec));
    }
    if (scripted) scripted->set_task(nullptr);
    result.memories.push_back(std::move(memory));
  }
  return result;
}

}  // namespace rr::sim
