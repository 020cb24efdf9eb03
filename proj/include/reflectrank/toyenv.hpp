#pragma once

#include <cstdint>
#include <vector>

#include "reflectrank/grpo.hpp"

namespace rr::toyenv {

// Synthetic preference environment: standard-normal user/item features from
// a fixed seed, positive = argmax of a hidden utility u^T Theta* v among the
// candidates.
struct Env {
  grpo::PolicyParams hidden;  // Theta*
  std::vector<grpo::ToyQuery> queries;
};

struct EnvConfig {
  int n_queries = 64;
  int n_candidates = 20;
  int user_dim = 3;
  int item_dim = 3;
  std::uint64_t seed = 12345;
};

Env make_env(const EnvConfig& config);

// Teacher-style demonstrations: candidates sorted by descending hidden
// utility.
std::vector<std::pair<grpo::ToyQuery, std::vector<int>>> make_demonstrations(const Env& env);

}  // namespace rr::toyenv
