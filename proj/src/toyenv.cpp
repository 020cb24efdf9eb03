#include "reflectrank/toyenv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reflectrank/common.hpp"

namespace rr::toyenv {
namespace {

// Box-Muller on the counter-based stream.
double normal(Rng& rng) {
  double u1 = rng.uniform();
  double u2 = rng.uniform();
  if (u1 <= 0.0) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace

Env make_env(const EnvConfig& config) {
  Rng rng(config.seed);
  Env env;
  env.hidden = grpo::PolicyParams::zeros(config.user_dim, config.item_dim);
  for (auto& v : env.hidden.theta) v = normal(rng);

  env.queries.reserve(static_cast<std::size_t>(config.n_queries));
  for (int q = 0; q < config.n_queries; ++q) {
    grpo::ToyQuery query;
    query.user_features.resize(static_cast<std::size_t>(config.user_dim));
    for (auto& v : query.user_features) v = normal(rng);
    query.candidate_features.resize(static_cast<std::size_t>(config.n_candidates));
    for (auto& cand : query.candidate_features) {
      cand.resize(static_cast<std::size_t>(config.item_dim));
      for (auto& v : cand) v = normal(rng);
    }
    std::vector<double> util = grpo::scores(env.hidden, query);
    query.positive_index = static_cast<int>(
        std::max_element(util.begin(), util.end()) - util.begin());
    env.queries.push_back(std::move(query));
  }
  return env;
}

std::vector<std::pair<grpo::ToyQuery, std::vector<int>>> make_demonstrations(const Env& env) {
  std::vector<std::pair<grpo::ToyQuery, std::vector<int>>> demos;
  demos.reserve(env.queries.size());
  for (const auto& query : env.queries) {
    std::vector<double> util = grpo::scores(env.hidden, query);
    std::vector<int> order(util.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return util[static_cast<std::size_t>(a)] > util[static_cast<std::size_t>(b)];
    });
    demos.emplace_back(query, std::move(order));
  }
  return demos;
}

}  // namespace rr::toyenv
