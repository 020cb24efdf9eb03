#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reflectrank/common.hpp"
#include "reflectrank/grpo.hpp"
#include "reflectrank/toyenv.hpp"

using namespace rr::grpo;

namespace {

ToyQuery rand_query(rr::Rng& rng, int n_candidates, int du = 2, int dv = 2) {
  ToyQuery q;
  for (int a = 0; a < du; ++a) q.user_features.push_back(rng.uniform() * 2.0 - 1.0);
  for (int c = 0; c < n_candidates; ++c) {
    std::vector<double> v;
    for (int b = 0; b < dv; ++b) v.push_back(rng.uniform() * 2.0 - 1.0);
    q.candidate_features.push_back(std::move(v));
  }
  q.positive_index = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_candidates)));
  return q;
}

PolicyParams rand_params(rr::Rng& rng, int du = 2, int dv = 2, double scale = 0.5) {
  PolicyParams p = PolicyParams::zeros(du, dv);
  for (auto& t : p.theta) t = (rng.uniform() * 2.0 - 1.0) * scale;
  return p;
}

std::vector<RolloutGroup> make_groups(const PolicyParams& theta_old,
                                      const std::vector<ToyQuery>& queries, int group_size,
                                      std::uint64_t seed, const GrpoConfig& config) {
  std::vector<RolloutGroup> groups;
  auto schedule = rr::reward::RewardSchedule::defaults();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    RolloutGroup g = sample_group(theta_old, queries[q], group_size, rr::mix_seed(seed, q));
    assign_rewards(g, schedule);
    fill_advantages(g, config.std_floor);
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace

TEST_CASE("scores are bilinear") {
  PolicyParams p = PolicyParams::zeros(2, 2);
  p.theta = {1.0, 2.0, 3.0, 4.0};  // row-major: Theta = [[1,2],[3,4]]
  ToyQuery q;
  q.user_features = {0.5, -1.0};
  q.candidate_features = {{1.0, 0.0}, {0.0, 1.0}, {2.0, -1.0}};
  auto sc = scores(p, q);
  // u^T Theta = [0.5*1 - 1*3, 0.5*2 - 1*4] = [-2.5, -3]
  CHECK(sc[0] == doctest::Approx(-2.5).epsilon(1e-12));
  CHECK(sc[1] == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(sc[2] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("query validation") {
  PolicyParams p = PolicyParams::zeros(2, 2);
  ToyQuery q;
  q.user_features = {1.0};  // wrong user dim
  q.candidate_features = {{1.0, 0.0}, {0.0, 1.0}};
  CHECK_THROWS_AS(scores(p, q), GrpoError);
  q.user_features = {1.0, 0.0};
  q.candidate_features[1] = {0.0};  // wrong item dim
  CHECK_THROWS_AS(scores(p, q), GrpoError);
  q.candidate_features[1] = {0.0, 1.0};
  q.positive_index = 2;  // out of range
  CHECK_THROWS_AS(scores(p, q), GrpoError);
  q.positive_index = 0;
  CHECK_NOTHROW(scores(p, q));
  q.candidate_features.clear();
  CHECK_THROWS_AS(scores(p, q), GrpoError);
}

TEST_CASE("permutation probabilities sum to one") {
  rr::Rng rng(21);
  for (int n = 2; n <= 5; ++n) {
    ToyQuery q = rand_query(rng, n);
    PolicyParams p = rand_params(rng);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    do {
      auto [lp, steps] = policy_logprob(p, q, order);
      total += std::exp(lp);
      double sum_steps = std::accumulate(steps.begin(), steps.end(), 0.0);
      CHECK(lp == doctest::Approx(sum_steps).epsilon(1e-12));
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("policy_logprob rejects invalid orders") {
  rr::Rng rng(5);
  ToyQuery q = rand_query(rng, 3);
  PolicyParams p = rand_params(rng);
  CHECK_THROWS_AS(policy_logprob(p, q, {0, 1}), GrpoError);        // wrong length
  CHECK_THROWS_AS(policy_logprob(p, q, {0, 1, 1}), GrpoError);     // repeated index
}

TEST_CASE("logprob gradient matches central differences") {
  rr::Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    ToyQuery q = rand_query(rng, 4);
    PolicyParams p = rand_params(rng);
    std::vector<int> order = {2, 0, 3, 1};
    auto grad = policy_logprob_grad(p, q, order);
    const double h = 1e-6;
    for (std::size_t j = 0; j < p.dim(); ++j) {
      PolicyParams probe = p;
      probe.theta[j] += h;
      double up = policy_logprob(probe, q, order).first;
      probe.theta[j] -= 2 * h;
      double dn = policy_logprob(probe, q, order).first;
      double fd = (up - dn) / (2 * h);
      CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("sample_group determinism and consistency") {
  rr::Rng rng(31);
  ToyQuery q = rand_query(rng, 6);
  PolicyParams p = rand_params(rng);
  auto a = sample_group(p, q, 8, 42);
  auto b = sample_group(p, q, 8, 42);
  auto c = sample_group(p, q, 8, 43);
  REQUIRE(a.rollouts.size() == 8);
  bool any_differs = false;
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(a.rollouts[i].order == b.rollouts[i].order);
    if (a.rollouts[i].order != c.rollouts[i].order) any_differs = true;
    // every order is a permutation
    std::vector<int> sorted = a.rollouts[i].order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(6);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);
    // stored step logprobs agree with a fresh evaluation under the sampler's params
    auto [total, steps] = policy_logprob(p, q, a.rollouts[i].order);
    (void)total;
    for (std::size_t t = 0; t < steps.size(); ++t)
      CHECK(a.rollouts[i].step_logprobs[t] == doctest::Approx(steps[t]).epsilon(1e-12));
  }
  CHECK(any_differs);
  CHECK_THROWS_AS(sample_group(p, q, 0, 1), GrpoError);
}

TEST_CASE("rewards follow the rank of the positive item") {
  rr::Rng rng(8);
  ToyQuery q = rand_query(rng, 20);
  q.positive_index = 7;
  PolicyParams p = rand_params(rng);
  auto g = sample_group(p, q, 8, 11);
  assign_rewards(g, rr::reward::RewardSchedule::defaults());
  for (const auto& r : g.rollouts) {
    auto pos = std::find(r.order.begin(), r.order.end(), 7);
    int rank = static_cast<int>(pos - r.order.begin()) + 1;
    double expect = rank == 1 ? 1.0 : rank <= 5 ? 0.5 : rank <= 10 ? 0.0 : -0.5;
    CHECK(r.reward == expect);
    CHECK(r.has_reward);
  }
  CHECK_THROWS_AS(assign_rewards(g, rr::reward::RewardSchedule::defaults()), GrpoError);
}

TEST_CASE("group advantages normalize by population std") {
  auto adv = group_advantages({1.0, 0.0, -1.0}, 0.0);
  CHECK(adv[0] == doctest::Approx(1.224744871391589).epsilon(1e-12));
  CHECK(adv[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(adv[2] == doctest::Approx(-1.224744871391589).epsilon(1e-12));

  auto floored = group_advantages({1.0, 0.0, -1.0}, 1e-8);
  CHECK(floored[0] == doctest::Approx(1.224744871391589).epsilon(1e-6));

  // degenerate group: exactly zero, no floored noise
  auto flat = group_advantages({0.5, 0.5, 0.5, 0.5}, 1e-8);
  for (double a : flat) CHECK(a == 0.0);

  auto mixed = group_advantages({0.3, -0.2, 0.9, 0.0}, 1e-8);
  CHECK(std::accumulate(mixed.begin(), mixed.end(), 0.0) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(group_advantages({}, 1e-8), GrpoError);
}

TEST_CASE("objective is zero at initialization") {
  // theta == theta_old == theta_ref: every ratio is 1 and the KL vanishes,
  // so each rollout contributes its advantage, which is zero-mean per group.
  rr::Rng rng(99);
  GrpoConfig config;
  std::vector<ToyQuery> queries;
  for (int i = 0; i < 4; ++i) queries.push_back(rand_query(rng, 5));
  PolicyParams theta = rand_params(rng);
  auto groups = make_groups(theta, queries, 8, 7, config);
  double j = grpo_objective(theta, theta, theta, groups, config, Execution::serial);
  CHECK(j == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("degenerate groups give exactly zero gradient at the reference") {
  GrpoConfig config;
  rr::Rng rng(12);
  ToyQuery q = rand_query(rng, 4);
  PolicyParams theta = rand_params(rng);
  RolloutGroup g = sample_group(theta, q, 6, 3);
  for (auto& r : g.rollouts) {
    r.reward = 0.5;  // all equal -> degenerate
    r.has_reward = true;
  }
  fill_advantages(g, config.std_floor);
  for (double a : g.advantages) CHECK(a == 0.0);
  std::vector<RolloutGroup> groups = {g};
  auto grad = grpo_gradient(theta, theta, theta, groups, config, Execution::serial);
  for (double v : grad) CHECK(v == 0.0);
  CHECK(grpo_objective(theta, theta, theta, groups, config, Execution::serial) == 0.0);
}

TEST_CASE("clipping freezes the surrogate gradient far from theta_old") {
  // scalar policy, 2 candidates: score0 = theta, score1 = 0
  PolicyParams theta_old = PolicyParams::zeros(1, 1);
  ToyQuery q;
  q.user_features = {1.0};
  q.candidate_features = {{1.0}, {0.0}};
  q.positive_index = 0;

  RolloutGroup g;
  g.query = q;
  Rollout a;
  a.order = {0, 1};
  a.step_logprobs = policy_logprob(theta_old, q, a.order).second;
  Rollout b;
  b.order = {1, 0};
  b.step_logprobs = policy_logprob(theta_old, q, b.order).second;
  g.rollouts = {a, b};
  g.advantages = {1.0, -1.0};

  GrpoConfig config;
  config.kl_coefficient = 0.0;
  PolicyParams theta = theta_old;
  theta.theta[0] = 2.0;  // ratio for rollout a step 1: 2*sigmoid(2) = 1.76 > 1.2
  std::vector<RolloutGroup> groups = {g};
  auto grad = grpo_gradient(theta, theta_old, theta_old, groups, config, Execution::serial);
  CHECK(grad[0] == 0.0);  // both rollouts clipped out, no KL term

  // inside the trust region the gradient is live
  theta.theta[0] = 0.05;
  auto live = grpo_gradient(theta, theta_old, theta_old, groups, config, Execution::serial);
  CHECK(live[0] != 0.0);
}

TEST_CASE("analytic gradient matches finite differences") {
  rr::Rng rng(2024);
  GrpoConfig config;
  std::vector<ToyQuery> queries;
  for (int i = 0; i < 6; ++i) queries.push_back(rand_query(rng, 5));
  PolicyParams theta_old = rand_params(rng);
  auto groups = make_groups(theta_old, queries, 8, 17, config);

  // evaluate slightly away from theta_old so ratios and the KL are nontrivial
  PolicyParams theta = theta_old;
  rr::Rng jitter(5);
  for (auto& t : theta.theta) t += (jitter.uniform() * 2.0 - 1.0) * 0.02;
  PolicyParams theta_ref = rand_params(jitter);

  auto report = finite_diff_check(theta, theta_old, theta_ref, groups, config,
                                  theta.dim() * 30, 9, 1e-6);
  CHECK(report.probes_checked >= 100);
  CHECK(report.max_relative_error <= 1e-5);
}

TEST_CASE("finite_diff_check validates probe count") {
  GrpoConfig config;
  PolicyParams p = PolicyParams::zeros(2, 2);
  std::vector<RolloutGroup> none;
  CHECK_THROWS_AS(finite_diff_check(p, p, p, none, config, 0, 1), GrpoError);
}

TEST_CASE("toy sft fit raises demonstration likelihood") {
  rr::toyenv::EnvConfig env_config;
  env_config.n_queries = 16;
  env_config.n_candidates = 6;
  auto env = rr::toyenv::make_env(env_config);
  auto demos = rr::toyenv::make_demonstrations(env);

  auto ll_of = [&](const PolicyParams& p) {
    double ll = 0.0;
    for (const auto& [q, order] : demos) ll += policy_logprob(p, q, order).first;
    return ll;
  };
  PolicyParams init = PolicyParams::zeros(env_config.user_dim, env_config.item_dim);
  double before = ll_of(init);
  PolicyParams fit = toy_sft_fit(demos, init, 50, 0.1, Execution::serial);
  CHECK(ll_of(fit) > before);

  CHECK_THROWS_AS(toy_sft_fit(demos, init, 200, 50.0, Execution::serial), GrpoError);
  CHECK_THROWS_AS(toy_sft_fit({}, init, 10, 0.1, Execution::serial), GrpoError);
}

TEST_CASE("expected_reward: monte carlo agrees with exact enumeration") {
  rr::toyenv::EnvConfig env_config;
  env_config.n_queries = 8;
  env_config.n_candidates = 5;
  auto env = rr::toyenv::make_env(env_config);
  auto schedule = rr::reward::RewardSchedule::defaults();
  PolicyParams theta = env.hidden;

  double exact = expected_reward(theta, env.queries, 0, 0, schedule, true, Execution::serial);
  double mc = expected_reward(theta, env.queries, 4000, 3, schedule, false, Execution::serial);
  CHECK(mc == doctest::Approx(exact).epsilon(0.08));

  // uniform policy over 20 candidates: banded reward averages to -0.1
  rr::toyenv::EnvConfig big = rr::toyenv::EnvConfig{};
  big.n_queries = 32;
  auto benv = rr::toyenv::make_env(big);
  PolicyParams uniform = PolicyParams::zeros(big.user_dim, big.item_dim);
  double u = expected_reward(uniform, benv.queries, 2000, 5, schedule, false, Execution::serial);
  CHECK(u == doctest::Approx(-0.1).epsilon(0.15));

  rr::Rng rng(4);
  std::vector<ToyQuery> wide = {rand_query(rng, 7)};
  CHECK_THROWS_AS(expected_reward(theta, wide, 0, 0, schedule, true, Execution::serial), GrpoError);
}

TEST_CASE("grpo_step is deterministic and improves the toy environment") {
  rr::toyenv::EnvConfig env_config;
  env_config.n_queries = 24;
  env_config.n_candidates = 8;
  auto env = rr::toyenv::make_env(env_config);
  auto schedule = rr::reward::RewardSchedule::defaults();
  GrpoConfig config;
  config.learning_rate = 0.2;

  TrainState s1{PolicyParams::zeros(3, 3), PolicyParams::zeros(3, 3)};
  TrainState s2 = s1;
  double before = expected_reward(s1.theta, env.queries, 400, 1, schedule, false, Execution::serial);
  for (int step = 0; step < 30; ++step) {
    grpo_step(s1, env.queries, config, 1000 + static_cast<std::uint64_t>(step), schedule,
              Execution::serial);
    grpo_step(s2, env.queries, config, 1000 + static_cast<std::uint64_t>(step), schedule,
              Execution::serial);
  }
  CHECK(s1.theta.theta == s2.theta.theta);
  double after = expected_reward(s1.theta, env.queries, 400, 1, schedule, false, Execution::serial);
  CHECK(after > before + 0.1);
}

TEST_CASE("single-candidate queries are a no-op") {
  ToyQuery q;
  q.user_features = {1.0, 0.0};
  q.candidate_features = {{1.0, 1.0}};
  q.positive_index = 0;
  rr::Rng rng(3);
  PolicyParams p = rand_params(rng);
  auto [lp, steps] = policy_logprob(p, q, {0});
  CHECK(lp == 0.0);
  auto grad = policy_logprob_grad(p, q, {0});
  for (double v : grad) CHECK(v == 0.0);

  GrpoConfig config;
  TrainState state{p, p};
  std::vector<ToyQuery> batch = {q};
  grpo_step(state, batch, config, 1, rr::reward::RewardSchedule::defaults(), Execution::serial);
  CHECK(state.theta.theta == p.theta);
}

TEST_CASE("toy environment is deterministic with argmax positives") {
  rr::toyenv::EnvConfig config;
  config.n_queries = 10;
  auto a = rr::toyenv::make_env(config);
  auto b = rr::toyenv::make_env(config);
  REQUIRE(a.queries.size() == 10);
  CHECK(a.hidden.theta == b.hidden.theta);
  for (std::size_t i = 0; i < a.queries.size(); ++i) {
    CHECK(a.queries[i].user_features == b.queries[i].user_features);
    auto sc = scores(a.hidden, a.queries[i]);
    auto best = std::max_element(sc.begin(), sc.end()) - sc.begin();
    CHECK(a.queries[i].positive_index == static_cast<int>(best));
  }
  auto demos = rr::toyenv::make_demonstrations(a);
  for (std::size_t d = 0; d < demos.size(); ++d) {
    auto sc = scores(a.hidden, demos[d].first);
    const auto& order = demos[d].second;
    CHECK(order.front() == demos[d].first.positive_index);
    for (std::size_t t = 1; t < order.size(); ++t)
      CHECK(sc[static_cast<std::size_t>(order[t - 1])] >=
            sc[static_cast<std::size_t>(order[t])]);
  }
}
