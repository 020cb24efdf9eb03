#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "reflectrank/reward.hpp"

namespace rr::grpo {

// Bilinear Plackett-Luce ranking policy. theta is the row-major flattening
// of a user_dim x item_dim matrix; a candidate's score is
// user_features^T * Theta * candidate_features, and permutations are drawn
// by sequential softmax sampling without replacement, so the per-step
// log-probability factorization holds exactly.
struct PolicyParams {
  std::vector<double> theta;
  int user_dim = 0;
  int item_dim = 0;

  static PolicyParams zeros(int user_dim, int item_dim) {
    return {std::vector<double>(static_cast<std::size_t>(user_dim) * item_dim, 0.0), user_dim,
            item_dim};
  }
  std::size_t dim() const { return theta.size(); }
};

struct ToyQuery {
  std::vector<double> user_features;                  // length user_dim
  std::vector<std::vector<double>> candidate_features;  // each length item_dim
  int positive_index = 0;
};

struct Rollout {
  std::vector<int> order;          // permutation of candidate indices
  std::vector<double> step_logprobs;  // under the generating (old) policy
  double reward = 0.0;
  bool has_reward = false;
};

struct RolloutGroup {
  ToyQuery query;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;  // zero-mean, one per rollout
};

struct GrpoConfig {
  int group_size = 8;
  double clip_epsilon = 0.2;
  double kl_coefficient = 1.0e-3;
  double learning_rate = 0.05;
  int batch_size = 64;
  double std_floor = 1e-8;
};

enum class Execution { serial, openmp };

class GrpoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Candidate scores under theta for one query.
std::vector<double> scores(const PolicyParams& params, const ToyQuery& query);

// (total, per-step) log-probability of generating `order` by sequential
// sampling without replacement.
std::pair<double, std::vector<double>> policy_logprob(const PolicyParams& params,
                                                      const ToyQuery& query,
                                                      const std::vector<int>& order);

// Gradient of the total log-probability with respect to theta.
std::vector<double> policy_logprob_grad(const PolicyParams& params, const ToyQuery& query,
                                        const std::vector<int>& order);

RolloutGroup sample_group(const PolicyParams& theta_old, const ToyQuery& query, int group_size,
                          std::uint64_t seed);

void assign_rewards(RolloutGroup& group, const reward::RewardSchedule& schedule);

// (r_i - mean) / (population_std + std_floor); exactly zero when all rewards
// are equal.
std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor);

void fill_advantages(RolloutGroup& group, double std_floor);

// Clipped-ratio surrogate minus beta * KL to the reference policy, averaged
// over steps, rollouts, and groups. The KL uses the per-step estimator
// exp(d) - d - 1 with d = logpi_ref - logpi_theta.
double grpo_objective(const PolicyParams& theta, const PolicyParams& theta_old,
                      const PolicyParams& theta_ref, std::span<const RolloutGroup> groups,
                      const GrpoConfig& config, Execution exec = Execution::openmp);

std::vector<double> grpo_gradient(const PolicyParams& theta, const PolicyParams& theta_old,
                                  const PolicyParams& theta_ref,
                                  std::span<const RolloutGroup> groups, const GrpoConfig& config,
                                  Execution exec = Execution::openmp);

struct TrainState {
  PolicyParams theta;
  PolicyParams theta_ref;  // the anchored parameters, fixed during training
};

// One outer iteration: sample groups under the current parameters, reward,
// normalize, ascend the analytic gradient.
void grpo_step(TrainState& state, std::span<const ToyQuery> batch, const GrpoConfig& config,
               std::uint64_t seed, const reward::RewardSchedule& schedule,
               Execution exec = Execution::openmp);

// Gradient ascent on demonstration log-likelihood; the result is the RL
// anchor / reference policy. Throws when the epoch loss moves backwards by
// more than a small tolerance.
PolicyParams toy_sft_fit(const std::vector<std::pair<ToyQuery, std::vector<int>>>& demonstrations,
                         PolicyParams init, int epochs, double learning_rate,
                         Execution exec = Execution::openmp);

// Central-difference probe of the analytic gradient. Probes whose step
// crosses a clip kink are reported but excluded from the returned maximum.
struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t probes_checked = 0;
  std::size_t probes_skipped_kink = 0;
};

FiniteDiffReport finite_diff_check(const PolicyParams& theta, const PolicyParams& theta_old,
                                   const PolicyParams& theta_ref,
                                   std::span<const RolloutGroup> groups, const GrpoConfig& config,
                                   std::size_t probe_count, std::uint64_t seed,
                                   double step = 1e-6);

// Monte-Carlo estimate of the expected ranking reward; exact enumeration
// over all permutations for queries with <= 6 candidates when exact=true.
double expected_reward(const PolicyParams& theta, std::span<const ToyQuery> queries,
                       int n_samples, std::uint64_t seed, const reward::RewardSchedule& schedule,
                       bool exact = false, Execution exec = Execution::openmp);

}  // namespace rr::grpo
