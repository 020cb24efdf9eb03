#include "reflectrank/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "reflectrank/common.hpp"

namespace rr::grpo {
namespace {

void check_query(const PolicyParams& params, const ToyQuery& query) {
  if (static_cast<int>(query.user_features.size()) != params.user_dim)
    throw GrpoError("user feature dim mismatch");
  if (query.candidate_features.empty()) throw GrpoError("query needs >= 1 candidate");
  for (const auto& v : query.candidate_features)
    if (static_cast<int>(v.size()) != params.item_dim)
      throw GrpoError("candidate feature dim mismatch");
  if (query.positive_index < 0 ||
      query.positive_index >= static_cast<int>(query.candidate_features.size()))
    throw GrpoError("positive_index out of range");
}

double logsumexp(const std::vector<double>& xs, const std::vector<int>& active) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i : active) m = std::max(m, xs[static_cast<std::size_t>(i)]);
  double s = 0.0;
  for (int i : active) s += std::exp(xs[static_cast<std::size_t>(i)] - m);
  return m + std::log(s);
}

// Per-step softmax state over the remaining candidates, walked along `order`.
// Calls visit(step, chosen, remaining, probs) where probs are softmax weights
// over `remaining` under `sc`.
template <typename Visit>
void walk_order(const std::vector<double>& sc, const std::vector<int>& order, Visit&& visit) {
  std::vector<int> remaining(sc.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<double> probs;
  for (std::size_t t = 0; t < order.size(); ++t) {
    int chosen = order[t];
    double lse = logsumexp(sc, remaining);
    probs.resize(remaining.size());
    for (std::size_t j = 0; j < remaining.size(); ++j)
      probs[j] = std::exp(sc[static_cast<std::size_t>(remaining[j])] - lse);
    visit(t, chosen, remaining, probs, sc[static_cast<std::size_t>(chosen)] - lse);
    auto it = std::find(remaining.begin(), remaining.end(), chosen);
    if (it == remaining.end()) throw GrpoError("order is not a valid permutation");
    remaining.erase(it);
  }
}

double rank_reward(const std::vector<int>& order, int positive_index,
                   const reward::RewardSchedule& schedule) {
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == positive_index)
      return reward::ranking_reward(static_cast<int>(i) + 1, schedule);
  return reward::ranking_reward(std::nullopt, schedule);
}

struct StepTerms {
  double lp_theta, lp_old, lp_ref;
};

// Per-step contribution coefficient on grad(logpi_theta): the surrogate part
// when the unclipped branch is the active min, plus the KL part.
double step_grad_coeff(const StepTerms& s, double advantage, const GrpoConfig& config) {
  double ratio = std::exp(s.lp_theta - s.lp_old);
  bool active = advantage >= 0.0 ? ratio <= 1.0 + config.clip_epsilon
                                 : ratio >= 1.0 - config.clip_epsilon;
  double coeff = active ? ratio * advantage : 0.0;
  double delta = s.lp_ref - s.lp_theta;
  coeff += config.kl_coefficient * (std::exp(delta) - 1.0);
  return coeff;
}

double step_objective(const StepTerms& s, double advantage, const GrpoConfig& config) {
  double ratio = std::exp(s.lp_theta - s.lp_old);
  double clipped = std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
  double surrogate = std::min(ratio * advantage, clipped * advantage);
  double delta = s.lp_ref - s.lp_theta;
  double kl = std::exp(delta) - delta - 1.0;
  return surrogate - config.kl_coefficient * kl;
}

double group_objective(const PolicyParams& theta, const PolicyParams& theta_ref,
                       const RolloutGroup& group, const GrpoConfig& config) {
  double acc = 0.0;
  std::vector<double> sc_theta = scores(theta, group.query);
  std::vector<double> sc_ref = scores(theta_ref, group.query);
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const Rollout& r = group.rollouts[i];
    double advantage = group.advantages[i];
    double roll = 0.0;
    // ref logprobs along the same order
    std::vector<double> lp_ref(r.order.size());
    walk_order(sc_ref, r.order,
               [&](std::size_t t, int, const std::vector<int>&, const std::vector<double>&,
                   double lp) { lp_ref[t] = lp; });
    walk_order(sc_theta, r.order,
               [&](std::size_t t, int, const std::vector<int>&, const std::vector<double>&,
                   double lp) {
                 roll += step_objective({lp, r.step_logprobs[t], lp_ref[t]}, advantage, config);
               });
    acc += roll / static_cast<double>(r.order.size());
  }
  return acc / static_cast<double>(group.rollouts.size());
}

void group_gradient(const PolicyParams& theta, const PolicyParams& theta_ref,
                    const RolloutGroup& group, const GrpoConfig& config,
                    std::vector<double>& grad_out) {
  const int du = theta.user_dim;
  const int dv = theta.item_dim;
  grad_out.assign(theta.dim(), 0.0);
  std::vector<double> sc_theta = scores(theta, group.query);
  std::vector<double> sc_ref = scores(theta_ref, group.query);
  const auto& u = group.query.user_features;
  std::vector<double> vbar(static_cast<std::size_t>(dv));

  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const Rollout& r = group.rollouts[i];
    double advantage = group.advantages[i];
    double norm = 1.0 / (static_cast<double>(r.order.size()) *
                         static_cast<double>(group.rollouts.size()));
    std::vector<double> lp_ref(r.order.size());
    walk_order(sc_ref, r.order,
               [&](std::size_t t, int, const std::vector<int>&, const std::vector<double>&,
                   double lp) { lp_ref[t] = lp; });
    walk_order(sc_theta, r.order,
               [&](std::size_t t, int chosen, const std::vector<int>& remaining,
                   const std::vector<double>& probs, double lp) {
                 double coeff =
                     step_grad_coeff({lp, r.step_logprobs[t], lp_ref[t]}, advantage, config) * norm;
                 if (coeff == 0.0) return;
                 // grad lp = u outer (v_chosen - sum_c p_c v_c)
                 const auto& vc = group.query.candidate_features[static_cast<std::size_t>(chosen)];
                 for (int b = 0; b < dv; ++b) vbar[static_cast<std::size_t>(b)] = vc[static_cast<std::size_t>(b)];
                 for (std::size_t j = 0; j < remaining.size(); ++j) {
                   const auto& vr =
                       group.query.candidate_features[static_cast<std::size_t>(remaining[j])];
                   for (int b = 0; b < dv; ++b)
                     vbar[static_cast<std::size_t>(b)] -= probs[j] * vr[static_cast<std::size_t>(b)];
                 }
                 for (int a = 0; a < du; ++a) {
                   double ua = u[static_cast<std::size_t>(a)] * coeff;
                   double* row = grad_out.data() + static_cast<std::size_t>(a) * dv;
                   for (int b = 0; b < dv; ++b) row[b] += ua * vbar[static_cast<std::size_t>(b)];
                 }
               });
  }
}

}  // namespace

std::vector<double> scores(const PolicyParams& params, const ToyQuery& query) {
  check_query(params, query);
  const int du = params.user_dim;
  const int dv = params.item_dim;
  // w = u^T Theta, then score(c) = w . v_c
  std::vector<double> w(static_cast<std::size_t>(dv), 0.0);
  for (int a = 0; a < du; ++a) {
    double ua = query.user_features[static_cast<std::size_t>(a)];
    const double* row = params.theta.data() + static_cast<std::size_t>(a) * dv;
    for (int b = 0; b < dv; ++b) w[static_cast<std::size_t>(b)] += ua * row[b];
  }
  std::vector<double> sc(query.candidate_features.size());
  for (std::size_t c = 0; c < sc.size(); ++c) {
    double s = 0.0;
    for (int b = 0; b < dv; ++b)
      s += w[static_cast<std::size_t>(b)] * query.candidate_features[c][static_cast<std::size_t>(b)];
    if (!std::isfinite(s)) throw GrpoError("non-finite candidate score");
    sc[c] = s;
  }
  return sc;
}

std::pair<double, std::vector<double>> policy_logprob(const PolicyParams& params,
                                                      const ToyQuery& query,
                                                      const std::vector<int>& order) {
  if (order.size() != query.candidate_features.size())
    throw GrpoError("order length != candidate count");
  std::vector<double> sc = scores(params, query);
  std::vector<double> steps(order.size());
  double total = 0.0;
  walk_order(sc, order,
             [&](std::size_t t, int, const std::vector<int>&, const std::vector<double>&,
                 double lp) {
               steps[t] = lp;
               total += lp;
             });
  return {total, std::move(steps)};
}

std::vector<double> policy_logprob_grad(const PolicyParams& params, const ToyQuery& query,
                                        const std::vector<int>& order) {
  std::vector<double> sc = scores(params, query);
  const int du = params.user_dim;
  const int dv = params.item_dim;
  std::vector<double> grad(params.dim(), 0.0);
  std::vector<double> vbar(static_cast<std::size_t>(dv));
  walk_order(sc, order,
             [&](std::size_t, int chosen, const std::vector<int>& remaining,
                 const std::vector<double>& probs, double) {
               const auto& vc = query.candidate_features[static_cast<std::size_t>(chosen)];
               for (int b = 0; b < dv; ++b) vbar[static_cast<std::size_t>(b)] = vc[static_cast<std::size_t>(b)];
               for (std::size_t j = 0; j < remaining.size(); ++j) {
                 const auto& vr = query.candidate_features[static_cast<std::size_t>(remaining[j])];
                 for (int b = 0; b < dv; ++b)
                   vbar[static_cast<std::size_t>(b)] -= probs[j] * vr[static_cast<std::size_t>(b)];
               }
               for (int a = 0; a < du; ++a) {
                 double ua = query.user_features[static_cast<std::size_t>(a)];
                 double* row = grad.data() + static_cast<std::size_t>(a) * dv;
                 for (int b = 0; b < dv; ++b) row[b] += ua * vbar[static_cast<std::size_t>(b)];
               }
             });
  return grad;
}

RolloutGroup sample_group(const PolicyParams& theta_old, const ToyQuery& query, int group_size,
                          std::uint64_t seed) {
  if (group_size < 1) throw GrpoError("group_size must be >= 1");
  std::vector<double> sc = scores(theta_old, query);
  const std::size_t n = sc.size();

  RolloutGroup group;
  group.query = query;
  group.rollouts.reserve(static_cast<std::size_t>(group_size));
  Rng rng(seed);

  for (int i = 0; i < group_size; ++i) {
    Rollout r;
    std::vector<int> remaining(n);
    std::iota(remaining.begin(), remaining.end(), 0);
    while (!remaining.empty()) {
      double lse = logsumexp(sc, remaining);
      double draw = rng.uniform();
      double cum = 0.0;
      std::size_t pick = remaining.size() - 1;
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        cum += std::exp(sc[static_cast<std::size_t>(remaining[j])] - lse);
        if (draw < cum) {
          pick = j;
          break;
        }
      }
      int chosen = remaining[pick];
      r.order.push_back(chosen);
      r.step_logprobs.push_back(sc[static_cast<std::size_t>(chosen)] - lse);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    group.rollouts.push_back(std::move(r));
  }
  return group;
}

void assign_rewards(RolloutGroup& group, const reward::RewardSchedule& schedule) {
  for (auto& r : group.rollouts) {
    if (r.has_reward) throw GrpoError("rewards already assigned");
    r.reward = rank_reward(r.order, group.query.positive_index, schedule);
    r.has_reward = true;
  }
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor) {
  const std::size_t g = rewards.size();
  if (g == 0) throw GrpoError("empty reward group");
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  std::vector<double> adv(g, 0.0);
  if (var == 0.0) return adv;  // degenerate group: exactly zero, not floored noise
  double denom = std::sqrt(var) + std_floor;
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

void fill_advantages(RolloutGroup& group, double std_floor) {
  std::vector<double> rewards;
  rewards.reserve(group.rollouts.size());
  for (const auto& r : group.rollouts) {
    if (!r.has_reward) throw GrpoError("fill_advantages: rewards not assigned");
    rewards.push_back(r.reward);
  }
  group.advantages = group_advantages(rewards, std_floor);
}

double grpo_objective(const PolicyParams& theta, const PolicyParams& theta_old,
                      const PolicyParams& theta_ref, std::span<const RolloutGroup> groups,
                      const GrpoConfig& config, Execution exec) {
  (void)theta_old;  // the stored step_logprobs carry the old policy
  if (groups.empty()) return 0.0;
  for (const auto& g : groups)
    if (g.advantages.size() != g.rollouts.size())
      throw GrpoError("grpo_objective: advantages not filled");

  std::vector<double> per_group(groups.size(), 0.0);
  if (exec == Execution::openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(groups.size()); ++g)
      per_group[static_cast<std::size_t>(g)] =
          group_objective(theta, theta_ref, groups[static_cast<std::size_t>(g)], config);
  } else {
    for (std::size_t g = 0; g < groups.size(); ++g)
      per_group[g] = group_objective(theta, theta_ref, groups[g], config);
  }
  // ordered reduce: identical result for any thread count
  double acc = 0.0;
  for (double v : per_group) acc += v;
  return acc / static_cast<double>(groups.size());
}

std::vector<double> grpo_gradient(const PolicyParams& theta, const PolicyParams& theta_old,
                                  const PolicyParams& theta_ref,
                                  std::span<const RolloutGroup> groups, const GrpoConfig& config,
                                  Execution exec) {
  (void)theta_old;
  std::vector<double> grad(theta.dim(), 0.0);
  if (groups.empty()) return grad;
  for (const auto& g : groups)
    if (g.advantages.size() != g.rollouts.size())
      throw GrpoError("grpo_gradient: advantages not filled");

  std::vector<std::vector<double>> per_group(groups.size());
  if (exec == Execution::openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(groups.size()); ++g)
      group_gradient(theta, theta_ref, groups[static_cast<std::size_t>(g)], config,
                     per_group[static_cast<std::size_t>(g)]);
  } else {
    for (std::size_t g = 0; g < groups.size(); ++g)
      group_gradient(theta, theta_ref, groups[g], config, per_group[g]);
  }
  for (const auto& pg : per_group)
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += pg[j];
  for (auto& v : grad) v /= static_cast<double>(groups.size());
  return grad;
}

void grpo_step(TrainState& state, std::span<const ToyQuery> batch, const GrpoConfig& config,
               std::uint64_t seed, const reward::RewardSchedule& schedule, Execution exec) {
  if (batch.empty()) return;
  PolicyParams theta_old = state.theta;

  std::vector<RolloutGroup> groups(batch.size());
  auto build = [&](std::size_t q) {
    groups[q] = sample_group(theta_old, batch[q], config.group_size,
                             mix_seed(seed, static_cast<std::uint64_t>(q)));
    assign_rewards(groups[q], schedule);
    fill_advantages(groups[q], config.std_floor);
  };
  if (exec == Execution::openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(batch.size()); ++q)
      build(static_cast<std::size_t>(q));
  } else {
    for (std::size_t q = 0; q < batch.size(); ++q) build(q);
  }

  std::vector<double> grad =
      grpo_gradient(state.theta, theta_old, state.theta_ref, groups, config, exec);
  for (std::size_t j = 0; j < grad.size(); ++j) {
    if (!std::isfinite(grad[j]))
      throw GrpoError("non-finite gradient at coordinate " + std::to_string(j));
    state.theta.theta[j] += config.learning_rate * grad[j];
  }
}

PolicyParams toy_sft_fit(const std::vector<std::pair<ToyQuery, std::vector<int>>>& demonstrations,
                         PolicyParams init, int epochs, double learning_rate, Execution exec) {
  if (demonstrations.empty()) throw GrpoError("toy_sft_fit: no demonstrations");
  PolicyParams theta = std::move(init);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::vector<double>> per_demo(demonstrations.size());
    std::vector<double> per_demo_ll(demonstrations.size(), 0.0);
    auto one = [&](std::size_t d) {
      per_demo[d] = policy_logprob_grad(theta, demonstrations[d].first, demonstrations[d].second);
      per_demo_ll[d] =
          policy_logprob(theta, demonstrations[d].first, demonstrations[d].second).first;
    };
    if (exec == Execution::openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
      for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(demonstrations.size()); ++d)
        one(static_cast<std::size_t>(d));
    } else {
      for (std::size_t d = 0; d < demonstrations.size(); ++d) one(d);
    }

    double ll = 0.0;
    for (double v : per_demo_ll) ll += v;
    if (ll < prev_ll - 1e-6 * (1.0 + std::abs(prev_ll)))
      throw GrpoError("toy_sft_fit diverged at epoch " + std::to_string(epoch) +
                      " (log-likelihood fell from " + std::to_string(prev_ll) + " to " +
                      std::to_string(ll) + "); try a smaller learning rate");
    prev_ll = ll;

    std::vector<double> grad(theta.dim(), 0.0);
    for (const auto& pd : per_demo)
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += pd[j];
    double scale = learning_rate / static_cast<double>(demonstrations.size());
    for (std::size_t j = 0; j < grad.size(); ++j) theta.theta[j] += scale * grad[j];
  }
  return theta;
}

FiniteDiffReport finite_diff_check(const PolicyParams& theta, const PolicyParams& theta_old,
                                   const PolicyParams& theta_ref,
                                   std::span<const RolloutGroup> groups, const GrpoConfig& config,
                                   std::size_t probe_count, std::uint64_t seed, double step) {
  if (probe_count < 1) throw GrpoError("finite_diff_check: probe_count must be >= 1");
  std::vector<double> analytic =
      grpo_gradient(theta, theta_old, theta_ref, groups, config, Execution::serial);

  // kink proximity per coordinate: a probe is skipped when perturbing that
  // coordinate by `step` could move some step ratio across a clip boundary
  std::vector<double> kink_margin(theta.dim(), std::numeric_limits<double>::infinity());
  for (const auto& group : groups) {
    std::vector<double> sc = scores(theta, group.query);
    for (const auto& r : group.rollouts) {
      walk_order(sc, r.order,
                 [&](std::size_t t, int chosen, const std::vector<int>& remaining,
                     const std::vector<double>& probs, double lp) {
                   double ratio = std::exp(lp - r.step_logprobs[t]);
                   double dist = std::min(std::abs(ratio - (1.0 - config.clip_epsilon)),
                                          std::abs(ratio - (1.0 + config.clip_epsilon)));
                   // |d ratio / d theta_j| = ratio * |d lp / d theta_j|;
                   // bound the logprob sensitivity per coordinate
                   const auto& u = group.query.user_features;
                   const auto& vc = group.query.candidate_features[static_cast<std::size_t>(chosen)];
                   for (int a = 0; a < theta.user_dim; ++a) {
                     for (int b = 0; b < theta.item_dim; ++b) {
                       double dlp = u[static_cast<std::size_t>(a)] * vc[static_cast<std::size_t>(b)];
                       double vbar = 0.0;
                       for (std::size_t j = 0; j < remaining.size(); ++j)
                         vbar += probs[j] *
                                 group.query
                                     .candidate_features[static_cast<std::size_t>(remaining[j])]
                                                        [static_cast<std::size_t>(b)];
                       dlp -= u[static_cast<std::size_t>(a)] * vbar;
                       double slope = ratio * std::abs(dlp);
                       std::size_t idx = static_cast<std::size_t>(a) * theta.item_dim +
                                         static_cast<std::size_t>(b);
                       if (slope > 0.0)
                         kink_margin[idx] = std::min(kink_margin[idx], dist / slope);
                     }
                   }
                 });
    }
  }

  Rng rng(seed);
  FiniteDiffReport report;
  PolicyParams probe = theta;
  for (std::size_t p = 0; p < probe_count; ++p) {
    std::size_t j = probe_count >= theta.dim() ? p % theta.dim()
                                               : static_cast<std::size_t>(rng.uniform_int(theta.dim()));
    if (kink_margin[j] < 100.0 * step) {
      ++report.probes_skipped_kink;
      continue;
    }
    double saved = probe.theta[j];
    probe.theta[j] = saved + step;
    double jp = grpo_objective(probe, theta_old, theta_ref, groups, config, Execution::serial);
    probe.theta[j] = saved - step;
    double jm = grpo_objective(probe, theta_old, theta_ref, groups, config, Execution::serial);
    probe.theta[j] = saved;
    double fd = (jp - jm) / (2.0 * step);
    double denom = std::max({std::abs(fd), std::abs(analytic[j]), 1e-10});
    double rel = std::abs(fd - analytic[j]) / denom;
    report.max_relative_error = std::max(report.max_relative_error, rel);
    ++report.probes_checked;
  }
  return report;
}

double expected_reward(const PolicyParams& theta, std::span<const ToyQuery> queries,
                       int n_samples, std::uint64_t seed, const reward::RewardSchedule& schedule,
                       bool exact, Execution exec) {
  if (queries.empty()) return 0.0;
  if (n_samples < 1 && !exact) throw GrpoError("expected_reward: n_samples must be >= 1");

  std::vector<double> per_query(queries.size(), 0.0);
  auto one = [&](std::size_t q) {
    const ToyQuery& query = queries[q];
    if (exact) {
      if (query.candidate_features.size() > 6)
        throw GrpoError("exact expected_reward limited to <= 6 candidates");
      std::vector<double> sc = scores(theta, query);
      std::vector<int> order(sc.size());
      std::iota(order.begin(), order.end(), 0);
      double acc = 0.0;
      do {
        double lp = 0.0;
        std::vector<int> remaining(order.size());
        std::iota(remaining.begin(), remaining.end(), 0);
        for (int chosen : order) {
          double lse = logsumexp(sc, remaining);
          lp += sc[static_cast<std::size_t>(chosen)] - lse;
          remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
        }
        acc += std::exp(lp) * rank_reward(order, query.positive_index, schedule);
      } while (std::next_permutation(order.begin(), order.end()));
      per_query[q] = acc;
    } else {
      RolloutGroup g = sample_group(theta, query, n_samples,
                                    mix_seed(seed, static_cast<std::uint64_t>(q)));
      double acc = 0.0;
      for (const auto& r : g.rollouts) acc += rank_reward(r.order, query.positive_index, schedule);
      per_query[q] = acc / static_cast<double>(n_samples);
    }
  };
  if (exec == Execution::openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(queries.size()); ++q)
      one(static_cast<std::size_t>(q));
  } else {
    for (std::size_t q = 0; q < queries.size(); ++q) one(q);
  }
  double acc = 0.0;
  for (double v : per_query) acc += v;
  return acc / static_cast<double>(queries.size());
}

}  // namespace rr::grpo
