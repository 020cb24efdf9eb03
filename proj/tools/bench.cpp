// Benchmark: OpenMP kernels against their serial reference implementations.
// Each kernel pair must produce identical results; timings show the speedup.

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>

#include "reflectrank/common.hpp"
#include "reflectrank/eval.hpp"
#include "reflectrank/grpo.hpp"
#include "reflectrank/toyenv.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double time_ms(int iters, F&& f) {
  auto t0 = Clock::now();
  for (int i = 0; i < iters; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / iters;
}

void report(const std::string& name, double serial_ms, double openmp_ms, bool identical) {
  std::cout << std::left << std::setw(22) << name << std::right << std::fixed
            << std::setprecision(2) << std::setw(12) << serial_ms << " ms" << std::setw(12)
            << openmp_ms << " ms" << std::setw(9) << std::setprecision(2)
            << (openmp_ms > 0 ? serial_ms / openmp_ms : 0.0) << "x   "
            << (identical ? "identical" : "MISMATCH") << "\n";
  if (!identical) std::exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  int iters = argc > 1 ? std::atoi(argv[1]) : 5;
  if (iters < 1) iters = 1;

  rr::toyenv::EnvConfig env_config;
  env_config.n_queries = 256;
  env_config.n_candidates = 20;
  auto env = rr::toyenv::make_env(env_config);
  auto schedule = rr::reward::RewardSchedule::defaults();
  rr::grpo::GrpoConfig config;

  rr::grpo::PolicyParams theta_old = rr::grpo::PolicyParams::zeros(3, 3);
  std::vector<rr::grpo::RolloutGroup> groups;
  for (std::size_t q = 0; q < env.queries.size(); ++q) {
    auto g = rr::grpo::sample_group(theta_old, env.queries[q], config.group_size,
                                    rr::mix_seed(1, q));
    rr::grpo::assign_rewards(g, schedule);
    rr::grpo::fill_advantages(g, config.std_floor);
    groups.push_back(std::move(g));
  }
  rr::grpo::PolicyParams theta = theta_old;
  rr::Rng rng(9);
  for (auto& t : theta.theta) t += (rng.uniform() * 2.0 - 1.0) * 0.05;
  rr::grpo::PolicyParams theta_ref = theta_old;

  std::cout << std::left << std::setw(22) << "kernel" << std::right << std::setw(15) << "serial"
            << std::setw(15) << "openmp" << std::setw(10) << "speedup" << "\n";

  {
    double a = 0, b = 0;
    double ts = time_ms(iters, [&] {
      a = rr::grpo::grpo_objective(theta, theta_old, theta_ref, groups, config,
                                   rr::grpo::Execution::serial);
    });
    double tp = time_ms(iters, [&] {
      b = rr::grpo::grpo_objective(theta, theta_old, theta_ref, groups, config,
                                   rr::grpo::Execution::openmp);
    });
    report("grpo_objective", ts, tp, a == b);
  }
  {
    std::vector<double> a, b;
    double ts = time_ms(iters, [&] {
      a = rr::grpo::grpo_gradient(theta, theta_old, theta_ref, groups, config,
                                  rr::grpo::Execution::serial);
    });
    double tp = time_ms(iters, [&] {
      b = rr::grpo::grpo_gradient(theta, theta_old, theta_ref, groups, config,
                                  rr::grpo::Execution::openmp);
    });
    report("grpo_gradient", ts, tp, a == b);
  }
  {
    double a = 0, b = 0;
    double ts = time_ms(iters, [&] {
      a = rr::grpo::expected_reward(theta, env.queries, 64, 3, schedule, false,
                                    rr::grpo::Execution::serial);
    });
    double tp = time_ms(iters, [&] {
      b = rr::grpo::expected_reward(theta, env.queries, 64, 3, schedule, false,
                                    rr::grpo::Execution::openmp);
    });
    report("expected_reward", ts, tp, a == b);
  }
  {
    auto demos = rr::toyenv::make_demonstrations(env);
    rr::grpo::PolicyParams a, b;
    double ts = time_ms(1, [&] {
      a = rr::grpo::toy_sft_fit(demos, rr::grpo::PolicyParams::zeros(3, 3), 10, 0.1,
                                rr::grpo::Execution::serial);
    });
    double tp = time_ms(1, [&] {
      b = rr::grpo::toy_sft_fit(demos, rr::grpo::PolicyParams::zeros(3, 3), 10, 0.1,
                                rr::grpo::Execution::openmp);
    });
    report("toy_sft_fit", ts, tp, a.theta == b.theta);
  }
  {
    // leave-one-out evaluation over synthetic users with a deterministic ranker
    std::vector<rr::corpus::Item> catalog;
    for (int i = 1; i <= 400; ++i) {
      rr::corpus::Item item;
      item.item_id = std::to_string(i);
      item.title = "Movie " + std::to_string(i);
      catalog.push_back(std::move(item));
    }
    std::vector<rr::corpus::Interaction> rows;
    rr::Rng crng(2);
    for (int u = 1; u <= 200; ++u)
      for (int t = 0; t < 20; ++t)
        rows.push_back({"u" + std::to_string(u),
                        std::to_string(1 + crng.uniform_int(400)), 4,
                        1000000 + t * 60 + u, true});
    auto users = rr::corpus::build_sequences(rows, 40, false);
    rr::eval::EvalProtocol protocol;
    auto ranker = rr::eval::random_ranker(11);
    rr::eval::EvalTable a, b;
    double ts = time_ms(iters, [&] {
      a = rr::eval::leave_one_out_eval(ranker, users, catalog, protocol, nullptr, false);
    });
    double tp = time_ms(iters, [&] {
      b = rr::eval::leave_one_out_eval(ranker, users, catalog, protocol, nullptr, true);
    });
    report("leave_one_out_eval", ts, tp, a.mean == b.mean && a.n_users == b.n_users);
  }
  return 0;
}
