#pragma once

#include <cstddef>
#include <cstdint>

namespace basil {

struct Probability {
    double value = 0.0;      // clamped to [0,1]
    double raw_bound = 0.0;  // before clamping; a union bound may exceed 1
};

// Union bound on a run of S consecutive Byzantine nodes somewhere on a ring of
// N nodes with b Byzantine: N * prod_{i<S} (b-i)/(N-i); exactly 0 when S > b.
Probability basil_failure_prob(std::size_t N, std::size_t b, std::size_t S);
// Same quantity evaluated with logarithms only.
double basil_failure_prob_log(std::size_t N, std::size_t b, std::size_t S);

// Some group of n nodes (out of G groups) holds at least n-1 Byzantine nodes.
Probability basil_plus_failure_case1(std::size_t N, std::size_t b, std::size_t n, std::size_t G);
double basil_plus_failure_case1_log(std::size_t N, std::size_t b, std::size_t n, std::size_t G);

enum class RunDenominator {
    total_nodes,  // (N - s), the published form
    group_size,   // (n - s), a run inside one group's ring
};

// G * sum_i [n * prod_{s<S} max(i-s,0)/(den - s)] * C(b,i) C(N-b,n-i) / C(N,n).
Probability basil_plus_failure_prob(std::size_t N, std::size_t b, std::size_t n, std::size_t G, std::size_t S,
                                    RunDenominator den = RunDenominator::total_nodes);
double basil_plus_failure_prob_log(std::size_t N, std::size_t b, std::size_t n, std::size_t G, std::size_t S,
                                   RunDenominator den = RunDenominator::total_nodes);

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::uint64_t trials = 0;
    std::uint64_t failures = 0;
};

// Uniform placements of b Byzantine nodes on a ring of N; a failure is any
// circular run of at least S Byzantine nodes. Trials are split into seeded
// chunks so the result does not depend on `threads` (0 = hardware).
MonteCarloEstimate monte_carlo_ring_failure(std::size_t N, std::size_t b, std::size_t S, std::uint64_t trials,
                                            std::uint64_t seed, unsigned threads = 0);
// Random split into G rings of n; a failure is a run of S inside any group.
MonteCarloEstimate monte_carlo_basil_plus_failure(std::size_t N, std::size_t b, std::size_t n, std::size_t G,
                                                  std::size_t S, std::uint64_t trials, std::uint64_t seed,
                                                  unsigned threads = 0);

struct StepTimes {
    double perf = 0.0;  // evaluating the stored models
    double comm = 0.0;  // one multicast
    double sgd = 0.0;   // one local update
};

// tau * n * G * (perf + comm + sgd): upper bound on a Basil training phase.
double basil_training_time(std::size_t tau, std::size_t n, std::size_t G, const StepTimes& t);
// Completion time of the last node in round tau, replaying the per-node
// recursion where node k < S evaluates only the k-1 models it has received.
double basil_training_time_recursion(std::size_t tau, std::size_t N, std::size_t S, const StepTimes& t);
// (tau n + G + 1) perf + (S G + tau n - 1) comm + tau n sgd.
double basil_plus_training_time(std::size_t tau, std::size_t n, std::size_t G, std::size_t S, const StepTimes& t);
// K (t_dist + t_perf + t_agg + t_sgd + S * 32 d / R).
double ubar_training_time(std::size_t K, std::size_t S, double d, double R, double t_dist, double t_perf, double t_agg,
                          double t_sgd);

}  // namespace basil
