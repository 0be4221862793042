#include "basil/analytics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "basil/errors.hpp"
#include "basil/random.hpp"

namespace basil {

namespace mp = boost::multiprecision;
using Rational = mp::cpp_rational;
using BigInt = mp::cpp_int;

namespace {

constexpr std::size_t kExactLimit = 1000;

BigInt binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    BigInt r = 1;
    for (std::size_t i = 1; i <= k; ++i) {
        r *= n - k + i;
        r /= i;
    }
    return r;
}

double log_binomial(std::size_t n, std::size_t k) {
    if (k > n) return -std::numeric_limits<double>::infinity();
    return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
           std::lgamma(static_cast<double>(n - k) + 1);
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

Probability clamp(double raw) { return {std::clamp(raw, 0.0, 1.0), raw}; }

void check_ring(std::size_t N, std::size_t b, std::size_t S) {
    if (N == 0) throw ConfigError("N must be positive");
    if (b > N) throw ConfigError("b must not exceed N");
    if (S == 0) throw ConfigError("S must be at least 1");
}

void check_groups(std::size_t N, std::size_t b, std::size_t n, std::size_t G) {
    if (N == 0 || n == 0 || G == 0 || n * G != N) throw ConfigError("group query needs n*G = N");
    if (b > N) throw ConfigError("b must not exceed N");
}

std::size_t run_denominator(RunDenominator den, std::size_t N, std::size_t n) {
    return den == RunDenominator::total_nodes ? N : n;
}

}  // namespace

Probability basil_failure_prob(std::size_t N, std::size_t b, std::size_t S) {
    check_ring(N, b, S);
    if (S > b) return {0.0, 0.0};
    if (N > kExactLimit) return clamp(basil_failure_prob_log(N, b, S));
    Rational r = static_cast<long long>(N);
    for (std::size_t i = 0; i < S; ++i) r *= Rational(static_cast<long long>(b - i), static_cast<long long>(N - i));
    return clamp(to_double(r));
}

double basil_failure_prob_log(std::size_t N, std::size_t b, std::size_t S) {
    check_ring(N, b, S);
    if (S > b) return 0.0;
    double lg = std::log(static_cast<double>(N));
    for (std::size_t i = 0; i < S; ++i)
        lg += std::log(static_cast<double>(b - i)) - std::log(static_cast<double>(N - i));
    return std::exp(lg);
}

Probability basil_plus_failure_case1(std::size_t N, std::size_t b, std::size_t n, std::size_t G) {
    check_groups(N, b, n, G);
    if (N > kExactLimit) return clamp(basil_plus_failure_case1_log(N, b, n, G));
    BigInt num = binomial(b, n) + binomial(b, n - 1) * binomial(N - b, 1);
    Rational r(num, binomial(N, n));
    r *= static_cast<long long>(G);
    return clamp(to_double(r));
}

double basil_plus_failure_case1_log(std::size_t N, std::size_t b, std::size_t n, std::size_t G) {
    check_groups(N, b, n, G);
    double denom = log_binomial(N, n);
    double a = std::exp(log_binomial(b, n) - denom);
    double c = std::exp(log_binomial(b, n - 1) + log_binomial(N - b, 1) - denom);
    return static_cast<double>(G) * (a + c);
}

Probability basil_plus_failure_prob(std::size_t N, std::size_t b, std::size_t n, std::size_t G, std::size_t S,
                                    RunDenominator den) {
    check_groups(N, b, n, G);
    if (S == 0 || S > n - 1 + (n == 1)) throw ConfigError("S must lie in [1, n-1]");
    if (N > kExactLimit) return clamp(basil_plus_failure_prob_log(N, b, n, G, S, den));
    std::size_t D = run_denominator(den, N, n);
    Rational total = 0;
    BigInt all = binomial(N, n);
    for (std::size_t i = 0; i <= std::min(b, n); ++i) {
        if (i < S) continue;  // the product has a zero factor
        Rational run = static_cast<long long>(n);
        for (std::size_t s = 0; s < S; ++s) run *= Rational(static_cast<long long>(i - s), static_cast<long long>(D - s));
        total += run * Rational(binomial(b, i) * binomial(N - b, n - i), all);
    }
    total *= static_cast<long long>(G);
    return clamp(to_double(total));
}

double basil_plus_failure_prob_log(std::size_t N, std::size_t b, std::size_t n, std::size_t G, std::size_t S,
                                   RunDenominator den) {
    check_groups(N, b, n, G);
    if (S == 0 || S > n - 1 + (n == 1)) throw ConfigError("S must lie in [1, n-1]");
    std::size_t D = run_denominator(den, N, n);
    double all = log_binomial(N, n);
    double total = 0.0;
    for (std::size_t i = S; i <= std::min(b, n); ++i) {
        double lg = std::log(static_cast<double>(n));
        for (std::size_t s = 0; s < S; ++s)
            lg += std::log(static_cast<double>(i - s)) - std::log(static_cast<double>(D - s));
        lg += log_binomial(b, i) + log_binomial(N - b, n - i) - all;
        total += std::exp(lg);
    }
    return static_cast<double>(G) * total;
}

namespace {

constexpr std::uint64_t kChunk = 1 << 16;

// True if marks[offset .. offset+len) holds a circular run of >= S ones.
bool circular_run(const std::vector<char>& marks, std::size_t offset, std::size_t len, std::size_t S) {
    std::size_t start = len;
    for (std::size_t i = 0; i < len; ++i)
        if (!marks[offset + i]) {
            start = i;
            break;
        }
    if (start == len) return len >= S;
    std::size_t run = 0;
    for (std::size_t k = 1; k <= len; ++k) {
        if (marks[offset + (start + k) % len]) {
            if (++run >= S) return true;
        } else {
            run = 0;
        }
    }
    return false;
}

template <class Trial>
MonteCarloEstimate run_chunks(std::uint64_t trials, std::uint64_t seed, unsigned threads, Trial trial) {
    if (trials == 0) throw ConfigError("Monte-Carlo needs at least one trial");
    std::uint64_t chunks = (trials + kChunk - 1) / kChunk;
    std::vector<std::uint64_t> fails(chunks, 0);
    std::atomic<std::uint64_t> next{0};
    unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, chunks));
    auto work = [&] {
        for (std::uint64_t c; (c = next.fetch_add(1)) < chunks;) {
            Rng rng = make_rng(seed, Stream::monte_carlo, c);
            std::uint64_t count = std::min(kChunk, trials - c * kChunk);
            std::uint64_t f = 0;
            auto state = trial.fresh();
            for (std::uint64_t t = 0; t < count; ++t) f += trial(rng, state) ? 1 : 0;
            fails[c] = f;
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    MonteCarloEstimate e;
    e.trials = trials;
    for (auto f : fails) e.failures += f;
    e.estimate = static_cast<double>(e.failures) / static_cast<double>(trials);
    e.std_error = std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(trials));
    return e;
}

struct PlacementState {
    std::vector<std::size_t> perm;
    std::vector<char> marks;
};

// Marks b uniformly chosen positions out of N. The permutation is not reset
// between trials; a partial shuffle of any permutation is still uniform.
void place(Rng& rng, PlacementState& st, std::size_t b) {
    std::size_t N = st.perm.size();
    for (std::size_t i = 0; i < b; ++i) std::swap(st.perm[i], st.perm[i + uniform_index(rng, N - i)]);
    std::fill(st.marks.begin(), st.marks.end(), 0);
    for (std::size_t i = 0; i < b; ++i) st.marks[st.perm[i]] = 1;
}

PlacementState fresh_state(std::size_t N) {
    PlacementState st;
    st.perm.resize(N);
    for (std::size_t i = 0; i < N; ++i) st.perm[i] = i;
    st.marks.assign(N, 0);
    return st;
}

}  // namespace

MonteCarloEstimate monte_carlo_ring_failure(std::size_t N, std::size_t b, std::size_t S, std::uint64_t trials,
                                            std::uint64_t seed, unsigned threads) {
    check_ring(N, b, S);
    struct Trial {
        std::size_t N, b, S;
        PlacementState fresh() const { return fresh_state(N); }
        bool operator()(Rng& rng, PlacementState& st) const {
            if (S > b) return false;
            place(rng, st, b);
            return circular_run(st.marks, 0, N, S);
        }
    };
    return run_chunks(trials, seed, threads, Trial{N, b, S});
}

MonteCarloEstimate monte_carlo_basil_plus_failure(std::size_t N, std::size_t b, std::size_t n, std::size_t G,
                                                  std::size_t S, std::uint64_t trials, std::uint64_t seed,
                                                  unsigned threads) {
    check_groups(N, b, n, G);
    if (S == 0) throw ConfigError("S must be at least 1");
    // Positions g*n .. g*n+n-1 form group g in ring order; a uniform
    // placement over all N positions covers the random split too.
    struct Trial {
        std::size_t N, b, n, G, S;
        PlacementState fresh() const { return fresh_state(N); }
        bool operator()(Rng& rng, PlacementState& st) const {
            if (S > b) return false;
            place(rng, st, b);
            for (std::size_t g = 0; g < G; ++g)
                if (circular_run(st.marks, g * n, n, S)) return true;
            return false;
        }
    };
    return run_chunks(trials, seed, threads, Trial{N, b, n, G, S});
}

namespace {

void check_times(const StepTimes& t) {
    if (t.perf < 0 || t.comm < 0 || t.sgd < 0) throw ConfigError("step times must be nonnegative");
}

}  // namespace

double basil_training_time(std::size_t tau, std::size_t n, std::size_t G, const StepTimes& t) {
    check_times(t);
    return static_cast<double>(tau * n * G) * (t.perf + t.comm + t.sgd);
}

double basil_training_time_recursion(std::size_t tau, std::size_t N, std::size_t S, const StepTimes& t) {
    check_times(t);
    if (N == 0) throw ConfigError("N must be positive");
    if (tau == 0) return 0.0;
    double comp = t.perf + t.sgd;
    // First round: node 1 starts from the initial model, nodes 2..S have
    // received only k-1 models so far.
    double e = t.sgd;
    for (std::size_t k = 2; k <= N; ++k) {
        if (k <= S)
            e += t.comm + static_cast<double>(k - 1) * t.perf + t.sgd;
        else
            e += t.comm + comp;
    }
    for (std::size_t r = 2; r <= tau; ++r)
        for (std::size_t k = 1; k <= N; ++k) e += t.comm + comp;
    return e;
}

double basil_plus_training_time(std::size_t tau, std::size_t n, std::size_t G, std::size_t S, const StepTimes& t) {
    check_times(t);
    auto tn = static_cast<double>(tau * n);
    auto g = static_cast<double>(G);
    return (tn + g + 1.0) * t.perf + (static_cast<double>(S) * g + tn - 1.0) * t.comm + tn * t.sgd;
}

double ubar_training_time(std::size_t K, std::size_t S, double d, double R, double t_dist, double t_perf, double t_agg,
                          double t_sgd) {
    if (!(R > 0)) throw ConfigError("transmission rate R must be positive");
    if (d < 0 || t_dist < 0 || t_perf < 0 || t_agg < 0 || t_sgd < 0) throw ConfigError("times must be nonnegative");
    return static_cast<double>(K) * (t_dist + t_perf + t_agg + t_sgd + static_cast<double>(S) * 32.0 * d / R);
}

}  // namespace basil
