#include <cstdlib>
#include <future>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "basil/acds.hpp"
#include "basil/analytics.hpp"
#include "basil/errors.hpp"
#include "basil/experiment.hpp"
#include "basil/ring_protocol.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json nullable(double v, bool present) { return present ? json(v) : json(nullptr); }

int run_command(const std::string& config_path, const std::string& root_flag, std::size_t replicates) {
    fs::path root = root_flag;
    if (root.empty()) {
        const char* env = std::getenv("BASIL_OUTPUT_ROOT");
        root = env ? fs::path(env) : fs::path("runs");
    }
    basil::ExperimentConfig config = basil::load_config(config_path);
    if (replicates <= 1) {
        auto res = basil::run_experiment(config, root);
        std::cout << json{{"directory", res.directory.string()}, {res.metric_name, res.final_metric}}.dump() << "\n";
        return 0;
    }
    // Replicates share nothing but the config; each gets its own seed and directory.
    std::vector<std::future<basil::ExperimentResult>> jobs;
    for (std::size_t r = 0; r < replicates; ++r) {
        basil::ExperimentConfig c = config;
        c.seed = config.seed + r;
        c.output_directory = config.output_directory / ("seed-" + std::to_string(c.seed));
        jobs.push_back(std::async(std::launch::async, [c, root] { return basil::run_experiment(c, root); }));
    }
    int status = 0;
    for (auto& j : jobs) {
        try {
            auto res = j.get();
            std::cout << json{{"directory", res.directory.string()}, {res.metric_name, res.final_metric}}.dump() << "\n";
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            status = 1;
        }
    }
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"decentralised Byzantine-resilient training simulator"};
    app.require_subcommand(1);

    std::string config_path, output_root;
    std::size_t replicates = 1;
    auto* run = app.add_subcommand("run", "run one experiment config (or replay a manifest)");
    run->add_option("config", config_path)->required()->check(CLI::ExistingFile);
    run->add_option("--output-root", output_root, "defaults to $BASIL_OUTPUT_ROOT, then ./runs");
    run->add_option("--replicates", replicates, "consecutive seeds run concurrently")->check(CLI::PositiveNumber);

    auto* analyze = app.add_subcommand("analyze", "closed-form analytics");
    analyze->require_subcommand(1);

    std::size_t N = 0, b = 0, S = 0, n = 0, G = 1, tau = 1, K = 1;
    std::uint64_t trials = 0, seed = 1;
    bool case1 = false, group_den = false;
    auto* failure = analyze->add_subcommand("failure", "probability that a Byzantine run breaks the ring");
    failure->add_option("--N", N)->required();
    failure->add_option("--b", b)->required();
    failure->add_option("--S", S, "connectivity (Basil+: in-group)");
    failure->add_option("--G", G, "groups; >1 selects the grouped bound");
    failure->add_option("--n", n, "group size; defaults to N/G");
    failure->add_flag("--case1", case1, "grouped bound for a group holding >= n-1 Byzantine nodes");
    failure->add_flag("--group-denominator", group_den, "use (n-s) in the grouped run probability");
    failure->add_option("--trials", trials, "Monte Carlo trials; 0 skips the simulation");
    failure->add_option("--seed", seed);

    double alpha = 0, D = 0, I = 0, H = 1, R = 0;
    auto* cost = analyze->add_subcommand("cost", "ACDS communication bits per node (and time when --R is set)");
    cost->add_option("--alpha", alpha)->required();
    cost->add_option("--D", D)->required();
    cost->add_option("--I", I)->required();
    cost->add_option("--H", H)->required();
    cost->add_option("--n", n)->required();
    cost->add_option("--G", G)->required();
    cost->add_option("--R", R, "link rate, bits/s");

    std::string scheme = "basil";
    double t_perf = 1, t_comm = 1, t_sgd = 1, t_dist = 0, t_agg = 0, dim = 0;
    auto* time = analyze->add_subcommand("time", "training-time models");
    time->add_option("--scheme", scheme)->check(CLI::IsMember({"basil", "basil-recursion", "basil-plus", "ubar"}));
    time->add_option("--tau", tau);
    time->add_option("--n", n);
    time->add_option("--G", G);
    time->add_option("--S", S);
    time->add_option("--K", K);
    time->add_option("--perf", t_perf);
    time->add_option("--comm", t_comm);
    time->add_option("--sgd", t_sgd);
    time->add_option("--dist", t_dist);
    time->add_option("--agg", t_agg);
    time->add_option("--d", dim, "model size (ubar)");
    time->add_option("--R", R, "link rate (ubar)");

    std::size_t demo_n = 4, demo_G = 1, demo_H = 2, demo_D = 20;
    double demo_alpha = 0.1;
    std::uint64_t demo_seed = 1;
    auto* demo = app.add_subcommand("acds-demo", "run data sharing on a toy dataset and print the bookkeeping");
    demo->add_option("--n", demo_n, "nodes per group")->check(CLI::Range(2, 1000));
    demo->add_option("--G", demo_G)->check(CLI::PositiveNumber);
    demo->add_option("--H", demo_H)->check(CLI::PositiveNumber);
    demo->add_option("--D", demo_D, "samples per node")->check(CLI::PositiveNumber);
    demo->add_option("--alpha", demo_alpha);
    demo->add_option("--seed", demo_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return run_command(config_path, output_root, replicates);

        json out;
        if (*failure) {
            if (G <= 1 && !case1) {
                if (S == 0) throw CLI::ValidationError("--S", "required");
                auto p = basil::basil_failure_prob(N, b, S);
                out = {{"query", {{"kind", "failure"}, {"N", N}, {"b", b}, {"S", S}}},
                       {"analytic", p.value},
                       {"raw_bound", p.raw_bound}};
                basil::MonteCarloEstimate mc;
                if (trials) mc = basil::monte_carlo_ring_failure(N, b, S, trials, seed);
                out["monte_carlo"] = nullable(mc.estimate, trials > 0);
                out["std_error"] = nullable(mc.std_error, trials > 0);
            } else {
                if (G == 0 || N % G != 0) throw CLI::ValidationError("--G", "must divide N");
                if (n == 0) n = N / G;
                json q = {{"kind", case1 ? "failure-case1" : "failure-grouped"}, {"N", N}, {"b", b}, {"n", n}, {"G", G}};
                basil::Probability p;
                if (case1) {
                    p = basil::basil_plus_failure_case1(N, b, n, G);
                } else {
                    if (S == 0) throw CLI::ValidationError("--S", "required");
                    q["S"] = S;
                    q["denominator"] = group_den ? "group" : "total";
                    p = basil::basil_plus_failure_prob(
                        N, b, n, G, S, group_den ? basil::RunDenominator::group_size : basil::RunDenominator::total_nodes);
                }
                out = {{"query", q}, {"analytic", p.value}, {"raw_bound", p.raw_bound}};
                bool mc_on = trials > 0 && !case1;
                basil::MonteCarloEstimate mc;
                if (mc_on) mc = basil::monte_carlo_basil_plus_failure(N, b, n, G, S, trials, seed);
                out["monte_carlo"] = nullable(mc.estimate, mc_on);
                out["std_error"] = nullable(mc.std_error, mc_on);
            }
            out["trials"] = trials;
        } else if (*cost) {
            out = {{"query", {{"kind", "cost"}, {"alpha", alpha}, {"D", D}, {"I", I}, {"H", H}, {"n", n}, {"G", G}}},
                   {"analytic", basil::acds_comm_cost(alpha, D, I, H, static_cast<double>(n), static_cast<double>(G))},
                   {"monte_carlo", nullptr},
                   {"std_error", nullptr},
                   {"trials", 0}};
            if (R > 0) {
                out["query"]["R"] = R;
                out["time_seconds"] =
                    basil::acds_comm_time(alpha, D, I, H, static_cast<double>(n), static_cast<double>(G), R);
            }
        } else if (*time) {
            basil::StepTimes t{t_perf, t_comm, t_sgd};
            json q = {{"kind", "time"}, {"scheme", scheme}};
            double v = 0;
            if (scheme == "basil") {
                v = basil::basil_training_time(tau, n, G, t);
                q.update({{"tau", tau}, {"n", n}, {"G", G}});
            } else if (scheme == "basil-recursion") {
                v = basil::basil_training_time_recursion(tau, n, S, t);
                q.update({{"tau", tau}, {"N", n}, {"S", S}});
            } else if (scheme == "basil-plus") {
                v = basil::basil_plus_training_time(tau, n, G, S, t);
                q.update({{"tau", tau}, {"n", n}, {"G", G}, {"S", S}});
            } else {
                if (R <= 0) throw CLI::ValidationError("--R", "ubar needs a positive link rate");
                v = basil::ubar_training_time(K, S, dim, R, t_dist, t_perf, t_agg, t_sgd);
                q.update({{"K", K}, {"S", S}, {"d", dim}, {"R", R}});
            }
            out = {{"query", q}, {"analytic", v}, {"monte_carlo", nullptr}, {"std_error", nullptr}, {"trials", 0}};
        } else if (*demo) {
            std::size_t N_total = demo_n * demo_G;
            basil::Dataset data(2, 2);
            for (std::size_t i = 0; i < N_total * demo_D; ++i) {
                double x[2] = {static_cast<double>(i), 0.0};
                data.add(x, static_cast<int>(i % 2));
            }
            data = basil::partition(std::move(data), N_total, basil::PartitionMode::iid, demo_seed);
            basil::AcdsParams params{demo_G, demo_alpha, demo_H, 0.0, demo_seed};
            auto ids = basil::node_range(N_total);
            auto plan = basil::plan_acds(ids, data, params);
            auto pool = basil::run_acds(plan, data, demo_seed);
            out = pool.summary(plan);
        }
        std::cout << out.dump(2) << "\n";
        return 0;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const basil::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return *run ? 1 : 2;
    } catch (const basil::PreconditionError& e) {
        std::cerr << "invalid parameters: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
