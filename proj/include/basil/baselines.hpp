#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "basil/attacks.hpp"
#include "basil/basil_plus.hpp"
#include "basil/dataset.hpp"
#include "basil/history.hpp"
#include "basil/loss_task.hpp"
#include "basil/ring_protocol.hpp"

namespace basil {

// Undirected graph over nodes 1..N without self-loops.
class GraphTopology {
public:
    GraphTopology() = default;
    explicit GraphTopology(std::size_t N);

    static GraphTopology complete(std::size_t N);
    static GraphTopology from_edges(std::size_t N, const std::vector<std::pair<NodeId, NodeId>>& edges);

    void add_edge(NodeId a, NodeId b);
    bool has_edge(NodeId a, NodeId b) const;
    const std::vector<NodeId>& neighbors(NodeId id) const;
    std::size_t size() const { return adj_.size(); }
    std::vector<std::pair<NodeId, NodeId>> edges() const;
    std::string edge_list() const;  // "a b" per line, a < b
    bool connected_among(std::span<const NodeId> subset) const;

    double p_benign = 0.0;
    double p_byzantine = 0.0;
    std::uint64_t seed = 0;
    std::size_t attempts = 0;

private:
    std::vector<std::vector<NodeId>> adj_;  // sorted neighbour ids, index id-1
};

// Benign-benign edges with p_benign, edges touching a Byzantine node with
// p_byzantine. Retries derived seeds until the benign subgraph is connected.
GraphTopology generate_graph(std::size_t N, std::span<const NodeId> byzantine, double p_benign, double p_byzantine,
                             std::uint64_t seed, std::size_t max_attempts = 100);

struct UbarChoice {
    std::vector<std::size_t> stage1;  // indices into the neighbour list, nearest first
    std::vector<std::size_t> stage2;
    bool fallback = false;  // no candidate beat the own loss; best one used
    ModelVector aggregate;
};

UbarChoice ubar_aggregate(const ModelVector& own, std::span<const ModelVector* const> neighbours,
                          const LossTask& task, std::span<const SampleRef> batch, double rho);

enum class GraphScheme { g_plain, ubar };

struct GraphOptions {
    LrSchedule lr;
    std::size_t batch_size = 80;
    AttackSpec attack;
    double ubar_rho = 0.33;
    double ubar_alpha = 0.5;
    std::size_t test_subset = 0;
    std::size_t test_every = 1;
};

// Synchronous rounds: every update reads round-k models and writes round k+1.
class GraphSimulator {
public:
    GraphSimulator(GraphScheme scheme, GraphTopology graph, std::vector<NodeId> byzantine,
                   std::shared_ptr<const LossTask> task, const Dataset& train, const Dataset* test,
                   GraphOptions options, const ModelVector& x0, std::uint64_t seed);

    void run(std::size_t rounds);
    void run_round(const RoundContext& ctx);

    const ModelVector& model(NodeId id) const { return *models_.at(id - 1); }
    const TrainHistory& history() const { return history_; }
    TrainHistory& history() { return history_; }
    const GraphTopology& graph() const { return graph_; }

private:
    bool is_byzantine(NodeId id) const;
    Batch draw_batch(NodeId id);
    ModelVector honest_update(NodeId id, const std::vector<std::shared_ptr<const ModelVector>>& sent,
                              const Batch& batch, double lr, const RoundContext& ctx, bool audit);

    GraphScheme scheme_;
    GraphTopology graph_;
    std::vector<NodeId> byzantine_;
    std::shared_ptr<const LossTask> task_;
    const Dataset& train_;
    Batch test_batch_;
    GraphOptions options_;
    std::uint64_t seed_;
    std::vector<std::shared_ptr<const ModelVector>> models_;  // index id-1
    std::vector<Rng> batch_rngs_, attack_rngs_;
    std::vector<std::vector<std::size_t>> pools_;
    std::vector<char> malicious_;  // per-round: node id-1 sent attack output
    std::size_t rounds_done_ = 0;
    TrainHistory history_;
};

TrainHistory run_r_plain(RingConfig config, std::shared_ptr<const LossTask> task, const Dataset& train,
                         const Dataset* test, std::size_t rounds, RingOptions options, const ModelVector& x0);

TrainHistory run_g_plain(const GraphTopology& graph, std::vector<NodeId> byzantine,
                         std::shared_ptr<const LossTask> task, const Dataset& train, const Dataset* test,
                         std::size_t rounds, const GraphOptions& options, const ModelVector& x0, std::uint64_t seed);

TrainHistory run_ubar(const GraphTopology& graph, std::vector<NodeId> byzantine, std::shared_ptr<const LossTask> task,
                      const Dataset& train, const Dataset* test, std::size_t rounds, const GraphOptions& options,
                      const ModelVector& x0, std::uint64_t seed);

TrainHistory run_r_plain_plus(BasilPlusConfig config, std::shared_ptr<const LossTask> task, const Dataset& train,
                              const Dataset* test, std::size_t rounds, const ModelVector& x0);

}  // namespace basil
