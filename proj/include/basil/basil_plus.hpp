#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include "basil/attacks.hpp"
#include "basil/dataset.hpp"
#include "basil/history.hpp"
#include "basil/loss_task.hpp"
#include "basil/ring_protocol.hpp"

namespace basil {

using ModelPtr = std::shared_ptr<const ModelVector>;

struct GroupState {
    std::size_t id = 0;  // 0-based
    std::vector<NodeId> members;  // agreed ring order
    std::vector<NodeId> tail;     // last S members
    std::vector<NodeId> head;     // first S members
    std::map<NodeId, ModelPtr> models;     // x of each member
    std::map<NodeId, ModelPtr> aggregate;  // z of tail members after circular aggregation
    std::set<NodeId> malicious;            // tail members whose z is attack output
};

std::vector<GroupState> cluster_nodes(std::span<const NodeId> ids, std::size_t G, std::size_t S, std::uint64_t seed);

struct AggregationContext {
    const LossTask& task;
    const Dataset& train;
    std::size_t batch_size = 80;
    AttackSpec attack;
    std::vector<NodeId> byzantine;
    std::uint64_t seed = 0;
    std::size_t round_index = 0;  // zero-based global round
    std::size_t record_round = 1;

    bool is_byzantine(NodeId id) const;
};

// Stage 3: running average across groups, filtered by loss at every hop.
void circular_aggregate(std::vector<GroupState>& groups, const AggregationContext& ctx,
                        std::vector<AuditEntry>& audit);
// Stage 4: last group's tails -> group 1 tails -> every group's head set.
void robust_multicast(std::vector<GroupState>& groups, const AggregationContext& ctx,
                      std::vector<AuditEntry>& audit);

struct BasilPlusConfig {
    std::size_t N = 0;
    std::size_t b = 0;
    std::size_t G = 1;
    std::size_t S = 0;  // 0: min(n-1, b+1)
    std::size_t tau = 1;
    std::uint64_t seed = 0;
    std::vector<NodeId> byzantine;
    RingOptions ring;
    bool parallel_groups = true;
    // Called after every global round with the post-multicast group states.
    std::function<void(std::size_t, const std::vector<GroupState>&)> observer;

    std::size_t group_size() const { return G == 0 ? 0 : N / G; }
    std::size_t effective_S() const;
    void validate() const;
};

TrainHistory run_basil_plus(const BasilPlusConfig& config, std::shared_ptr<const LossTask> task, const Dataset& train,
                            const Dataset* test, std::size_t rounds, const ModelVector& x0);

// Shared driver: robust = false gives R-plain+ (S=1 rings without filtering,
// plain mean of the last nodes handed to each group's first node).
TrainHistory run_grouped(const BasilPlusConfig& config, std::shared_ptr<const LossTask> task, const Dataset& train,
                         const Dataset* test, std::size_t rounds, const ModelVector& x0, bool robust);

// Mean of each group's last member model, given to every group's first member.
void r_plain_plus_aggregate(std::vector<GroupState>& groups);

}  // namespace basil
