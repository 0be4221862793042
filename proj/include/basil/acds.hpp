#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "json.hpp"

#include "basil/dataset.hpp"

namespace basil {

struct AcdsParams {
    std::size_t groups = 1;         // G
    double alpha = 0.05;            // shared fraction of each local dataset
    std::size_t batches = 5;        // H
    double bits_per_sample = 0.0;   // I; 0 means 8 bits per feature
    std::uint64_t seed = 0;
};

struct AcdsPlan {
    std::size_t G = 0, n = 0, H = 0, M = 0, D = 0;
    double alpha = 0.0;
    double effective_alpha = 0.0;  // M*H/D after rounding M down
    double bits_per_sample = 0.0;
    std::vector<std::vector<NodeId>> groups;  // member order 1_g .. n_g
    // node -> H batches of M global sample indices
    std::map<NodeId, std::vector<std::vector<std::size_t>>> batches;

    std::size_t group_of(NodeId id) const;
    std::size_t position_of(NodeId id) const;  // 1-based inside its group
};

AcdsPlan plan_acds(std::span<const NodeId> ids, const Dataset& data, const AcdsParams& params);

struct BatchId {
    NodeId owner = 0;
    std::size_t round = 0;
    auto operator<=>(const BatchId&) const = default;
};

struct Provenance {
    std::size_t sample = 0;
    NodeId owner = 0;            // simulator-side truth, never visible to nodes
    std::size_t batch_round = 0; // h of the owner's batch
    std::size_t received_in = 0; // 1..H, H+1 for the dummy round, H+2 for global sharing
    std::vector<NodeId> candidates;
};

struct AcdsLedger {
    std::uint64_t phase2_items_sent = 0;  // includes dummy items
    std::uint64_t phase3_items_multicast = 0;
    std::uint64_t phase3_items_received = 0;
};

struct SharedPool {
    std::size_t H = 0, M = 0;
    double bits_per_sample = 0.0;
    std::map<NodeId, std::vector<Provenance>> received;  // real samples only
    std::map<NodeId, std::size_t> dummies_seen;
    std::map<NodeId, std::set<BatchId>> missing_before_dummy;  // own-group batches not yet held after round H
    std::map<NodeId, std::set<BatchId>> missing_after_dummy;
    std::map<NodeId, AcdsLedger> ledger;
    // group -> round (1..H+1) -> circulating list size in batches after each position
    std::vector<std::vector<std::vector<std::size_t>>> list_sizes;
    double phase2_batch_slots = 0.0;  // sequential batch transmissions, slowest group
    double phase3_batch_slots = 0.0;  // batches received by one node from other groups

    double communication_bits(NodeId id) const;
    double communication_time(double rate) const;
    std::vector<std::size_t> training_samples(NodeId id) const;
    nlohmann::json summary(const AcdsPlan& plan) const;
};

SharedPool run_acds(const AcdsPlan& plan, const Dataset& data, std::uint64_t shuffle_seed);

std::size_t anonymity_level(const SharedPool& pool, NodeId node, std::size_t sample);

double acds_comm_cost(double alpha, double D, double I, double H, double n, double G);
double acds_comm_time(double alpha, double D, double I, double H, double n, double G, double R);

// Each node's partition extended with the real samples it received.
Dataset with_shared_data(Dataset data, const SharedPool& pool);

}  // namespace basil
