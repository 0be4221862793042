#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "basil/dataset.hpp"

namespace basil {

// One activation of a benign node.
struct TrainRecord {
    std::size_t round = 0;  // 1-based training (or global) round
    std::size_t inner = 0;  // 1..tau inside a Basil+ global round, 0 otherwise
    NodeId node = 0;
    int group = -1;
    NodeId selected_sender = 0;  // 0 = the initial model or not applicable
    bool selected_malicious = false;
    bool benign_in_store = true;
    std::vector<NodeId> stored_senders;  // newest first, as seen at selection time
    std::vector<double> losses;          // parallel to stored_senders when filtering
    double train_loss = 0.0;
    double test_acc = 0.0;  // NaN when not evaluated this round
};

struct ProtocolEvent {
    std::size_t round = 0;
    NodeId node = 0;
    std::string kind;
    std::string detail;
};

// Selections made outside the plain ring pass (Basil+ stages, UBAR).
struct AuditEntry {
    std::size_t round = 0;
    std::string stage;
    NodeId node = 0;
    int group = -1;
    NodeId selected_sender = 0;
    bool selected_malicious = false;
    double selected_loss = 0.0;
    double min_loss = 0.0;
    std::vector<NodeId> candidates;
    std::vector<NodeId> kept;
};

struct NodeCost {
    std::uint64_t activations = 0;
    std::uint64_t models_evaluated = 0;
    std::uint64_t models_sent = 0;
    std::uint64_t max_stored = 0;
};

struct TrainHistory {
    std::string scheme;
    std::vector<TrainRecord> records;
    std::vector<ProtocolEvent> events;
    std::vector<AuditEntry> audit;
    std::map<NodeId, NodeCost> costs;
    nlohmann::json metadata = nlohmann::json::object();

    void append(const TrainHistory& other);
};

enum class AccuracyAggregate { worst, mean };

// (round, metric) over records that carry a test accuracy.
std::vector<std::pair<std::size_t, double>> accuracy_series(const TrainHistory& h, AccuracyAggregate how);
double final_accuracy(const TrainHistory& h, AccuracyAggregate how);

}  // namespace basil
