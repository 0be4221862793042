#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "basil/attacks.hpp"
#include "basil/dataset.hpp"
#include "basil/history.hpp"
#include "basil/loss_task.hpp"
#include "basil/model_vector.hpp"
#include "basil/random.hpp"

namespace basil {

struct LrSchedule {
    enum class Kind { constant, inverse_decay } kind = Kind::inverse_decay;
    double base = 0.03;
    double decay = 0.03;

    static LrSchedule constant(double lr) { return {Kind::constant, lr, 0.0}; }
    // k is the zero-based round index.
    double at(std::size_t k) const;
};

struct RingConfig {
    std::size_t N = 0;
    std::size_t b = 0;
    std::size_t d = 0;  // tolerated dropouts; > 0 switches to dropout mode
    std::size_t S = 1;
    std::uint64_t seed = 0;
    std::vector<NodeId> byzantine;

    void validate() const;
    std::size_t multicast_width() const { return d > 0 ? b + d + 1 : S; }
    std::size_t storage_depth() const { return d > 0 ? b + 1 : S; }
    bool is_byzantine(NodeId id) const;
};

std::vector<NodeId> node_range(std::size_t N);  // 1..N
// Uniform without replacement, returned sorted.
std::vector<NodeId> place_byzantine(std::span<const NodeId> ids, std::size_t count, std::uint64_t seed);

class RingOrder {
public:
    RingOrder() = default;
    explicit RingOrder(std::vector<NodeId> clockwise);

    std::size_t size() const { return order_.size(); }
    NodeId at(std::size_t pos) const { return order_.at(pos % order_.size()); }
    std::size_t position(NodeId id) const;
    bool contains(NodeId id) const;
    NodeId successor(NodeId id, std::size_t k = 1) const;
    NodeId predecessor(NodeId id, std::size_t k = 1) const;
    const std::vector<NodeId>& nodes() const { return order_; }
    bool operator==(const RingOrder&) const = default;

private:
    std::vector<NodeId> order_;
};

RingOrder agree_order(std::span<const NodeId> ids, std::uint64_t seed);

struct StoredModel {
    NodeId sender = 0;
    std::size_t round = 0;
    std::uint64_t seq = 0;        // emission order inside one simulator
    bool malicious = false;       // produced by a live attack
    std::shared_ptr<const ModelVector> model;
};

// Bounded FIFO, newest first.
class StoredModels {
public:
    explicit StoredModels(std::size_t capacity = 1);

    void insert(StoredModel m);
    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }
    const StoredModel& at(std::size_t i) const { return entries_.at(i); }
    const StoredModel& newest() const;
    const std::deque<StoredModel>& entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::deque<StoredModel> entries_;
};

struct Selection {
    std::size_t index = 0;  // position among the candidates (0 = newest)
    double loss = 0.0;
    std::vector<double> losses;
    bool any_finite = true;
};

// Smallest loss wins, ties go to the earliest (newest) candidate; models with
// non-finite entries score +inf.
Selection select_by_loss(std::span<const ModelVector* const> newest_first, const LossTask& task,
                         std::span<const SampleRef> eval_batch);

struct BasilChoice {
    StoredModel chosen;
    Selection detail;
};

BasilChoice basil_select(const StoredModels& stored, const LossTask& task, std::span<const SampleRef> eval_batch);

struct RingOptions {
    LrSchedule lr;
    std::size_t batch_size = 80;
    AttackSpec attack;
    bool filtering = true;        // false: take the newest model (R-plain)
    std::size_t local_epochs = 0; // 0: one SGD step per activation
    std::size_t test_subset = 0;  // 0: whole test set
    std::size_t test_every = 1;
    int group = -1;               // tag copied into history records
};

// Per-round inputs when a caller (Basil+) drives the clock.
struct RoundContext {
    std::size_t round_index = 0;  // zero-based, gates attacks
    std::size_t record_round = 1;
    std::size_t inner = 0;
    double lr = 0.0;
    bool evaluate_test = true;
};

// Sequential ring training over one set of members (the whole network for
// Basil, one group for Basil+).
class RingSimulator {
public:
    RingSimulator(RingConfig config, RingOrder order, std::shared_ptr<const LossTask> task, const Dataset& train,
                  const Dataset* test, RingOptions options, const ModelVector& x0);

    // K rounds with the configured schedule, continuing the internal clock.
    void run(std::size_t rounds);
    void run_round(const RoundContext& ctx);

    void drop(NodeId id);
    void rejoin(NodeId id);
    bool active(NodeId id) const;

    // Replace each member's store with a single start model.
    void reset_stores(const std::vector<std::pair<NodeId, std::shared_ptr<const ModelVector>>>& start);

    const RingConfig& config() const { return config_; }
    const RingOrder& order() const { return order_; }
    const StoredModels& stored(NodeId id) const;
    const StoredModel& latest(NodeId id) const;
    std::size_t rounds_done() const { return rounds_done_; }
    const TrainHistory& history() const { return history_; }
    TrainHistory& history() { return history_; }
    const LossTask& task() const { return *task_; }

private:
    struct Node {
        NodeId id = 0;
        bool byzantine = false;
        bool active = true;
        bool dropped = false;
        StoredModels store;
        StoredModel latest;
        Rng batch_rng;
        Rng attack_rng;
        std::vector<std::size_t> pool;  // local sample indices, permuted in place
    };

    Node& node(NodeId id);
    const Node& node(NodeId id) const;
    Batch draw_batch(Node& n);
    ModelVector local_update(Node& n, const ModelVector& start, const Batch& eval_batch, double lr);
    void activate(Node& n, const RoundContext& ctx);
    void multicast(Node& n, const StoredModel& m);

    RingConfig config_;
    RingOrder order_;
    std::shared_ptr<const LossTask> task_;
    const Dataset& train_;
    Batch test_batch_;
    RingOptions options_;
    std::vector<Node> nodes_;  // indexed by ring position
    std::size_t rounds_done_ = 0;
    std::uint64_t seq_ = 0;
    TrainHistory history_;
};

// Runs Basil on nodes 1..N with the agreed ring order derived from config.seed.
TrainHistory run_basil(const RingConfig& config, std::shared_ptr<const LossTask> task, const Dataset& train,
                       const Dataset* test, std::size_t rounds, const RingOptions& options, const ModelVector& x0);

void rejoin_node(RingSimulator& sim, NodeId id);

}  // namespace basil
