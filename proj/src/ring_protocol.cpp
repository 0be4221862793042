#include "basil/ring_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "basil/errors.hpp"

namespace basil {

double LrSchedule::at(std::size_t k) const {
    if (kind == Kind::constant) return base;
    return base / (1.0 + decay * static_cast<double>(k));
}

void RingConfig::validate() const {
    if (N == 0) throw ConfigError("ring needs at least one node");
    if (S == 0) throw ConfigError("connectivity S must be at least 1");
    if (N > 1 && S > N - 1) throw ConfigError("connectivity S must not exceed N-1");
    if (b >= N) throw ConfigError("b must be smaller than N");
    if (byzantine.size() > b) throw ConfigError("byzantine set larger than b");
    if (d > 0 && b + d + 1 > N - 1) throw ConfigError("dropout mode needs b+d+1 <= N-1");
    std::set<NodeId> seen(byzantine.begin(), byzantine.end());
    if (seen.size() != byzantine.size()) throw ConfigError("duplicate byzantine ids");
}

bool RingConfig::is_byzantine(NodeId id) const {
    return std::find(byzantine.begin(), byzantine.end(), id) != byzantine.end();
}

std::vector<NodeId> node_range(std::size_t N) {
    std::vector<NodeId> ids(N);
    for (std::size_t i = 0; i < N; ++i) ids[i] = static_cast<NodeId>(i + 1);
    return ids;
}

std::vector<NodeId> place_byzantine(std::span<const NodeId> ids, std::size_t count, std::uint64_t seed) {
    if (count > ids.size()) throw ConfigError("more byzantine nodes than nodes");
    std::vector<NodeId> pool(ids.begin(), ids.end());
    std::sort(pool.begin(), pool.end());
    Rng rng = make_rng(seed, Stream::placement);
    for (std::size_t i = 0; i < count; ++i) {
        auto j = i + uniform_index(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

RingOrder::RingOrder(std::vector<NodeId> clockwise) : order_(std::move(clockwise)) {}

std::size_t RingOrder::position(NodeId id) const {
    auto it = std::find(order_.begin(), order_.end(), id);
    if (it == order_.end()) throw ConfigError("node " + std::to_string(id) + " is not on the ring");
    return static_cast<std::size_t>(it - order_.begin());
}

bool RingOrder::contains(NodeId id) const { return std::find(order_.begin(), order_.end(), id) != order_.end(); }

NodeId RingOrder::successor(NodeId id, std::size_t k) const { return at(position(id) + k); }

NodeId RingOrder::predecessor(NodeId id, std::size_t k) const {
    std::size_t n = order_.size();
    return at(position(id) + n - (k % n));
}

RingOrder agree_order(std::span<const NodeId> ids, std::uint64_t seed) {
    if (ids.empty()) throw ConfigError("ring order needs at least one node");
    std::vector<NodeId> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("duplicate node ids");
    Rng rng = make_rng(seed, Stream::ring_order);
    seeded_shuffle(sorted.begin(), sorted.end(), rng);
    return RingOrder(std::move(sorted));
}

StoredModels::StoredModels(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("stored-model capacity must be positive");
}

void StoredModels::insert(StoredModel m) {
    entries_.push_front(std::move(m));
    while (entries_.size() > capacity_) entries_.pop_back();
}

const StoredModel& StoredModels::newest() const {
    if (entries_.empty()) throw ProtocolError("no stored models");
    return entries_.front();
}

Selection select_by_loss(std::span<const ModelVector* const> newest_first, const LossTask& task,
                         std::span<const SampleRef> eval_batch) {
    if (newest_first.empty()) throw ProtocolError("nothing to select from");
    Selection sel;
    sel.loss = std::numeric_limits<double>::infinity();
    sel.any_finite = false;
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < newest_first.size(); ++i) {
        const ModelVector& m = *newest_first[i];
        double l = inf;
        if (m.all_finite()) {
            sel.any_finite = true;
            l = evaluate_loss(m, task, eval_batch);
            if (std::isnan(l)) l = inf;
        }
        sel.losses.push_back(l);
        if (l < sel.loss) {
            sel.loss = l;
            sel.index = i;
        }
    }
    return sel;
}

BasilChoice basil_select(const StoredModels& stored, const LossTask& task, std::span<const SampleRef> eval_batch) {
    if (stored.empty()) throw ProtocolError("basil_select on an empty store");
    std::vector<const ModelVector*> models;
    for (const auto& e : stored.entries()) models.push_back(e.model.get());
    BasilChoice out;
    out.detail = select_by_loss(models, task, eval_batch);
    out.chosen = stored.at(out.detail.index);
    return out;
}

// ---- simulator ----

RingSimulator::RingSimulator(RingConfig config, RingOrder order, std::shared_ptr<const LossTask> task,
                             const Dataset& train, const Dataset* test, RingOptions options, const ModelVector& x0)
    : config_(std::move(config)), order_(std::move(order)), task_(std::move(task)), train_(train),
      options_(options) {
    config_.validate();
    if (order_.size() != config_.N) throw ConfigError("ring order size does not match N");
    for (auto id : config_.byzantine)
        if (!order_.contains(id)) throw ConfigError("byzantine node " + std::to_string(id) + " is not on the ring");
    if (!task_) throw ConfigError("ring simulator needs a task");
    if (x0.shape() != task_->shape()) throw ConfigError("initial model shape does not match the task");
    if (options_.batch_size == 0) throw ConfigError("batch size must be positive");
    if (options_.test_every == 0) options_.test_every = 1;
    if (test && test->size() > 0) test_batch_ = test->head(options_.test_subset);

    auto start = std::make_shared<const ModelVector>(x0);
    nodes_.reserve(order_.size());
    for (NodeId id : order_.nodes()) {
        Node n;
        n.id = id;
        n.byzantine = config_.is_byzantine(id);
        n.store = StoredModels(config_.storage_depth());
        StoredModel init{0, 0, 0, false, start};
        n.store.insert(init);
        n.latest = init;
        n.batch_rng = make_rng(config_.seed, Stream::batches, id);
        n.attack_rng = make_rng(config_.seed, Stream::attack, id);
        n.pool = train_.node_samples(id);
        if (n.pool.empty()) throw ConfigError("node " + std::to_string(id) + " has no local data");
        nodes_.push_back(std::move(n));
    }
    history_.scheme = options_.filtering ? "basil" : "r-plain";
}

RingSimulator::Node& RingSimulator::node(NodeId id) { return nodes_[order_.position(id)]; }
const RingSimulator::Node& RingSimulator::node(NodeId id) const { return nodes_[order_.position(id)]; }

const StoredModels& RingSimulator::stored(NodeId id) const { return node(id).store; }
const StoredModel& RingSimulator::latest(NodeId id) const { return node(id).latest; }
bool RingSimulator::active(NodeId id) const { return node(id).active; }

Batch RingSimulator::draw_batch(Node& n) {
    auto& pool = n.pool;
    std::size_t take = std::min(options_.batch_size, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        auto j = i + uniform_index(n.batch_rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    return train_.batch(std::span<const std::size_t>(pool.data(), take));
}

ModelVector RingSimulator::local_update(Node& n, const ModelVector& start, const Batch& eval_batch, double lr) {
    if (options_.local_epochs == 0) return sgd_step(start, *task_, eval_batch, lr);
    ModelVector x = start;
    auto& pool = n.pool;
    for (std::size_t e = 0; e < options_.local_epochs; ++e) {
        seeded_shuffle(pool.begin(), pool.end(), n.batch_rng);
        for (std::size_t off = 0; off < pool.size(); off += options_.batch_size) {
            std::size_t len = std::min(options_.batch_size, pool.size() - off);
            Batch b = train_.batch(std::span<const std::size_t>(pool.data() + off, len));
            x = sgd_step(x, *task_, b, lr);
        }
    }
    return x;
}

void RingSimulator::multicast(Node& n, const StoredModel& m) {
    std::size_t width = std::min(config_.multicast_width(), order_.size() - 1);
    auto& cost = history_.costs[n.id];
    for (std::size_t k = 1; k <= width; ++k) {
        Node& to = node(order_.successor(n.id, k));
        if (!to.active) continue;
        to.store.insert(m);
        ++cost.models_sent;
    }
    n.latest = m;
}

void RingSimulator::activate(Node& n, const RoundContext& ctx) {
    if (!n.active) return;
    auto& cost = history_.costs[n.id];
    ++cost.activations;
    cost.max_stored = std::max<std::uint64_t>(cost.max_stored, n.store.size());

    Batch batch = draw_batch(n);
    const AttackSpec& attack = options_.attack;
    bool live = n.byzantine && attack.active(ctx.round_index);

    StoredModel chosen;
    Selection sel;
    std::shared_ptr<const ModelVector> honest;
    if (!live || attack.needs_honest_update(ctx.round_index)) {
        if (options_.filtering) {
            auto choice = basil_select(n.store, *task_, batch);
            cost.models_evaluated += n.store.size();
            chosen = choice.chosen;
            sel = std::move(choice.detail);
        } else {
            chosen = n.store.newest();
        }
        if (!chosen.model->all_finite()) {
            history_.events.push_back({ctx.record_round, n.id, "protocol-failure",
                                       "every stored model is non-finite"});
            if (!n.byzantine) {
                TrainRecord rec;
                rec.round = ctx.record_round;
                rec.inner = ctx.inner;
                rec.node = n.id;
                rec.group = options_.group;
                rec.selected_sender = chosen.sender;
                rec.selected_malicious = chosen.malicious;
                rec.benign_in_store = false;
                rec.train_loss = std::numeric_limits<double>::infinity();
                rec.test_acc = std::numeric_limits<double>::quiet_NaN();
                history_.records.push_back(std::move(rec));
            }
            return;
        }
        honest = std::make_shared<const ModelVector>(local_update(n, *chosen.model, batch, ctx.lr));
    }

    StoredModel out;
    out.sender = n.id;
    out.round = ctx.record_round;
    out.seq = ++seq_;
    out.malicious = live;
    if (!live) {
        out.model = honest;
    } else {
        switch (attack.kind) {
            case AttackKind::gaussian:
                out.model = std::make_shared<const ModelVector>(gaussian_attack(task_->shape(), n.attack_rng));
                break;
            case AttackKind::sign_flip:
                out.model = std::make_shared<const ModelVector>(sign_flip_attack(*honest, n.attack_rng));
                break;
            case AttackKind::inverse:
                out.model = std::make_shared<const ModelVector>(inverse_attack(*honest, *chosen.model));
                break;
            case AttackKind::hidden: {
                std::vector<const ModelVector*> benign;
                for (const auto& m : nodes_)
                    if (!m.byzantine) benign.push_back(m.latest.model.get());
                if (benign.empty()) benign.push_back(n.latest.model.get());
                out.model = std::make_shared<const ModelVector>(hidden_attack(benign));
                break;
            }
            case AttackKind::none:
                out.model = honest;
                break;
        }
    }

    if (!n.byzantine) {
        TrainRecord rec;
        rec.round = ctx.record_round;
        rec.inner = ctx.inner;
        rec.node = n.id;
        rec.group = options_.group;
        rec.selected_sender = chosen.sender;
        rec.selected_malicious = chosen.malicious;
        rec.benign_in_store = false;
        for (const auto& e : n.store.entries()) {
            rec.stored_senders.push_back(e.sender);
            if (e.sender == 0 || !config_.is_byzantine(e.sender)) rec.benign_in_store = true;
        }
        rec.losses = std::move(sel.losses);
        rec.train_loss = evaluate_loss(*out.model, *task_, batch);
        rec.test_acc = std::numeric_limits<double>::quiet_NaN();
        if (ctx.evaluate_test && !test_batch_.empty() && task_->kind() != TaskKind::quadratic_convex)
            rec.test_acc = accuracy(*out.model, *task_, test_batch_);
        history_.records.push_back(std::move(rec));
    }
    multicast(n, out);
}

void RingSimulator::run_round(const RoundContext& ctx) {
    for (auto& n : nodes_) activate(n, ctx);
    ++rounds_done_;
}

void RingSimulator::run(std::size_t rounds) {
    for (std::size_t k = 0; k < rounds; ++k) {
        RoundContext ctx;
        ctx.round_index = rounds_done_;
        ctx.record_round = rounds_done_ + 1;
        ctx.lr = options_.lr.at(rounds_done_);
        ctx.evaluate_test = (k + 1) % options_.test_every == 0 || k + 1 == rounds;
        run_round(ctx);
    }
}

void RingSimulator::drop(NodeId id) {
    if (!order_.contains(id)) throw ConfigError("node " + std::to_string(id) + " is not on the ring");
    Node& n = node(id);
    if (!n.active) throw ProtocolError("node " + std::to_string(id) + " already dropped");
    std::size_t down = 0;
    for (const auto& m : nodes_) down += m.active ? 0 : 1;
    if (down + 1 > config_.d) throw ConfigError("more dropouts than the configured d");
    n.active = false;
    n.dropped = true;
    history_.events.push_back({rounds_done_, id, "drop", ""});
}

void RingSimulator::rejoin(NodeId id) {
    if (!order_.contains(id)) throw ConfigError("node " + std::to_string(id) + " never joined the ring");
    Node& n = node(id);
    if (!n.dropped) throw ProtocolError("node " + std::to_string(id) + " was not dropped");
    std::size_t want = config_.b + config_.d + 1;
    std::vector<StoredModel> offers;
    for (std::size_t k = 1; k < order_.size() && offers.size() < want; ++k) {
        const Node& from = node(order_.predecessor(id, k));
        if (from.active) offers.push_back(from.latest);
    }
    std::stable_sort(offers.begin(), offers.end(),
                     [](const StoredModel& a, const StoredModel& b) { return a.seq < b.seq; });
    n.store.clear();
    // Oldest first so the store ends newest-first; capacity keeps the newest b+1.
    for (auto& m : offers) n.store.insert(m);
    n.active = true;
    n.dropped = false;
    history_.events.push_back({rounds_done_, id, "rejoin", std::to_string(offers.size()) + " models offered"});
}

void RingSimulator::reset_stores(const std::vector<std::pair<NodeId, std::shared_ptr<const ModelVector>>>& start) {
    for (const auto& [id, model] : start) {
        Node& n = node(id);
        StoredModel m{0, rounds_done_, 0, false, model};
        n.store.clear();
        n.store.insert(m);
        n.latest = m;
    }
}

TrainHistory run_basil(const RingConfig& config, std::shared_ptr<const LossTask> task, const Dataset& train,
                       const Dataset* test, std::size_t rounds, const RingOptions& options, const ModelVector& x0) {
    auto ids = node_range(config.N);
    RingSimulator sim(config, agree_order(ids, config.seed), std::move(task), train, test, options, x0);
    sim.run(rounds);
    return std::move(sim.history());
}

void rejoin_node(RingSimulator& sim, NodeId id) { sim.rejoin(id); }

}  // namespace basil
