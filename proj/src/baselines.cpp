#include "basil/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "basil/errors.hpp"
#include "basil/random.hpp"

namespace basil {

GraphTopology::GraphTopology(std::size_t N) : adj_(N) {}

GraphTopology GraphTopology::complete(std::size_t N) {
    GraphTopology g(N);
    for (NodeId a = 1; a <= N; ++a)
        for (NodeId b = a + 1; b <= N; ++b) g.add_edge(a, b);
    return g;
}

GraphTopology GraphTopology::from_edges(std::size_t N, const std::vector<std::pair<NodeId, NodeId>>& edges) {
    GraphTopology g(N);
    for (auto [a, b] : edges) g.add_edge(a, b);
    return g;
}

void GraphTopology::add_edge(NodeId a, NodeId b) {
    if (a == 0 || b == 0 || a > adj_.size() || b > adj_.size()) throw ConfigError("edge endpoint out of range");
    if (a == b) throw ConfigError("self-loops are not allowed");
    if (has_edge(a, b)) return;
    auto put = [](std::vector<NodeId>& v, NodeId x) { v.insert(std::upper_bound(v.begin(), v.end(), x), x); };
    put(adj_[a - 1], b);
    put(adj_[b - 1], a);
}

bool GraphTopology::has_edge(NodeId a, NodeId b) const {
    if (a == 0 || a > adj_.size()) return false;
    const auto& v = adj_[a - 1];
    return std::binary_search(v.begin(), v.end(), b);
}

const std::vector<NodeId>& GraphTopology::neighbors(NodeId id) const {
    if (id == 0 || id > adj_.size()) throw ConfigError("node " + std::to_string(id) + " is not in the graph");
    return adj_[id - 1];
}

std::vector<std::pair<NodeId, NodeId>> GraphTopology::edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (NodeId a = 1; a <= adj_.size(); ++a)
        for (NodeId b : adj_[a - 1])
            if (a < b) out.emplace_back(a, b);
    return out;
}

std::string GraphTopology::edge_list() const {
    std::ostringstream os;
    for (auto [a, b] : edges()) os << a << ' ' << b << '\n';
    return os.str();
}

bool GraphTopology::connected_among(std::span<const NodeId> subset) const {
    if (subset.empty()) return true;
    std::vector<char> in(adj_.size() + 1, 0), seen(adj_.size() + 1, 0);
    for (NodeId v : subset) in[v] = 1;
    std::vector<NodeId> stack{subset.front()};
    seen[subset.front()] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : adj_[v - 1])
            if (in[w] && !seen[w]) {
                seen[w] = 1;
                ++reached;
                stack.push_back(w);
            }
    }
    return reached == subset.size();
}

GraphTopology generate_graph(std::size_t N, std::span<const NodeId> byzantine, double p_benign, double p_byzantine,
                             std::uint64_t seed, std::size_t max_attempts) {
    if (p_benign < 0 || p_benign > 1 || p_byzantine < 0 || p_byzantine > 1)
        throw ConfigError("edge probabilities must lie in [0,1]");
    std::vector<char> byz(N + 1, 0);
    for (NodeId v : byzantine) {
        if (v == 0 || v > N) throw ConfigError("byzantine id out of range");
        byz[v] = 1;
    }
    std::vector<NodeId> benign;
    for (NodeId v = 1; v <= N; ++v)
        if (!byz[v]) benign.push_back(v);
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        Rng rng = make_rng(seed, Stream::graph, attempt);
        GraphTopology g(N);
        for (NodeId a = 1; a <= N; ++a)
            for (NodeId b = a + 1; b <= N; ++b) {
                double p = (byz[a] || byz[b]) ? p_byzantine : p_benign;
                if (uniform01(rng) < p) g.add_edge(a, b);
            }
        if (g.connected_among(benign)) {
            g.p_benign = p_benign;
            g.p_byzantine = p_byzantine;
            g.seed = seed;
            g.attempts = attempt + 1;
            return g;
        }
    }
    throw ConfigError("no graph with a connected benign subgraph after " + std::to_string(max_attempts) + " attempts");
}

UbarChoice ubar_aggregate(const ModelVector& own, std::span<const ModelVector* const> neighbours,
                          const LossTask& task, std::span<const SampleRef> batch, double rho) {
    if (neighbours.empty()) throw ConfigError("UBAR needs a nonempty neighbourhood");
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("UBAR rho must lie in (0,1]");
    UbarChoice c;
    std::vector<std::pair<double, std::size_t>> by_dist;
    for (std::size_t j = 0; j < neighbours.size(); ++j) {
        double d = neighbours[j]->all_finite() ? distance(own, *neighbours[j]) : std::numeric_limits<double>::infinity();
        if (std::isnan(d)) d = std::numeric_limits<double>::infinity();
        by_dist.emplace_back(d, j);
    }
    std::stable_sort(by_dist.begin(), by_dist.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    auto keep = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(neighbours.size()) - 1e-9));
    keep = std::clamp<std::size_t>(keep, 1, neighbours.size());
    for (std::size_t k = 0; k < keep; ++k) c.stage1.push_back(by_dist[k].second);

    double own_loss = evaluate_loss(own, task, batch);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = c.stage1.front();
    for (std::size_t j : c.stage1) {
        double l = std::numeric_limits<double>::infinity();
        if (neighbours[j]->all_finite()) {
            l = evaluate_loss(*neighbours[j], task, batch);
            if (std::isnan(l)) l = std::numeric_limits<double>::infinity();
        }
        if (l <= own_loss) c.stage2.push_back(j);
        if (l < best) {
            best = l;
            best_j = j;
        }
    }
    if (c.stage2.empty()) {
        c.fallback = true;
        c.aggregate = *neighbours[best_j];
        c.stage2.push_back(best_j);
    } else {
        std::vector<const ModelVector*> kept;
        for (std::size_t j : c.stage2) kept.push_back(neighbours[j]);
        c.aggregate = mean(kept);
    }
    return c;
}

GraphSimulator::GraphSimulator(GraphScheme scheme, GraphTopology graph, std::vector<NodeId> byzantine,
                               std::shared_ptr<const LossTask> task, const Dataset& train, const Dataset* test,
                               GraphOptions options, const ModelVector& x0, std::uint64_t seed)
    : scheme_(scheme), graph_(std::move(graph)), byzantine_(std::move(byzantine)), task_(std::move(task)),
      train_(train), options_(options), seed_(seed) {
    std::size_t N = graph_.size();
    if (N == 0) throw ConfigError("graph has no nodes");
    if (!task_) throw ConfigError("graph simulator needs a task");
    if (x0.shape() != task_->shape()) throw ConfigError("initial model shape does not match the task");
    if (options_.batch_size == 0) throw ConfigError("batch size must be positive");
    if (options_.test_every == 0) options_.test_every = 1;
    std::sort(byzantine_.begin(), byzantine_.end());
    for (NodeId v : byzantine_)
        if (v == 0 || v > N) throw ConfigError("byzantine id out of range");
    if (test && test->size() > 0) test_batch_ = test->head(options_.test_subset);
    auto start = std::make_shared<const ModelVector>(x0);
    models_.assign(N, start);
    malicious_.assign(N, 0);
    for (NodeId id = 1; id <= N; ++id) {
        batch_rngs_.push_back(make_rng(seed_, Stream::batches, id));
        attack_rngs_.push_back(make_rng(seed_, Stream::attack, id));
        pools_.push_back(train_.node_samples(id));
        if (pools_.back().empty()) throw ConfigError("node " + std::to_string(id) + " has no local data");
    }
    history_.scheme = scheme_ == GraphScheme::ubar ? "ubar" : "g-plain";
}

bool GraphSimulator::is_byzantine(NodeId id) const {
    return std::binary_search(byzantine_.begin(), byzantine_.end(), id);
}

Batch GraphSimulator::draw_batch(NodeId id) {
    auto& pool = pools_[id - 1];
    auto& rng = batch_rngs_[id - 1];
    std::size_t take = std::min(options_.batch_size, pool.size());
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    return train_.batch(std::span<const std::size_t>(pool.data(), take));
}

ModelVector GraphSimulator::honest_update(NodeId id, const std::vector<std::shared_ptr<const ModelVector>>& sent,
                                          const Batch& batch, double lr, const RoundContext& ctx, bool audit) {
    const auto& nbrs = graph_.neighbors(id);
    const ModelVector& own = *models_[id - 1];
    if (scheme_ == GraphScheme::g_plain) {
        std::vector<const ModelVector*> ptrs{&own};
        for (NodeId j : nbrs) ptrs.push_back(sent[j - 1].get());
        return sgd_step(mean(ptrs), *task_, batch, lr);
    }
    if (nbrs.empty()) return sgd_step(own, *task_, batch, lr);
    std::vector<const ModelVector*> ptrs;
    for (NodeId j : nbrs) ptrs.push_back(sent[j - 1].get());
    UbarChoice c = ubar_aggregate(own, ptrs, *task_, batch, options_.ubar_rho);
    if (audit) {
        AuditEntry a;
        a.round = ctx.record_round;
        a.stage = c.fallback ? "ubar-fallback" : "ubar";
        a.node = id;
        for (auto j : c.stage1) a.candidates.push_back(nbrs[j]);
        for (auto j : c.stage2) {
            a.kept.push_back(nbrs[j]);
            if (malicious_[nbrs[j] - 1]) a.selected_malicious = true;
        }
        if (c.fallback) a.selected_sender = nbrs[c.stage2.front()];
        history_.audit.push_back(std::move(a));
    }
    ModelVector g = gradient(own, *task_, batch);
    ModelVector x = options_.ubar_alpha * own;
    x.axpy(1.0 - options_.ubar_alpha, c.aggregate);
    x.axpy(-lr, g);
    return x;
}

void GraphSimulator::run_round(const RoundContext& ctx) {
    std::size_t N = graph_.size();
    std::vector<Batch> batches;
    batches.reserve(N);
    for (NodeId id = 1; id <= N; ++id) batches.push_back(draw_batch(id));

    std::vector<std::shared_ptr<const ModelVector>> sent = models_, next = models_;
    std::fill(malicious_.begin(), malicious_.end(), 0);
    const AttackSpec& attack = options_.attack;
    bool live = attack.active(ctx.round_index);
    std::vector<const ModelVector*> benign_now;
    for (NodeId id = 1; id <= N; ++id)
        if (!is_byzantine(id)) benign_now.push_back(models_[id - 1].get());

    for (NodeId id : byzantine_) {
        std::shared_ptr<const ModelVector> honest;
        if (attack.needs_honest_update(ctx.round_index))
            honest = std::make_shared<const ModelVector>(
                honest_update(id, models_, batches[id - 1], ctx.lr, ctx, false));
        std::shared_ptr<const ModelVector> out = honest;
        if (live) {
            auto& rng = attack_rngs_[id - 1];
            switch (attack.kind) {
                case AttackKind::gaussian:
                    out = std::make_shared<const ModelVector>(gaussian_attack(task_->shape(), rng));
                    break;
                case AttackKind::sign_flip:
                    out = std::make_shared<const ModelVector>(sign_flip_attack(*honest, rng));
                    break;
                case AttackKind::inverse:
                    out = std::make_shared<const ModelVector>(inverse_attack(*honest, *models_[id - 1]));
                    break;
                case AttackKind::hidden:
                    if (!benign_now.empty()) out = std::make_shared<const ModelVector>(hidden_attack(benign_now));
                    break;
                case AttackKind::none: break;
            }
            malicious_[id - 1] = attack.kind != AttackKind::none ? 1 : 0;
        }
        sent[id - 1] = out;
        next[id - 1] = honest ? honest : out;
    }

    for (NodeId id = 1; id <= N; ++id) {
        if (is_byzantine(id)) continue;
        const Batch& batch = batches[id - 1];
        auto x = std::make_shared<const ModelVector>(honest_update(id, sent, batch, ctx.lr, ctx, true));
        TrainRecord rec;
        rec.round = ctx.record_round;
        rec.node = id;
        rec.train_loss = evaluate_loss(*x, *task_, batch);
        rec.test_acc = std::numeric_limits<double>::quiet_NaN();
        if (ctx.evaluate_test && !test_batch_.empty() && task_->kind() != TaskKind::quadratic_convex)
            rec.test_acc = accuracy(*x, *task_, test_batch_);
        history_.records.push_back(std::move(rec));
        next[id - 1] = std::move(x);
    }
    models_ = std::move(next);
    ++rounds_done_;
}

void GraphSimulator::run(std::size_t rounds) {
    for (std::size_t k = 0; k < rounds; ++k) {
        RoundContext ctx;
        ctx.round_index = rounds_done_;
        ctx.record_round = rounds_done_ + 1;
        ctx.lr = options_.lr.at(rounds_done_);
        ctx.evaluate_test = (k + 1) % options_.test_every == 0 || k + 1 == rounds;
        run_round(ctx);
    }
}

TrainHistory run_r_plain(RingConfig config, std::shared_ptr<const LossTask> task, const Dataset& train,
                         const Dataset* test, std::size_t rounds, RingOptions options, const ModelVector& x0) {
    config.S = 1;
    config.d = 0;
    options.filtering = false;
    auto ids = node_range(config.N);
    RingSimulator sim(config, agree_order(ids, config.seed), std::move(task), train, test, options, x0);
    sim.run(rounds);
    return std::move(sim.history());
}

TrainHistory run_g_plain(const GraphTopology& graph, std::vector<NodeId> byzantine,
                         std::shared_ptr<const LossTask> task, const Dataset& train, const Dataset* test,
                         std::size_t rounds, const GraphOptions& options, const ModelVector& x0, std::uint64_t seed) {
    GraphSimulator sim(GraphScheme::g_plain, graph, std::move(byzantine), std::move(task), train, test, options, x0,
                       seed);
    sim.run(rounds);
    return std::move(sim.history());
}

TrainHistory run_ubar(const GraphTopology& graph, std::vector<NodeId> byzantine, std::shared_ptr<const LossTask> task,
                      const Dataset& train, const Dataset* test, std::size_t rounds, const GraphOptions& options,
                      const ModelVector& x0, std::uint64_t seed) {
    GraphSimulator sim(GraphScheme::ubar, graph, std::move(byzantine), std::move(task), train, test, options, x0,
                       seed);
    sim.run(rounds);
    return std::move(sim.history());
}

TrainHistory run_r_plain_plus(BasilPlusConfig config, std::shared_ptr<const LossTask> task, const Dataset& train,
                              const Dataset* test, std::size_t rounds, const ModelVector& x0) {
    config.S = 1;
    return run_grouped(config, std::move(task), train, test, rounds, x0, false);
}

}  // namespace basil
