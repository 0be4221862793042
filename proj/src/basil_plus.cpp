#include "basil/basil_plus.hpp"

#include <algorithm>
#include <future>
#include <limits>

#include "basil/errors.hpp"
#include "basil/random.hpp"

namespace basil {

std::vector<GroupState> cluster_nodes(std::span<const NodeId> ids, std::size_t G, std::size_t S, std::uint64_t seed) {
    if (G == 0 || ids.empty() || ids.size() % G != 0) throw ConfigError("group count G must divide N");
    std::size_t n = ids.size() / G;
    if (S == 0 || (n > 1 && S > n - 1) || (n == 1 && S > 1)) throw ConfigError("S must lie in [1, n-1]");
    std::vector<NodeId> shuffled(ids.begin(), ids.end());
    std::sort(shuffled.begin(), shuffled.end());
    if (std::adjacent_find(shuffled.begin(), shuffled.end()) != shuffled.end()) throw ConfigError("duplicate node ids");
    // One group keeps the plain ring order so G=1 matches the single-ring protocol.
    if (G > 1) {
        Rng rng = make_rng(seed, Stream::grouping);
        seeded_shuffle(shuffled.begin(), shuffled.end(), rng);
    }
    std::vector<GroupState> out(G);
    for (std::size_t g = 0; g < G; ++g) {
        std::vector<NodeId> members(shuffled.begin() + static_cast<std::ptrdiff_t>(g * n),
                                    shuffled.begin() + static_cast<std::ptrdiff_t>((g + 1) * n));
        auto& gs = out[g];
        gs.id = g;
        gs.members = agree_order(members, seed).nodes();
        gs.head.assign(gs.members.begin(), gs.members.begin() + static_cast<std::ptrdiff_t>(S));
        gs.tail.assign(gs.members.end() - static_cast<std::ptrdiff_t>(S), gs.members.end());
    }
    return out;
}

bool AggregationContext::is_byzantine(NodeId id) const {
    return std::find(byzantine.begin(), byzantine.end(), id) != byzantine.end();
}

namespace {

enum Stage : std::uint64_t { circular = 0, to_first_tails = 1, to_heads = 2 };

Batch aggregation_batch(const AggregationContext& ctx, NodeId node, Stage stage) {
    std::vector<std::size_t> pool = ctx.train.node_samples(node);
    if (pool.empty()) throw ConfigError("node " + std::to_string(node) + " has no local data");
    Rng rng = make_rng(ctx.seed, Stream::aggregation, node, ctx.round_index * 3 + stage);
    std::size_t take = std::min(ctx.batch_size, pool.size());
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    return ctx.train.batch(std::span<const std::size_t>(pool.data(), take));
}

struct Candidate {
    NodeId sender;
    ModelPtr model;
    bool malicious;
};

struct Pick {
    std::size_t index = 0;
    Selection detail;
};

Pick pick(const AggregationContext& ctx, NodeId node, Stage stage, const std::vector<Candidate>& cands) {
    std::vector<const ModelVector*> models;
    for (const auto& c : cands) models.push_back(c.model.get());
    Batch batch = aggregation_batch(ctx, node, stage);
    Pick p;
    p.detail = select_by_loss(models, ctx.task, batch);
    p.index = p.detail.index;
    return p;
}

void record(std::vector<AuditEntry>& audit, const AggregationContext& ctx, const char* stage, NodeId node, int group,
            const std::vector<Candidate>& cands, const Pick& p) {
    AuditEntry a;
    a.round = ctx.record_round;
    a.stage = stage;
    a.node = node;
    a.group = group;
    a.selected_sender = cands[p.index].sender;
    a.selected_malicious = cands[p.index].malicious;
    a.selected_loss = p.detail.loss;
    a.min_loss = *std::min_element(p.detail.losses.begin(), p.detail.losses.end());
    for (const auto& c : cands) a.candidates.push_back(c.sender);
    audit.push_back(std::move(a));
}

// What a Byzantine node sends in place of `honest`.
ModelPtr byzantine_output(const AggregationContext& ctx, NodeId node, Stage stage, const ModelPtr& honest,
                          const ModelPtr& prior, const std::vector<const ModelVector*>& benign, bool& malicious) {
    malicious = false;
    if (!ctx.attack.active(ctx.round_index)) return honest;
    Rng rng = make_rng(ctx.seed, Stream::attack, node, (ctx.round_index + 1) * 4 + stage);
    malicious = true;
    switch (ctx.attack.kind) {
        case AttackKind::gaussian: return std::make_shared<const ModelVector>(gaussian_attack(ctx.task.shape(), rng));
        case AttackKind::sign_flip: return std::make_shared<const ModelVector>(sign_flip_attack(*honest, rng));
        case AttackKind::inverse: return std::make_shared<const ModelVector>(inverse_attack(*honest, *prior));
        case AttackKind::hidden:
            if (benign.empty()) break;
            return std::make_shared<const ModelVector>(hidden_attack(benign));
        case AttackKind::none: break;
    }
    malicious = false;
    return honest;
}

std::vector<const ModelVector*> benign_of(const AggregationContext& ctx, const std::vector<Candidate>& cands) {
    std::vector<const ModelVector*> out;
    for (const auto& c : cands)
        if (!c.malicious && !ctx.is_byzantine(c.sender)) out.push_back(c.model.get());
    return out;
}

ModelPtr running_average(const ModelVector& x, const ModelVector& zbar, double g) {
    ModelVector z = x;
    z.axpy(g, zbar);
    for (double& v : z.params()) v /= (g + 1.0);
    return std::make_shared<const ModelVector>(std::move(z));
}

// z of the first group's tails is their own model.
void seed_first_group(GroupState& first, const AggregationContext& ctx) {
    first.aggregate.clear();
    first.malicious.clear();
    std::vector<Candidate> own;
    for (NodeId i : first.tail) own.push_back({i, first.models.at(i), false});
    auto benign = benign_of(ctx, own);
    for (NodeId i : first.tail) {
        ModelPtr x = first.models.at(i);
        if (ctx.is_byzantine(i)) {
            bool bad = false;
            first.aggregate[i] = byzantine_output(ctx, i, circular, x, x, benign, bad);
            if (bad) first.malicious.insert(i);
        } else {
            first.aggregate[i] = x;
        }
    }
}

std::vector<Candidate> tail_candidates(const GroupState& gs) {
    std::vector<Candidate> out;
    for (NodeId i : gs.tail) out.push_back({i, gs.aggregate.at(i), gs.malicious.count(i) > 0});
    return out;
}

}  // namespace

void circular_aggregate(std::vector<GroupState>& groups, const AggregationContext& ctx,
                        std::vector<AuditEntry>& audit) {
    if (groups.empty()) return;
    seed_first_group(groups.front(), ctx);
    for (std::size_t g = 1; g < groups.size(); ++g) {
        auto cands = tail_candidates(groups[g - 1]);
        auto benign = benign_of(ctx, cands);
        GroupState& dst = groups[g];
        dst.aggregate.clear();
        dst.malicious.clear();
        for (NodeId i : dst.tail) {
            Pick p = pick(ctx, i, circular, cands);
            ModelPtr x = dst.models.at(i);
            ModelPtr honest = running_average(*x, *cands[p.index].model, static_cast<double>(g));
            if (ctx.is_byzantine(i)) {
                bool bad = false;
                dst.aggregate[i] = byzantine_output(ctx, i, circular, honest, x, benign, bad);
                if (bad) dst.malicious.insert(i);
            } else {
                record(audit, ctx, "circular", i, static_cast<int>(g), cands, p);
                dst.aggregate[i] = honest;
            }
        }
    }
}

void robust_multicast(std::vector<GroupState>& groups, const AggregationContext& ctx,
                      std::vector<AuditEntry>& audit) {
    if (groups.empty()) return;
    if (groups.back().aggregate.empty()) seed_first_group(groups.front(), ctx);
    auto last = tail_candidates(groups.back());
    auto benign_last = benign_of(ctx, last);

    std::vector<Candidate> relayed;
    GroupState& first = groups.front();
    for (NodeId i : first.tail) {
        Pick p = pick(ctx, i, to_first_tails, last);
        const Candidate& c = last[p.index];
        if (ctx.is_byzantine(i)) {
            bool bad = false;
            ModelPtr out = byzantine_output(ctx, i, to_first_tails, c.model, first.models.at(i), benign_last, bad);
            relayed.push_back({i, out, bad || c.malicious});
        } else {
            record(audit, ctx, "multicast-tails", i, 0, last, p);
            relayed.push_back({i, c.model, c.malicious});
        }
    }

    for (auto& gs : groups)
        for (NodeId v : gs.head) {
            if (ctx.is_byzantine(v)) continue;
            Pick p = pick(ctx, v, to_heads, relayed);
            record(audit, ctx, "multicast-heads", v, static_cast<int>(gs.id), relayed, p);
            gs.models[v] = relayed[p.index].model;
        }
}

void r_plain_plus_aggregate(std::vector<GroupState>& groups) {
    if (groups.empty()) return;
    std::vector<const ModelVector*> lasts;
    for (const auto& gs : groups) lasts.push_back(gs.models.at(gs.members.back()).get());
    auto avg = std::make_shared<const ModelVector>(mean(lasts));
    for (auto& gs : groups) gs.models[gs.members.front()] = avg;
}

std::size_t BasilPlusConfig::effective_S() const {
    if (S != 0) return S;
    std::size_t n = group_size();
    return std::min(n > 0 ? n - 1 : 0, b + 1);
}

void BasilPlusConfig::validate() const {
    if (N == 0 || G == 0 || N % G != 0) throw ConfigError("group count G must divide N");
    if (group_size() < 2) throw ConfigError("groups need at least two members");
    if (b >= N) throw ConfigError("b must be smaller than N");
    if (byzantine.size() > b) throw ConfigError("byzantine set larger than b");
    std::size_t s = effective_S();
    if (s == 0 || s > group_size() - 1) throw ConfigError("S must lie in [1, n-1]");
}

TrainHistory run_grouped(const BasilPlusConfig& config, std::shared_ptr<const LossTask> task, const Dataset& train,
                         const Dataset* test, std::size_t rounds, const ModelVector& x0, bool robust) {
    config.validate();
    if (!task) throw ConfigError("Basil+ needs a task");
    std::size_t S = robust ? config.effective_S() : 1;
    auto ids = node_range(config.N);
    auto groups = cluster_nodes(ids, config.G, S, config.seed);
    auto start = std::make_shared<const ModelVector>(x0);

    std::vector<std::unique_ptr<RingSimulator>> sims;
    for (auto& gs : groups) {
        RingConfig rc;
        rc.N = gs.members.size();
        rc.S = S;
        rc.seed = config.seed;
        for (NodeId id : gs.members) {
            gs.models[id] = start;
            if (std::find(config.byzantine.begin(), config.byzantine.end(), id) != config.byzantine.end())
                rc.byzantine.push_back(id);
        }
        rc.b = rc.byzantine.size();
        RingOptions opts = config.ring;
        opts.group = static_cast<int>(gs.id);
        opts.filtering = robust;
        sims.push_back(std::make_unique<RingSimulator>(rc, RingOrder(gs.members), task, train, test, opts, x0));
    }

    TrainHistory out;
    out.scheme = robust ? "basil-plus" : "r-plain-plus";
    std::size_t every = std::max<std::size_t>(1, config.ring.test_every);
    for (std::size_t k = 1; k <= rounds; ++k) {
        double lr = config.ring.lr.at(k - 1);
        bool eval = k % every == 0 || k == rounds;
        auto stage2 = [&](std::size_t g) {
            auto& gs = groups[g];
            std::vector<std::pair<NodeId, ModelPtr>> starts;
            for (NodeId id : gs.members) starts.emplace_back(id, gs.models.at(id));
            sims[g]->reset_stores(starts);
            for (std::size_t t = 1; t <= config.tau; ++t) {
                RoundContext ctx;
                ctx.round_index = k - 1;
                ctx.record_round = k;
                ctx.inner = t;
                ctx.lr = lr;
                ctx.evaluate_test = eval && t == config.tau;
                sims[g]->run_round(ctx);
            }
            for (NodeId id : gs.members) gs.models[id] = sims[g]->latest(id).model;
        };
        if (config.parallel_groups && groups.size() > 1) {
            std::vector<std::future<void>> jobs;
            for (std::size_t g = 0; g < groups.size(); ++g) jobs.push_back(std::async(std::launch::async, stage2, g));
            for (auto& j : jobs) j.get();
        } else {
            for (std::size_t g = 0; g < groups.size(); ++g) stage2(g);
        }

        if (robust) {
            AggregationContext ctx{*task, train, config.ring.batch_size, config.ring.attack, config.byzantine,
                                   config.seed, k - 1, k};
            circular_aggregate(groups, ctx, out.audit);
            robust_multicast(groups, ctx, out.audit);
        } else {
            r_plain_plus_aggregate(groups);
        }
        if (config.observer) config.observer(k, groups);
    }

    for (auto& sim : sims) out.append(sim->history());
    std::stable_sort(out.records.begin(), out.records.end(), [](const TrainRecord& a, const TrainRecord& b) {
        if (a.round != b.round) return a.round < b.round;
        if (a.inner != b.inner) return a.inner < b.inner;
        return a.group < b.group;
    });
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const ProtocolEvent& a, const ProtocolEvent& b) { return a.round < b.round; });
    out.metadata["groups"] = nlohmann::json::array();
    for (const auto& gs : groups) out.metadata["groups"].push_back(gs.members);
    out.metadata["S"] = S;
    return out;
}

TrainHistory run_basil_plus(const BasilPlusConfig& config, std::shared_ptr<const LossTask> task, const Dataset& train,
                            const Dataset* test, std::size_t rounds, const ModelVector& x0) {
    return run_grouped(config, std::move(task), train, test, rounds, x0, true);
}

}  // namespace basil
