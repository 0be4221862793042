#include "basil/acds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "basil/errors.hpp"
#include "basil/random.hpp"
#include "basil/ring_protocol.hpp"

namespace basil {

std::size_t AcdsPlan::group_of(NodeId id) const {
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (std::find(groups[g].begin(), groups[g].end(), id) != groups[g].end()) return g;
    throw PreconditionError("node " + std::to_string(id) + " is not in any group");
}

std::size_t AcdsPlan::position_of(NodeId id) const {
    const auto& grp = groups[group_of(id)];
    return static_cast<std::size_t>(std::find(grp.begin(), grp.end(), id) - grp.begin()) + 1;
}

AcdsPlan plan_acds(std::span<const NodeId> ids, const Dataset& data, const AcdsParams& params) {
    if (ids.empty()) throw ConfigError("ACDS needs nodes");
    if (params.groups == 0 || ids.size() % params.groups != 0)
        throw ConfigError("group count G must divide N");
    if (!(params.alpha > 0.0 && params.alpha < 1.0)) throw ConfigError("ACDS alpha must lie in (0,1)");
    if (params.batches == 0) throw ConfigError("ACDS needs H >= 1");

    AcdsPlan plan;
    plan.G = params.groups;
    plan.n = ids.size() / params.groups;
    plan.H = params.batches;
    plan.alpha = params.alpha;
    plan.D = std::numeric_limits<std::size_t>::max();
    for (NodeId id : ids) plan.D = std::min(plan.D, data.node_samples(id).size());
    plan.M = static_cast<std::size_t>(std::floor(params.alpha * static_cast<double>(plan.D) / plan.H + 1e-9));
    if (plan.M == 0) throw ConfigError("alpha*D/H rounds down to an empty batch");
    plan.effective_alpha = static_cast<double>(plan.M * plan.H) / static_cast<double>(plan.D);
    plan.bits_per_sample =
        params.bits_per_sample > 0 ? params.bits_per_sample : 8.0 * static_cast<double>(data.feature_dim());

    std::vector<NodeId> shuffled(ids.begin(), ids.end());
    std::sort(shuffled.begin(), shuffled.end());
    if (std::adjacent_find(shuffled.begin(), shuffled.end()) != shuffled.end())
        throw ConfigError("duplicate node ids");
    Rng rng = make_rng(params.seed, Stream::grouping);
    seeded_shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t g = 0; g < plan.G; ++g) {
        std::vector<NodeId> members(shuffled.begin() + static_cast<std::ptrdiff_t>(g * plan.n),
                                    shuffled.begin() + static_cast<std::ptrdiff_t>((g + 1) * plan.n));
        plan.groups.push_back(agree_order(members, params.seed + g + 1).nodes());
    }

    for (NodeId id : ids) {
        std::vector<std::size_t> open;
        for (auto i : data.node_samples(id))
            if (!data.sensitive(i) && !data.dummy(i)) open.push_back(i);
        if (open.size() < plan.M * plan.H)
            throw ConfigError("node " + std::to_string(id) + " has only " + std::to_string(open.size()) +
                              " non-sensitive samples, ACDS needs " + std::to_string(plan.M * plan.H));
        Rng pick = make_rng(params.seed, Stream::acds_plan, id);
        for (std::size_t i = 0; i < plan.M * plan.H; ++i) std::swap(open[i], open[i + uniform_index(pick, open.size() - i)]);
        auto& out = plan.batches[id];
        for (std::size_t h = 0; h < plan.H; ++h)
            out.emplace_back(open.begin() + static_cast<std::ptrdiff_t>(h * plan.M),
                             open.begin() + static_cast<std::ptrdiff_t>((h + 1) * plan.M));
    }
    return plan;
}

namespace {

struct Item {
    BatchId batch;
    std::size_t sample = 0;
    bool dummy = false;
};

}  // namespace

SharedPool run_acds(const AcdsPlan& plan, const Dataset& data, std::uint64_t shuffle_seed) {
    (void)data;
    SharedPool pool;
    pool.H = plan.H;
    pool.M = plan.M;
    pool.bits_per_sample = plan.bits_per_sample;
    const std::size_t n = plan.n, H = plan.H, M = plan.M;
    const std::size_t dummy_round = H + 1, global_round = H + 2;

    std::map<NodeId, std::set<BatchId>> held;  // real batches each node stores
    for (std::size_t g = 0; g < plan.G; ++g) {
        const auto& grp = plan.groups[g];
        std::vector<std::vector<std::size_t>> sizes(H + 1);
        std::vector<Item> shared;  // DShared
        double slots = 0.0;
        for (std::size_t h = 1; h <= H + 1; ++h) {
            // In the dummy round only nodes 1..n-2 forward; node n-1 is the last recipient.
            std::size_t last = (h == dummy_round) ? (n >= 2 ? n - 1 : 0) : n;
            for (std::size_t p = 1; p <= last; ++p) {
                NodeId self = grp[p - 1];
                if (h >= 2) {
                    std::erase_if(shared, [&](const Item& it) {
                        return !it.dummy && it.batch.owner == self && it.batch.round == h - 1;
                    });
                }
                for (const auto& it : shared) {
                    if (it.dummy) continue;
                    if (held[self].count(it.batch)) continue;
                    std::vector<NodeId> candidates;
                    if (h == 1) {
                        candidates.assign(grp.begin(), grp.begin() + static_cast<std::ptrdiff_t>(p - 1));
                    } else {
                        for (NodeId m : grp)
                            if (m != self) candidates.push_back(m);
                    }
                    pool.received[self].push_back({it.sample, it.batch.owner, it.batch.round, h, candidates});
                }
                for (const auto& it : shared) {
                    if (it.dummy) {
                        ++pool.dummies_seen[self];
                    } else {
                        held[self].insert(it.batch);
                    }
                }
                if (h == dummy_round && p == last) break;  // n-1 only receives
                if (h <= H) {
                    for (auto s : plan.batches.at(self)[h - 1]) shared.push_back({{self, h}, s, false});
                } else {
                    for (std::size_t k = 0; k < M; ++k) shared.push_back({{self, h}, 0, true});
                }
                Rng rng = make_rng(shuffle_seed, Stream::acds_shuffle, self, h);
                seeded_shuffle(shared.begin(), shared.end(), rng);
                std::size_t batches_in_list = shared.size() / M;
                sizes[h - 1].push_back(batches_in_list);
                pool.ledger[self].phase2_items_sent += shared.size();
                slots += static_cast<double>(batches_in_list);
            }
            if (h == H) {
                for (NodeId self : grp) {
                    auto& miss = pool.missing_before_dummy[self];
                    for (NodeId other : grp)
                        if (other != self)
                            for (std::size_t r = 1; r <= H; ++r)
                                if (!held[self].count({other, r})) miss.insert({other, r});
                }
            }
        }
        for (NodeId self : grp) {
            auto& miss = pool.missing_after_dummy[self];
            for (NodeId other : grp)
                if (other != self)
                    for (std::size_t r = 1; r <= H; ++r)
                        if (!held[self].count({other, r})) miss.insert({other, r});
        }
        pool.list_sizes.push_back(std::move(sizes));
        pool.phase2_batch_slots = std::max(pool.phase2_batch_slots, slots);
    }

    // Phase 3: each head multicasts its own and gathered batches to every other group.
    std::vector<std::vector<Item>> gathered_by_group(plan.G);
    for (std::size_t g = 0; g < plan.G; ++g) {
        NodeId head = plan.groups[g].front();
        auto& gathered = gathered_by_group[g];
        for (std::size_t r = 1; r <= H; ++r)
            for (auto s : plan.batches.at(head)[r - 1]) gathered.push_back({{head, r}, s, false});
        for (const auto& pr : pool.received[head]) gathered.push_back({{pr.owner, pr.batch_round}, pr.sample, false});
        pool.ledger[head].phase3_items_multicast += gathered.size();  // sent even when G = 1
    }
    for (std::size_t g = 0; g < plan.G; ++g) {
        const auto& gathered = gathered_by_group[g];
        for (std::size_t o = 0; o < plan.G; ++o) {
            if (o == g) continue;
            for (NodeId dst : plan.groups[o]) {
                for (const auto& it : gathered) {
                    pool.received[dst].push_back(
                        {it.sample, it.batch.owner, it.batch.round, global_round, plan.groups[g]});
                    held[dst].insert(it.batch);
                }
                pool.ledger[dst].phase3_items_received += gathered.size();
            }
        }
    }
    pool.phase3_batch_slots = static_cast<double>((plan.G - 1) * n * H);
    return pool;
}

double SharedPool::communication_bits(NodeId id) const {
    auto it = ledger.find(id);
    if (it == ledger.end()) return 0.0;
    const auto& l = it->second;
    return bits_per_sample *
           static_cast<double>(l.phase2_items_sent + l.phase3_items_multicast + l.phase3_items_received);
}

double SharedPool::communication_time(double rate) const {
    if (!(rate > 0.0)) throw ConfigError("transmission rate must be positive");
    return (phase2_batch_slots + phase3_batch_slots) * static_cast<double>(M) * bits_per_sample / rate;
}

std::vector<std::size_t> SharedPool::training_samples(NodeId id) const {
    std::vector<std::size_t> out;
    auto it = received.find(id);
    if (it == received.end()) return out;
    for (const auto& p : it->second) out.push_back(p.sample);
    return out;
}

nlohmann::json SharedPool::summary(const AcdsPlan& plan) const {
    nlohmann::json j;
    j["G"] = plan.G;
    j["n"] = plan.n;
    j["H"] = plan.H;
    j["M"] = plan.M;
    j["D"] = plan.D;
    j["alpha"] = plan.alpha;
    j["effective_alpha"] = plan.effective_alpha;
    j["bits_per_sample"] = plan.bits_per_sample;
    j["groups"] = plan.groups;
    std::map<std::size_t, std::size_t> hist;
    auto& nodes = j["nodes"] = nlohmann::json::object();
    for (const auto& [id, recs] : received) {
        for (const auto& r : recs) ++hist[r.candidates.size()];
        nodes[std::to_string(id)] = {{"received_samples", recs.size()},
                                     {"communication_bits", communication_bits(id)}};
    }
    auto& h = j["anonymity_histogram"] = nlohmann::json::object();
    for (const auto& [level, count] : hist) h[std::to_string(level)] = count;
    j["time_batch_slots"] = phase2_batch_slots + phase3_batch_slots;
    return j;
}

std::size_t anonymity_level(const SharedPool& pool, NodeId node, std::size_t sample) {
    auto it = pool.received.find(node);
    if (it != pool.received.end())
        for (const auto& p : it->second)
            if (p.sample == sample) return p.candidates.size();
    throw PreconditionError("sample " + std::to_string(sample) + " was not received by node " + std::to_string(node));
}

double acds_comm_cost(double alpha, double D, double I, double H, double n, double G) {
    if (alpha < 0 || D < 0 || I < 0 || !(H > 0) || n < 0 || G < 0) throw ConfigError("ACDS cost parameters must be positive");
    double shared = alpha * D * I;
    return shared / H + shared * n * (G + 1.0);
}

double acds_comm_time(double alpha, double D, double I, double H, double n, double G, double R) {
    if (!(R > 0)) throw ConfigError("transmission rate R must be positive");
    if (alpha < 0 || D < 0 || I < 0 || !(H > 0) || n < 0 || G < 0) throw ConfigError("ACDS time parameters must be positive");
    return alpha * D * I / (H * R) * (n * n * (H + 0.5) + n * (H * (G - 1.0) - 1.5));
}

Dataset with_shared_data(Dataset data, const SharedPool& pool) {
    auto parts = data.partition_map();
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto extra = pool.training_samples(static_cast<NodeId>(k + 1));
        parts[k].insert(parts[k].end(), extra.begin(), extra.end());
    }
    data.set_partition(std::move(parts));
    return data;
}

}  // namespace basil
