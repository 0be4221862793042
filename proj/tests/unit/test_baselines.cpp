#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "basil/baselines.hpp"
#include "basil/errors.hpp"

using namespace basil;

namespace {

std::shared_ptr<const QuadraticTask> scalar_task() { return std::make_shared<QuadraticTask>(std::vector<double>{1.0}); }

// Node k (1-based) gets targets k and k+2: mean k+1.
Dataset ladder(std::size_t N) {
    Dataset d(1, 1);
    std::vector<std::vector<std::size_t>> parts(N);
    for (std::size_t k = 1; k <= N; ++k)
        for (double off : {0.0, 2.0}) {
            double x[1] = {static_cast<double>(k) + off};
            parts[k - 1].push_back(d.size());
            d.add(x, 0);
        }
    d.set_partition(parts);
    return d;
}

double node_mean(std::size_t k) { return static_cast<double>(k) + 1.0; }

}  // namespace

TEST_CASE("graph topology basics") {
    GraphTopology g(5);
    g.add_edge(1, 3);
    g.add_edge(3, 1);
    g.add_edge(4, 2);
    CHECK(g.has_edge(3, 1));
    CHECK(g.neighbors(1) == std::vector<NodeId>{3});
    CHECK(g.edges().size() == 2);
    CHECK(g.edge_list() == "1 3\n2 4\n");
    CHECK_THROWS_AS(g.add_edge(2, 2), ConfigError);
    CHECK_THROWS_AS(g.add_edge(0, 2), ConfigError);
    CHECK_THROWS_AS(g.add_edge(1, 6), ConfigError);
    CHECK_THROWS_AS(g.neighbors(6), ConfigError);
    std::vector<NodeId> a = {1, 3}, b = {1, 2, 3};
    CHECK(g.connected_among(a));
    CHECK_FALSE(g.connected_among(b));
    CHECK(GraphTopology::complete(6).edges().size() == 15);
    CHECK(GraphTopology::from_edges(3, {{1, 2}, {2, 3}}).connected_among(node_range(3)));
}

TEST_CASE("random graphs are seeded and keep the benign nodes connected") {
    std::vector<NodeId> byz = {2, 7};
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        GraphTopology g = generate_graph(12, byz, 0.3, 0.5, seed);
        std::vector<NodeId> benign;
        for (NodeId v = 1; v <= 12; ++v)
            if (v != 2 && v != 7) benign.push_back(v);
        CHECK(g.connected_among(benign));
        CHECK(g.attempts >= 1);
        CHECK(generate_graph(12, byz, 0.3, 0.5, seed).edges() == g.edges());
    }
    std::vector<NodeId> one = {2};
    GraphTopology full = generate_graph(6, one, 1.0, 0.0, 3);
    CHECK(full.edges().size() == 10);  // K5 on the benign nodes
    CHECK(full.neighbors(2).empty());
}

TEST_CASE("edge frequency follows the two probabilities") {
    std::vector<NodeId> byz = {1, 2, 3, 4, 5};
    double benign_edges = 0, byz_edges = 0, benign_pairs = 0, byz_pairs = 0;
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        GraphTopology g = generate_graph(30, byz, 0.6, 0.2, seed);
        for (NodeId a = 1; a <= 30; ++a)
            for (NodeId b = a + 1; b <= 30; ++b) {
                bool touches = a <= 5 || b <= 5;
                (touches ? byz_pairs : benign_pairs) += 1;
                if (g.has_edge(a, b)) (touches ? byz_edges : benign_edges) += 1;
            }
    }
    CHECK(std::abs(benign_edges / benign_pairs - 0.6) < 0.02);
    CHECK(std::abs(byz_edges / byz_pairs - 0.2) < 0.02);
}

TEST_CASE("graph generation errors") {
    std::vector<NodeId> none, bad = {9};
    CHECK_THROWS_AS(generate_graph(5, none, 1.5, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(generate_graph(5, bad, 0.5, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(generate_graph(5, none, 0.0, 0.0, 1, 3), ConfigError);
}

TEST_CASE("ubar: distance stage then loss stage") {
    auto task = scalar_task();
    Dataset d(1, 1);
    double zero[1] = {0.0};
    d.add(zero, 0);
    Batch batch = d.all();
    ModelVector own = ModelVector::scalar(1.0);
    ModelVector n0 = ModelVector::scalar(0.5), n1 = ModelVector::scalar(1.4), n2 = ModelVector::scalar(-3.0),
                n3 = ModelVector::scalar(1.2);
    std::vector<const ModelVector*> nb = {&n0, &n1, &n2, &n3};
    // rho 0.75 keeps the three nearest: 1.2, 1.4, 0.5 (0.2, 0.4, 0.5 away)
    UbarChoice c = ubar_aggregate(own, nb, *task, batch, 0.75);
    CHECK(c.stage1 == std::vector<std::size_t>{3, 1, 0});
    CHECK(c.stage2 == std::vector<std::size_t>{0});  // only 0.5 has loss below 0.5
    CHECK_FALSE(c.fallback);
    CHECK(c.aggregate[0] == 0.5);

    ModelVector low = ModelVector::scalar(0.1);
    UbarChoice all = ubar_aggregate(low, nb, *task, batch, 1.0);
    CHECK(all.fallback);  // nobody beats 0.1, the lowest loss one is used
    CHECK(all.aggregate[0] == 0.5);

    ModelVector wide = ModelVector::scalar(0.0);
    ModelVector a = ModelVector::scalar(0.2), b = ModelVector::scalar(-0.2);
    std::vector<const ModelVector*> pair = {&a, &b};
    UbarChoice eq = ubar_aggregate(wide, pair, *task, batch, 1.0);
    CHECK(eq.fallback);
    CHECK(eq.stage2.size() == 1);

    ModelVector nan = ModelVector::scalar(std::nan(""));
    std::vector<const ModelVector*> with_nan = {&nan, &n0};
    UbarChoice skip = ubar_aggregate(own, with_nan, *task, batch, 0.5);
    CHECK(skip.stage1 == std::vector<std::size_t>{1});

    std::vector<const ModelVector*> empty;
    CHECK_THROWS_AS(ubar_aggregate(own, empty, *task, batch, 0.5), ConfigError);
    CHECK_THROWS_AS(ubar_aggregate(own, nb, *task, batch, 0.0), ConfigError);
}

TEST_CASE("g-plain: closed-neighbourhood mean then one local step") {
    auto task = scalar_task();
    Dataset train = ladder(4);
    GraphTopology path = GraphTopology::from_edges(4, {{1, 2}, {2, 3}, {3, 4}});
    GraphOptions o;
    o.lr = LrSchedule::constant(0.5);
    o.batch_size = 2;  // full local batch
    GraphSimulator sim(GraphScheme::g_plain, path, {}, task, train, nullptr, o, task->initial_model(0), 1);
    sim.run(1);
    std::vector<double> x(5);
    for (NodeId k = 1; k <= 4; ++k) {
        x[k] = 0.5 * node_mean(k);
        CHECK(sim.model(k)[0] == doctest::Approx(x[k]));
    }
    sim.run(1);
    for (NodeId k = 1; k <= 4; ++k) {
        double s = x[k];
        std::size_t c = 1;
        for (NodeId j : path.neighbors(k)) {
            s += x[j];
            ++c;
        }
        double avg = s / static_cast<double>(c);
        CHECK(sim.model(k)[0] == doctest::Approx(avg - 0.5 * (avg - node_mean(k))));
    }
    CHECK(sim.history().records.size() == 8);
    CHECK(sim.history().scheme == "g-plain");
}

TEST_CASE("ubar round: own weight alpha, filtered mean, gradient at the own model") {
    auto task = scalar_task();
    Dataset train = ladder(3);
    GraphTopology g = GraphTopology::complete(3);
    GraphOptions o;
    o.lr = LrSchedule::constant(0.5);
    o.batch_size = 2;
    o.ubar_rho = 1.0;
    o.ubar_alpha = 0.5;
    GraphSimulator sim(GraphScheme::ubar, g, {}, task, train, nullptr, o, task->initial_model(0), 1);
    sim.run(1);
    // every neighbour ties with the own zero model, so all are kept and the mean is zero
    std::vector<double> x(4);
    for (NodeId k = 1; k <= 3; ++k) {
        x[k] = 0.5 * node_mean(k);
        CHECK(sim.model(k)[0] == doctest::Approx(x[k]));
    }
    sim.run(1);
    for (NodeId k = 1; k <= 3; ++k) {
        // stage 2 against node k's targets k and k+2
        auto loss = [&](double v) {
            double a = v - static_cast<double>(k), b = v - static_cast<double>(k) - 2.0;
            return 0.25 * (a * a + b * b);
        };
        double own = loss(x[k]), s = 0;
        std::size_t c = 0;
        for (NodeId j = 1; j <= 3; ++j)
            if (j != k && loss(x[j]) <= own) {
                s += x[j];
                ++c;
            }
        double agg;
        if (c > 0) {
            agg = s / static_cast<double>(c);
        } else {
            NodeId best = k == 1 ? 2 : 1;
            for (NodeId j = 1; j <= 3; ++j)
                if (j != k && loss(x[j]) < loss(x[best])) best = j;
            agg = x[best];
        }
        double want = 0.5 * x[k] + 0.5 * agg - 0.5 * (x[k] - node_mean(k));
        CHECK(sim.model(k)[0] == doctest::Approx(want));
    }
    CHECK(sim.history().audit.size() == 6);
}

TEST_CASE("ubar keeps gaussian senders out while g-plain absorbs them") {
    auto task = std::make_shared<QuadraticTask>(std::vector<double>{1.0, 1.0});
    std::vector<double> centre = {8.0, -8.0};
    Dataset train = partition(make_quadratic_targets(centre, 0.2, 10 * 20, 5), 10, PartitionMode::iid, 5);
    std::vector<NodeId> byz = {2, 5, 9};
    GraphTopology g = generate_graph(10, byz, 0.8, 0.8, 4);
    GraphOptions o;
    o.lr = LrSchedule::constant(0.3);
    o.batch_size = 5;
    o.attack = AttackSpec::of(AttackKind::gaussian);
    auto ubar = run_ubar(g, byz, task, train, nullptr, 30, o, task->initial_model(0), 4);
    for (const auto& a : ubar.audit) {
        CHECK(std::find(byz.begin(), byz.end(), a.node) == byz.end());
        if (a.round > 1) CHECK_FALSE(a.selected_malicious);
    }
    auto plain = run_g_plain(g, byz, task, train, nullptr, 30, o, task->initial_model(0), 4);
    CHECK(ubar.records.size() == 30 * 7);
    CHECK(plain.records.size() == 30 * 7);
    double ubar_loss = 0, plain_loss = 0;
    for (std::size_t i = ubar.records.size() - 7; i < ubar.records.size(); ++i) {
        ubar_loss += ubar.records[i].train_loss;
        plain_loss += plain.records[i].train_loss;
    }
    CHECK(ubar_loss < plain_loss);

    auto again = run_ubar(g, byz, task, train, nullptr, 30, o, task->initial_model(0), 4);
    for (std::size_t i = 0; i < ubar.records.size(); ++i) CHECK(again.records[i].train_loss == ubar.records[i].train_loss);
}

TEST_CASE("graph simulator input checks") {
    auto task = scalar_task();
    Dataset train = ladder(3);
    GraphOptions o;
    CHECK_THROWS_AS(GraphSimulator(GraphScheme::ubar, GraphTopology(), {}, task, train, nullptr, o,
                                   task->initial_model(0), 1),
                    ConfigError);
    CHECK_THROWS_AS(GraphSimulator(GraphScheme::ubar, GraphTopology::complete(3), {4}, task, train, nullptr, o,
                                   task->initial_model(0), 1),
                    ConfigError);
    CHECK_THROWS_AS(GraphSimulator(GraphScheme::ubar, GraphTopology::complete(3), {}, nullptr, train, nullptr, o,
                                   task->initial_model(0), 1),
                    ConfigError);
    CHECK_THROWS_AS(GraphSimulator(GraphScheme::g_plain, GraphTopology::complete(3), {}, task, train, nullptr, o,
                                   ModelVector::flat({0.0, 0.0}), 1),
                    ConfigError);
}

TEST_CASE("r-plain passes the newest model round the ring") {
    auto task = scalar_task();
    Dataset train = ladder(5);
    RingConfig rc{5, 0, 0, 3, 2, {}};
    RingOptions o;
    o.lr = LrSchedule::constant(0.5);
    o.batch_size = 2;
    auto h = run_r_plain(rc, task, train, nullptr, 2, o, task->initial_model(0));
    RingOrder order = agree_order(node_range(5), 2);
    CHECK(h.records.size() == 10);
    double x = 0;
    for (const auto& r : h.records) {
        if (r.round > 1 || r.node != order.at(0)) CHECK(r.selected_sender == order.predecessor(r.node));
        x -= 0.5 * (x - node_mean(r.node));
        CHECK(r.stored_senders.size() <= 1);
    }
    // the chain of steps matches a single model walking the ring
    CHECK(h.records.back().train_loss ==
          doctest::Approx(0.25 * (std::pow(x - static_cast<double>(h.records.back().node), 2) +
                                  std::pow(x - static_cast<double>(h.records.back().node) - 2.0, 2))));
}
