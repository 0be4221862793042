#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"

#include "basil/dataset.hpp"
#include "basil/errors.hpp"
#include "basil/idx.hpp"
#include "basil/loss_task.hpp"
#include "basil/model_vector.hpp"
#include "basil/random.hpp"

using namespace basil;
namespace fs = std::filesystem;

namespace {

Dataset small_labelled(std::size_t dim, int classes, std::size_t count, std::uint64_t seed) {
    Dataset d(dim, classes);
    Rng rng = make_rng(seed, Stream::dataset);
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < count; ++i) {
        for (auto& v : x) v = standard_normal(rng);
        d.add(x, static_cast<int>(i % static_cast<std::size_t>(classes)));
    }
    return d;
}

ModelVector random_model(const Shape& shape, std::uint64_t seed, double scale) {
    ModelVector m(shape);
    Rng rng = make_rng(seed, Stream::init);
    for (double& v : m.params()) v = scale * standard_normal(rng);
    return m;
}

// Central differences over every coordinate.
double max_fd_error(const LossTask& task, const ModelVector& x, const Batch& batch) {
    ModelVector g = gradient(x, task, batch);
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ModelVector up = x, down = x;
        up[i] += h;
        down[i] -= h;
        double fd = (task.loss(up, batch) - task.loss(down, batch)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

// Independent forward pass for the three-layer network; weights {fan_in, fan_out} row-major.
double mlp_reference_loss(const ModelVector& m, const Batch& batch, std::size_t D, std::size_t h1, std::size_t h2,
                          std::size_t C) {
    auto W1 = m.layer(0), b1 = m.layer(1), W2 = m.layer(2), b2 = m.layer(3), W3 = m.layer(4), b3 = m.layer(5);
    double total = 0.0;
    for (const auto& s : batch) {
        std::vector<double> a1(h1), a2(h2), z(C);
        for (std::size_t j = 0; j < h1; ++j) {
            double v = b1[j];
            for (std::size_t i = 0; i < D; ++i) v += s.x[i] * W1[i * h1 + j];
            a1[j] = std::max(0.0, v);
        }
        for (std::size_t j = 0; j < h2; ++j) {
            double v = b2[j];
            for (std::size_t i = 0; i < h1; ++i) v += a1[i] * W2[i * h2 + j];
            a2[j] = std::max(0.0, v);
        }
        double mx = -1e300;
        for (std::size_t j = 0; j < C; ++j) {
            double v = b3[j];
            for (std::size_t i = 0; i < h2; ++i) v += a2[i] * W3[i * C + j];
            z[j] = v;
            mx = std::max(mx, v);
        }
        double lse = 0.0;
        for (double v : z) lse += std::exp(v - mx);
        total += mx + std::log(lse) - z[static_cast<std::size_t>(s.label)];
    }
    return total / static_cast<double>(batch.size());
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::size_t count, std::size_t rows, std::size_t cols) {
    std::vector<std::uint8_t> b;
    put_be32(b, 0x00000803);
    put_be32(b, static_cast<std::uint32_t>(count));
    put_be32(b, static_cast<std::uint32_t>(rows));
    put_be32(b, static_cast<std::uint32_t>(cols));
    for (std::size_t i = 0; i < count * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>((i * 7) % 256));
    return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> b;
    put_be32(b, 0x00000801);
    put_be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

fs::path write_temp(const std::string& name, const std::vector<std::uint8_t>& bytes) {
    fs::path p = fs::temp_directory_path() / ("basil-unit-" + name);
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return p;
}

}  // namespace

TEST_CASE("model vector arithmetic keeps the layout") {
    Shape s = {{"a", {2}}, {"b", {1, 3}}};
    ModelVector x(s, {1, 2, 3, 4, 5});
    ModelVector y(s, {1, 1, 1, 1, 1});
    CHECK(parameter_count(s) == 5);
    CHECK((x + y)[4] == 6);
    CHECK((x - y)[0] == 0);
    CHECK((2.0 * x)[3] == 8);
    CHECK(dot(x, y) == 15);
    CHECK(norm(y) == doctest::Approx(std::sqrt(5.0)));
    CHECK(squared_distance(x, y) == doctest::Approx(0 + 1 + 4 + 9 + 16));
    CHECK(x.layer(1).size() == 3);
    CHECK(x.layer(1)[0] == 3);
    CHECK(x.layer_offset(1) == 2);
    ModelVector z = x;
    z.axpy(-1.0, x);
    CHECK(norm(z) == 0.0);

    CHECK_THROWS_AS(ModelVector(s, {1, 2}), ConfigError);
    CHECK_THROWS_AS(x + ModelVector::flat({1, 2, 3, 4, 5}), ConfigError);
    std::vector<ModelVector> none;
    CHECK_THROWS_AS(mean(std::span<const ModelVector>(none)), PreconditionError);
    std::vector<ModelVector> two = {x, y};
    CHECK(mean(std::span<const ModelVector>(two))[4] == 3.0);

    ModelVector bad = x;
    bad[2] = std::nan("");
    CHECK_FALSE(bad.all_finite());
}

TEST_CASE("random streams are reproducible and uniform") {
    Rng a = make_rng(5, Stream::batches, 3, 1);
    Rng b = make_rng(5, Stream::batches, 3, 1);
    Rng c = make_rng(5, Stream::batches, 3, 2);
    CHECK(a() == b());
    CHECK(a() != c());

    Rng r = make_rng(1, Stream::monte_carlo);
    std::vector<int> counts(7, 0);
    const int draws = 70000;
    for (int i = 0; i < draws; ++i) ++counts[uniform_index(r, 7)];
    double chi2 = 0;
    for (int k : counts) chi2 += (k - 10000.0) * (k - 10000.0) / 10000.0;
    CHECK(chi2 < 22.5);  // 6 dof, p ~ 0.001

    double s = 0, s2 = 0;
    for (int i = 0; i < 20000; ++i) {
        double z = standard_normal(r);
        s += z;
        s2 += z * z;
    }
    CHECK(std::abs(s / 20000) < 0.03);
    CHECK(std::abs(s2 / 20000 - 1.0) < 0.05);

    std::vector<int> v(10);
    std::iota(v.begin(), v.end(), 0);
    seeded_shuffle(v.begin(), v.end(), r);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 10);
}

TEST_CASE("partition is disjoint, equal sized and seeded") {
    Dataset d = small_labelled(3, 4, 103, 1);
    d.add_dummy();
    Dataset p = partition(d, 10, PartitionMode::iid, 9);
    std::set<std::size_t> seen;
    for (NodeId n = 1; n <= 10; ++n) {
        CHECK(p.node_samples(n).size() == 10);
        for (auto i : p.node_samples(n)) {
            CHECK_FALSE(p.dummy(i));
            CHECK(seen.insert(i).second);
        }
    }
    Dataset q = partition(d, 10, PartitionMode::iid, 9);
    CHECK(q.partition_map() == p.partition_map());
    Dataset r = partition(d, 10, PartitionMode::iid, 10);
    CHECK(r.partition_map() != p.partition_map());

    Dataset nn = partition(d, 4, PartitionMode::non_iid, 0);
    for (auto i : nn.node_samples(1)) CHECK(nn.label(i) == 0);
    CHECK_THROWS_AS(partition(d, 200, PartitionMode::iid, 0), ConfigError);
    CHECK_THROWS_AS(parse_partition_mode("sorted"), ConfigError);
}

TEST_CASE("quadratic task: closed form loss, gradient and optimum") {
    QuadraticTask task({1.0, 4.0});
    Dataset d(2, 1);
    double a[2] = {1.0, 2.0}, b[2] = {3.0, -2.0};
    d.add(a, 0);
    d.add(b, 0);
    Batch all = d.all();
    ModelVector x = ModelVector::flat({0.0, 0.0});
    // 1/2 mean_j sum_k h_k (x_k - a_jk)^2
    double want = 0.5 * ((1 * 1 + 4 * 4) + (1 * 9 + 4 * 4)) / 2;
    CHECK(task.loss(x, all) == doctest::Approx(want));
    CHECK(task.smoothness() == 4.0);
    ModelVector opt = task.optimum(all);
    CHECK(opt[0] == 2.0);
    CHECK(opt[1] == 0.0);
    CHECK(norm(gradient(opt, task, all)) < 1e-12);
    CHECK(max_fd_error(task, ModelVector::flat({0.3, -0.7}), all) < 1e-6);

    // one step of size 1/L on the h=L coordinate lands on the optimum
    ModelVector y = sgd_step(x, task, all, 1.0 / 4.0);
    CHECK(y[1] == doctest::Approx(0.0));
    CHECK(sgd_step(y, task, all, 0.0) == y);
    CHECK(std::isnan(accuracy(y, task, all)));
}

TEST_CASE("softmax regression gradient matches finite differences") {
    Dataset d = small_labelled(5, 3, 12, 2);
    SoftmaxRegression task(5, 3);
    Batch b = d.all();
    CHECK(task.loss(task.initial_model(0), b) == doctest::Approx(std::log(3.0)));
    CHECK(max_fd_error(task, random_model(task.shape(), 3, 0.5), b) < 1e-6);
}

TEST_CASE("mlp forward agrees with an independent implementation and its gradient with finite differences") {
    const std::size_t D = 4, h1 = 6, h2 = 5, C = 3;
    Dataset d = small_labelled(D, static_cast<int>(C), 9, 4);
    Mlp3Fc task(D, static_cast<int>(C), h1, h2);
    Batch b = d.all();
    ModelVector x = random_model(task.shape(), 5, 0.6);
    CHECK(task.loss(x, b) == doctest::Approx(mlp_reference_loss(x, b, D, h1, h2, C)).epsilon(1e-12));
    CHECK(max_fd_error(task, x, b) < 1e-5);

    ModelVector init = task.initial_model(11);
    CHECK(init == task.initial_model(11));
    double bound = 1.0 / std::sqrt(static_cast<double>(D));
    for (double v : init.layer(0)) CHECK(std::abs(v) <= bound);
    for (double v : init.layer(1)) CHECK(v == 0.0);
    CHECK(task.shape()[0].dims == std::vector<std::size_t>{D, h1});
}

TEST_CASE("gradient rejects non-finite models and bad batches") {
    SoftmaxRegression task(2, 2);
    Dataset d(2, 2);
    double x[2] = {1e308, 1e308};
    d.add(x, 1);
    ModelVector m = task.initial_model(0);
    for (double& v : m.params()) v = 1e308;
    CHECK_THROWS_AS(gradient(m, task, d.all()), NumericFault);
    CHECK_THROWS_AS(gradient(task.initial_model(0), task, Batch{}), PreconditionError);
    CHECK_THROWS_AS(sgd_step(task.initial_model(0), task, d.all(), -1.0), ConfigError);
    CHECK_THROWS_AS(parse_task_kind("cnn"), ConfigError);
}

TEST_CASE("idx parsing of a four image fixture") {
    auto img = idx_images(4, 28, 28);
    auto lab = idx_labels({3, 1, 4, 1});
    IdxImages parsed = parse_idx_images(img);
    CHECK(parsed.count == 4);
    CHECK(parsed.rows == 28);
    CHECK(parsed.pixels.size() == 4 * 784);
    CHECK(parse_idx_labels(lab) == std::vector<std::uint8_t>{3, 1, 4, 1});

    auto ip = write_temp("img", img), lp = write_temp("lab", lab);
    Dataset d = load_idx(ip, lp);
    CHECK(d.size() == 4);
    CHECK(d.feature_dim() == 784);
    CHECK(d.num_classes() == 5);
    CHECK(d.features(0)[1] == doctest::Approx(7.0 / 255.0));
    CHECK(load_idx(ip, lp, 2, 10).size() == 2);

    auto short_lab = write_temp("lab3", idx_labels({3, 1, 4}));
    try {
        load_idx(ip, short_lab);
        FAIL("count mismatch accepted");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 4);
    }
    fs::remove(ip);
    fs::remove(lp);
    fs::remove(short_lab);
}

TEST_CASE("idx parse errors carry byte offsets") {
    auto offset_of = [](auto f) -> std::size_t {
        try {
            f();
        } catch (const ParseError& e) {
            return e.offset();
        }
        return 999999;
    };
    std::vector<std::uint8_t> empty;
    CHECK(offset_of([&] { parse_idx_images(empty); }) == 0);
    CHECK(offset_of([&] { parse_idx_labels(empty); }) == 0);
    auto img = idx_images(2, 3, 3);
    img[3] = 0x99;
    CHECK(offset_of([&] { parse_idx_images(img); }) == 0);
    auto trunc = idx_images(2, 3, 3);
    trunc.resize(trunc.size() - 1);
    CHECK(offset_of([&] { parse_idx_images(trunc); }) == trunc.size());
    auto lab = idx_labels({1, 2, 3});
    lab.pop_back();
    CHECK(offset_of([&] { parse_idx_labels(lab); }) == lab.size());
}

TEST_CASE("synthetic generators are seeded") {
    SyntheticSpec spec;
    spec.train_samples = 40;
    spec.test_samples = 8;
    auto a = make_gaussian_clusters(spec, 3);
    auto b = make_gaussian_clusters(spec, 3);
    CHECK(a.train.size() == 40);
    CHECK(a.test.size() == 8);
    CHECK(a.train.features(5)[2] == b.train.features(5)[2]);
    CHECK(a.train.label(5) == 5 % spec.classes);

    std::vector<double> centre = {1.0, 2.0};
    Dataset q = make_quadratic_targets(centre, 0.0, 5, 1);
    CHECK(q.features(3)[1] == 2.0);

    Dataset f = small_labelled(2, 4, 40, 6);
    flag_sensitive_by_label_fraction(f, 0.5, 2);
    std::set<int> open;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (!f.sensitive(i)) open.insert(f.label(i));
    CHECK(open.size() == 2);
}
