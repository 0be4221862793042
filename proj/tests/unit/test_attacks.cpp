#include <cmath>

#include "doctest.h"

#include "basil/attacks.hpp"
#include "basil/errors.hpp"

using namespace basil;

namespace {
const Shape kThreeLayers = {{"w1", {4, 3}}, {"b1", {3}}, {"w2", {3, 2}}};
}

TEST_CASE("attack spec names and gating") {
    CHECK(parse_attack_kind("random-sign-flip") == AttackKind::sign_flip);
    CHECK(to_string(AttackKind::sign_flip) == "random-sign-flip");
    CHECK(parse_attack_kind("hidden") == AttackKind::hidden);
    CHECK_THROWS_AS(parse_attack_kind("label-flip"), ConfigError);
    AttackSpec h = AttackSpec::of(AttackKind::hidden);
    CHECK(h.activation_round == 20);
    CHECK_FALSE(h.active(19));
    CHECK(h.active(20));
    CHECK(h.needs_honest_update(3));
    CHECK(AttackSpec::of(AttackKind::gaussian).active(0));
    CHECK_FALSE(AttackSpec::of(AttackKind::none).active(100));
    CHECK(AttackSpec::of(AttackKind::inverse).needs_honest_update(0));
    CHECK_FALSE(AttackSpec::of(AttackKind::gaussian).needs_honest_update(0));
}

TEST_CASE("gaussian attack entries are standard normal") {
    Shape big = {{"x", {200000}}};
    Rng rng = make_rng(1, Stream::attack);
    ModelVector m = gaussian_attack(big, rng);
    CHECK(m.shape() == big);
    double s = 0, s2 = 0;
    for (double v : m.params()) {
        s += v;
        s2 += v * v;
    }
    double n = static_cast<double>(m.size());
    // 5 standard errors
    CHECK(std::abs(s / n) < 5.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));

    Rng a = make_rng(4, Stream::attack), b = make_rng(4, Stream::attack);
    CHECK(gaussian_attack(kThreeLayers, a) == gaussian_attack(kThreeLayers, b));
}

TEST_CASE("sign flip works layer by layer") {
    ModelVector one = ModelVector::flat({1.0, -2.0, 3.0});
    CHECK(sign_flip_layers(one, {true}) == ModelVector::flat({-1.0, 2.0, -3.0}));
    CHECK(sign_flip_layers(one, {false}) == one);
    CHECK_THROWS_AS(sign_flip_layers(one, {true, false}), PreconditionError);

    ModelVector m(kThreeLayers);
    for (double& v : m.params()) v = 1.0;
    Rng rng = make_rng(9, Stream::attack);
    std::vector<int> flips(3, 0);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        ModelVector out = sign_flip_attack(m, rng);
        for (std::size_t l = 0; l < 3; ++l) {
            auto layer = out.layer(l);
            bool flipped = layer[0] < 0;
            for (double v : layer) CHECK_EQ(v < 0, flipped);
            flips[l] += flipped;
        }
    }
    for (int f : flips) {
        double freq = static_cast<double>(f) / trials;
        CHECK(freq > 0.48);
        CHECK(freq < 0.52);
    }
}

TEST_CASE("hidden attack stays within the benign spread") {
    std::vector<ModelVector> same = {ModelVector::flat({1.0, -2.0}), ModelVector::flat({1.0, -2.0})};
    CHECK(hidden_attack(std::span<const ModelVector>(same)) == same[0]);

    std::vector<ModelVector> two = {ModelVector::flat({1.0, 1.0}), ModelVector::flat({-1.0, -1.0})};
    CHECK(norm(hidden_attack(std::span<const ModelVector>(two))) <= std::sqrt(2.0) + 1e-12);

    std::vector<ModelVector> empty;
    CHECK_THROWS_AS(hidden_attack(std::span<const ModelVector>(empty)), PreconditionError);

    Rng rng = make_rng(3, Stream::attack);
    for (int t = 0; t < 200; ++t) {
        std::size_t k = 1 + uniform_index(rng, 6);
        std::vector<ModelVector> benign;
        for (std::size_t i = 0; i < k; ++i) {
            ModelVector m = gaussian_attack(kThreeLayers, rng);
            m *= 0.1;
            for (double& v : m.params()) v += 0.5;
            benign.push_back(m);
        }
        ModelVector mu = mean(std::span<const ModelVector>(benign));
        double eps = 0.0;
        for (const auto& m : benign) eps = std::max(eps, distance(m, mu));
        ModelVector out = hidden_attack(std::span<const ModelVector>(benign));
        CHECK(out.shape() == kThreeLayers);
        CHECK(distance(out, mu) <= eps * (1 + 1e-12));
        // pushed against the mean's sign: every coordinate of mu is positive here
        if (eps > 0)
            for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] < mu[i]);
    }
}

TEST_CASE("inverse attack reflects the honest step") {
    ModelVector prior = ModelVector::flat({0.0});
    CHECK(inverse_attack(ModelVector::flat({1.0}), prior) == ModelVector::flat({-1.0}));
    ModelVector p = ModelVector::flat({0.5, -1.0, 2.0});
    ModelVector h = ModelVector::flat({0.7, -1.5, 2.0});
    CHECK(inverse_attack(p, p) == p);
    CHECK(norm(inverse_attack(inverse_attack(h, p), p) - h) < 1e-15);
    CHECK_THROWS_AS(inverse_attack(h, prior), ConfigError);
}
