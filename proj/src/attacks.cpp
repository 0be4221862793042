#include "basil/attacks.hpp"

#include <cmath>

#include "basil/errors.hpp"

namespace basil {

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::none: return "none";
        case AttackKind::gaussian: return "gaussian";
        case AttackKind::sign_flip: return "random-sign-flip";
        case AttackKind::hidden: return "hidden";
        case AttackKind::inverse: return "inverse";
    }
    return "?";
}

AttackKind parse_attack_kind(const std::string& s) {
    if (s == "none") return AttackKind::none;
    if (s == "gaussian") return AttackKind::gaussian;
    if (s == "random-sign-flip" || s == "sign-flip") return AttackKind::sign_flip;
    if (s == "hidden") return AttackKind::hidden;
    if (s == "inverse") return AttackKind::inverse;
    throw ConfigError("unknown attack kind '" + s + "'");
}

AttackSpec AttackSpec::of(AttackKind kind) {
    AttackSpec a;
    a.kind = kind;
    if (kind == AttackKind::hidden) a.activation_round = 20;
    return a;
}

bool AttackSpec::needs_honest_update(std::size_t round_index) const {
    if (!active(round_index)) return true;
    return kind == AttackKind::sign_flip || kind == AttackKind::inverse;
}

ModelVector gaussian_attack(const Shape& shape, Rng& rng) {
    ModelVector m(shape);
    for (double& v : m.params()) v = standard_normal(rng);
    return m;
}

ModelVector sign_flip_layers(const ModelVector& model, const std::vector<bool>& flip) {
    if (flip.size() != model.shape().size()) throw PreconditionError("one flip decision per layer required");
    ModelVector out = model;
    for (std::size_t l = 0; l < flip.size(); ++l)
        if (flip[l])
            for (double& v : out.layer(l)) v = -v;
    return out;
}

ModelVector sign_flip_attack(const ModelVector& model, Rng& rng) {
    std::vector<bool> flip(model.shape().size());
    for (std::size_t l = 0; l < flip.size(); ++l) flip[l] = (rng() >> 63) != 0;
    return sign_flip_layers(model, flip);
}

ModelVector hidden_attack(std::span<const ModelVector* const> benign) {
    if (benign.empty()) throw PreconditionError("hidden attack needs at least one benign model");
    ModelVector mu = mean(benign);
    double eps = 0.0;
    for (const auto* m : benign) eps = std::max(eps, distance(*m, mu));
    ModelVector z(mu.shape());
    std::size_t nnz = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        z[i] = (mu[i] > 0.0) - (mu[i] < 0.0);
        if (z[i] != 0.0) ++nnz;
    }
    if (nnz == 0 || eps == 0.0) return mu;
    z *= 1.0 / std::sqrt(static_cast<double>(nnz));
    return mu.axpy(-eps, z);
}

ModelVector hidden_attack(std::span<const ModelVector> benign) {
    std::vector<const ModelVector*> ptrs;
    for (const auto& m : benign) ptrs.push_back(&m);
    return hidden_attack(std::span<const ModelVector* const>(ptrs));
}

ModelVector inverse_attack(const ModelVector& honest, const ModelVector& prior) {
    if (!honest.composable_with(prior)) throw ConfigError("inverse attack needs matching shapes");
    ModelVector out = prior;
    out *= 2.0;
    out -= honest;
    return out;
}

}  // namespace basil
