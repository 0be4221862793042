#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "basil/model_vector.hpp"
#include "basil/random.hpp"

namespace basil {

enum class AttackKind { none, gaussian, sign_flip, hidden, inverse };

std::string to_string(AttackKind k);
AttackKind parse_attack_kind(const std::string& s);

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    // Zero-based round index from which the attack is live; earlier rounds
    // behave honestly. Only the hidden attack defaults to a nonzero value.
    std::size_t activation_round = 0;

    static AttackSpec of(AttackKind kind);
    bool active(std::size_t round_index) const { return kind != AttackKind::none && round_index >= activation_round; }
    // Whether the Byzantine node needs an honest update to build its output.
    bool needs_honest_update(std::size_t round_index) const;
};

// Entries iid N(0,1).
ModelVector gaussian_attack(const Shape& shape, Rng& rng);

// Each layer negated with probability 1/2.
ModelVector sign_flip_attack(const ModelVector& model, Rng& rng);
// Deterministic core: flip[i] decides layer i.
ModelVector sign_flip_layers(const ModelVector& model, const std::vector<bool>& flip);

// mu - eps * z with z = sign(mu) normalised, eps = max benign distance to mu.
ModelVector hidden_attack(std::span<const ModelVector* const> benign);
ModelVector hidden_attack(std::span<const ModelVector> benign);

// prior - (honest - prior)
ModelVector inverse_attack(const ModelVector& honest, const ModelVector& prior);

}  // namespace basil
