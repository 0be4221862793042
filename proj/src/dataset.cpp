#include "basil/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "basil/errors.hpp"
#include "basil/random.hpp"

namespace basil {

std::string to_string(PartitionMode m) { return m == PartitionMode::iid ? "iid" : "non-iid"; }

PartitionMode parse_partition_mode(const std::string& s) {
    if (s == "iid") return PartitionMode::iid;
    if (s == "non-iid" || s == "noniid" || s == "non_iid") return PartitionMode::non_iid;
    throw ConfigError("unknown partition mode '" + s + "'");
}

Dataset::Dataset(std::size_t feature_dim, int num_classes) : dim_(feature_dim), classes_(num_classes) {
    if (feature_dim == 0) throw ConfigError("dataset feature dimension must be positive");
    if (num_classes <= 0) throw ConfigError("dataset class count must be positive");
}

void Dataset::add(std::span<const double> features, int label, bool sensitive) {
    if (features.size() != dim_) throw ConfigError("sample feature dimension mismatch");
    if (label < 0 || label >= classes_) throw ConfigError("sample label out of range");
    features_.insert(features_.end(), features.begin(), features.end());
    labels_.push_back(label);
    sensitive_.push_back(sensitive ? 1 : 0);
    dummy_.push_back(0);
}

void Dataset::add_dummy() {
    features_.insert(features_.end(), dim_, 0.0);
    labels_.push_back(0);
    sensitive_.push_back(0);
    dummy_.push_back(1);
}

std::span<const double> Dataset::features(std::size_t i) const {
    if (i >= size()) throw PreconditionError("sample index out of range");
    return std::span<const double>(features_).subspan(i * dim_, dim_);
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
    Batch out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(sample(i));
    return out;
}

Batch Dataset::all() const { return head(0); }

Batch Dataset::head(std::size_t count) const {
    std::size_t n = (count == 0 || count > size()) ? size() : count;
    Batch out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample(i));
    return out;
}

const std::vector<std::size_t>& Dataset::node_samples(NodeId node) const {
    if (node == 0 || node > partition_.size()) throw PreconditionError("node " + std::to_string(node) + " has no partition");
    return partition_[node - 1];
}

void Dataset::set_partition(std::vector<std::vector<std::size_t>> parts) {
    for (const auto& p : parts)
        for (auto i : p)
            if (i >= size()) throw ConfigError("partition references a sample outside the dataset");
    partition_ = std::move(parts);
}

Dataset partition(Dataset data, std::size_t node_count, PartitionMode mode, std::uint64_t seed) {
    if (node_count == 0) throw ConfigError("partition needs at least one node");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!data.dummy(i)) order.push_back(i);
    if (node_count > order.size())
        throw ConfigError("cannot partition " + std::to_string(order.size()) + " samples over " +
                          std::to_string(node_count) + " nodes");
    if (mode == PartitionMode::iid) {
        Rng rng = make_rng(seed, Stream::partition);
        seeded_shuffle(order.begin(), order.end(), rng);
    } else {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return data.label(a) < data.label(b); });
    }
    std::size_t per = order.size() / node_count;
    std::vector<std::vector<std::size_t>> parts(node_count);
    for (std::size_t k = 0; k < node_count; ++k)
        parts[k].assign(order.begin() + static_cast<std::ptrdiff_t>(k * per),
                        order.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
    data.set_partition(std::move(parts));
    return data;
}

TrainTest make_gaussian_clusters(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.dim == 0 || spec.classes < 2) throw ConfigError("synthetic spec needs dim >= 1 and classes >= 2");
    if (spec.train_samples == 0) throw ConfigError("synthetic spec needs train samples");
    Rng rng = make_rng(seed, Stream::dataset);
    std::vector<std::vector<double>> centres(static_cast<std::size_t>(spec.classes), std::vector<double>(spec.dim));
    for (auto& c : centres)
        for (auto& v : c) v = spec.separation * standard_normal(rng) / std::sqrt(static_cast<double>(spec.dim)) * 2.0;
    auto fill = [&](Dataset& d, std::size_t count) {
        std::vector<double> x(spec.dim);
        for (std::size_t i = 0; i < count; ++i) {
            int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
            for (std::size_t j = 0; j < spec.dim; ++j)
                x[j] = centres[static_cast<std::size_t>(label)][j] + spec.noise * standard_normal(rng);
            d.add(x, label);
        }
    };
    TrainTest out{Dataset(spec.dim, spec.classes), Dataset(spec.dim, spec.classes)};
    fill(out.train, spec.train_samples);
    fill(out.test, spec.test_samples);
    return out;
}

Dataset make_quadratic_targets(std::span<const double> centre, double noise, std::size_t count, std::uint64_t seed) {
    if (centre.empty()) throw ConfigError("quadratic targets need a nonempty centre");
    Rng rng = make_rng(seed, Stream::dataset, 1);
    Dataset d(centre.size(), 1);
    std::vector<double> a(centre.size());
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) a[j] = centre[j] + noise * standard_normal(rng);
        d.add(a, 0);
    }
    return d;
}

void flag_sensitive_by_label_fraction(Dataset& data, double gamma, std::uint64_t seed) {
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("sensitivity fraction gamma must lie in [0,1]");
    std::vector<int> labels(static_cast<std::size_t>(data.num_classes()));
    std::iota(labels.begin(), labels.end(), 0);
    Rng rng = make_rng(seed, Stream::sensitivity);
    seeded_shuffle(labels.begin(), labels.end(), rng);
    auto open = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(labels.size()) + 1e-9));
    std::vector<char> shared(labels.size(), 0);
    for (std::size_t k = 0; k < open; ++k) shared[static_cast<std::size_t>(labels[k])] = 1;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!data.dummy(i)) data.set_sensitive(i, shared[static_cast<std::size_t>(data.label(i))] == 0);
}

}  // namespace basil
