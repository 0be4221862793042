#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace basil {

// Node ids are 1-based. Id 0 is reserved for "no sender" (the initial model).
using NodeId = std::uint32_t;

struct SampleRef {
    std::span<const double> x;
    int label = 0;
};

using Batch = std::vector<SampleRef>;

enum class PartitionMode { iid, non_iid };

std::string to_string(PartitionMode m);
PartitionMode parse_partition_mode(const std::string& s);

class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t feature_dim, int num_classes);

    void add(std::span<const double> features, int label, bool sensitive = false);
    void add_dummy();  // zero features, flagged, never used for training

    std::size_t size() const { return labels_.size(); }
    std::size_t feature_dim() const { return dim_; }
    int num_classes() const { return classes_; }

    std::span<const double> features(std::size_t i) const;
    int label(std::size_t i) const { return labels_.at(i); }
    bool sensitive(std::size_t i) const { return sensitive_.at(i) != 0; }
    bool dummy(std::size_t i) const { return dummy_.at(i) != 0; }
    void set_sensitive(std::size_t i, bool v) { sensitive_.at(i) = v ? 1 : 0; }
    SampleRef sample(std::size_t i) const { return {features(i), labels_.at(i)}; }

    Batch batch(std::span<const std::size_t> indices) const;
    Batch all() const;
    // First `count` samples (all if count is 0 or exceeds size()).
    Batch head(std::size_t count) const;

    // Per-node index lists; node ids 1..node_count().
    std::size_t node_count() const { return partition_.size(); }
    const std::vector<std::size_t>& node_samples(NodeId node) const;
    void set_partition(std::vector<std::vector<std::size_t>> parts);
    const std::vector<std::vector<std::size_t>>& partition_map() const { return partition_; }

private:
    std::size_t dim_ = 0;
    int classes_ = 0;
    std::vector<double> features_;
    std::vector<int> labels_;
    std::vector<char> sensitive_;
    std::vector<char> dummy_;
    std::vector<std::vector<std::size_t>> partition_;
};

// Equal-size disjoint split; the remainder after dividing by node_count is
// dropped. iid shuffles with the seed, non_iid sorts stably by label and cuts
// contiguous blocks.
Dataset partition(Dataset data, std::size_t node_count, PartitionMode mode, std::uint64_t seed);

struct SyntheticSpec {
    std::size_t dim = 20;
    int classes = 4;
    double separation = 3.0;  // scale of the class centres
    double noise = 1.0;       // per-coordinate std-dev around a centre
    std::size_t train_samples = 2000;
    std::size_t test_samples = 500;
};

struct TrainTest {
    Dataset train;
    Dataset test;
};

// Gaussian class clusters; labels assigned round-robin so classes stay balanced.
TrainTest make_gaussian_clusters(const SyntheticSpec& spec, std::uint64_t seed);

// Samples for quadratic tasks: targets a_j drawn around `centre` with the given
// per-coordinate noise. Labels are all 0.
Dataset make_quadratic_targets(std::span<const double> centre, double noise, std::size_t count, std::uint64_t seed);

// Marks a fraction gamma of the labels (chosen by seed) non-sensitive and all
// other samples sensitive.
void flag_sensitive_by_label_fraction(Dataset& data, double gamma, std::uint64_t seed);

}  // namespace basil
