#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "basil/attacks.hpp"
#include "basil/dataset.hpp"
#include "basil/history.hpp"
#include "basil/loss_task.hpp"
#include "basil/ring_protocol.hpp"

namespace basil {

inline constexpr int kSchemaVersion = 1;

struct DatasetConfig {
    std::string kind = "synthetic";  // idx | synthetic | quadratic
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::size_t train_limit = 0;
    std::size_t test_limit = 0;
    SyntheticSpec synthetic;
    // quadratic targets
    std::size_t dim = 10;
    std::size_t samples = 400;
    double noise = 1.0;
    double centre_scale = 3.0;
};

struct AcdsConfig {
    bool enabled = false;
    double alpha = 0.05;
    std::size_t batches = 5;
    std::size_t groups = 1;
    double bits_per_sample = 0.0;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name = "experiment";
    std::string scheme = "basil";  // basil | basil-plus | r-plain | g-plain | r-plain-plus | ubar
    DatasetConfig dataset;
    PartitionMode partition = PartitionMode::iid;
    TaskKind task = TaskKind::softmax_regression;
    std::size_t hidden1 = 100, hidden2 = 100;
    std::vector<double> curvature;  // quadratic; empty = all ones

    std::size_t nodes = 0;
    std::size_t byzantine = 0;            // count
    std::vector<NodeId> byzantine_ids;    // explicit placement, overrides the count draw
    std::size_t connectivity = 0;         // S; 0 = scheme default
    std::size_t dropouts = 0;             // d
    std::size_t groups = 1;               // G for the grouped schemes
    std::size_t tau = 1;
    std::size_t local_epochs = 0;
    double p_benign = 0.4, p_byzantine = 0.4;
    double ubar_rho = 0.33, ubar_alpha = 0.5;

    AttackSpec attack;
    std::size_t rounds = 0;
    std::size_t batch_size = 80;
    LrSchedule lr;
    std::uint64_t seed = 0;
    AcdsConfig acds;
    std::string sensitivity = "none";  // none | label-fraction
    double sensitivity_gamma = 1.0;

    std::filesystem::path output_directory = "out";
    bool accuracy_series = true;
    std::size_t test_every = 1;
    std::size_t test_subset = 0;

    // Relative dataset paths resolve against base_dir.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;
    void validate() const;
};

// Reads either a config file or a run manifest (its "config" block).
ExperimentConfig load_config(const std::filesystem::path& path);

struct ExperimentResult {
    TrainHistory history;
    nlohmann::json manifest;
    std::filesystem::path directory;
    std::vector<std::filesystem::path> files;
    double final_metric = 0.0;
    std::string metric_name;
};

// Runs without touching the filesystem.
ExperimentResult simulate(const ExperimentConfig& config);
// Runs and writes manifest.json, history.csv and the optional series/audit
// files under output_root / config.output_directory. Files written before a
// failure are removed.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& output_root);

}  // namespace basil
