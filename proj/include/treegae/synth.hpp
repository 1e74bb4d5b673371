#pragma once

// Synthetic airway-like trees: recursive bifurcation in 3-D with decaying
// radii, noisy Gaussian node features and a k-NN candidate graph.

#include "treegae/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace treegae {

struct GeneratorConfig {
    std::size_t max_depth = 6;
    double branch_prob = 0.85;        // chance a branch end spawns a second child
    std::size_t nodes_per_branch_min = 3;
    std::size_t nodes_per_branch_max = 6;
    double step_length = 2.0;
    double radius_root = 4.0;
    double radius_decay = 0.78;       // per generation
    double angle_jitter = 0.3;        // radians
    double branch_angle = 0.6;        // half-angle between sibling branches, radians
    double feature_noise_sigma = 0.15;
    std::size_t knn_k = 5;
    // Inclusive size window; trees outside it are regrown from the same
    // stream. 0 disables a bound.
    std::size_t min_nodes = 0;
    std::size_t max_nodes = 0;
    std::uint64_t seed = 0;

    void check() const;

    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Grows one tree. Candidate adjacency equals the target (call
/// build_overcomplete to add spurious candidates).
RefinementInstance generate_tree(const GeneratorConfig& config, std::uint64_t seed);

/// Candidate edges = symmetrised k-NN on observed positions, unioned with the
/// target edges. Throws ContractError when knn_k >= N.
RefinementInstance build_overcomplete(RefinementInstance instance, std::size_t knn_k);

/// generate_tree followed by build_overcomplete with config.knn_k.
RefinementInstance generate_instance(const GeneratorConfig& config, std::uint64_t seed, std::string id);

enum class Split { Train, Validation, Test };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct Dataset {
    std::vector<RefinementInstance> instances;
    std::vector<Split> splits; // parallel to instances

    std::vector<RefinementInstance> split(Split s) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Instance i (0-based over train, validation, test in that order) uses seed + i.
Dataset make_dataset(const GeneratorConfig& config, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                     std::uint64_t seed);

std::string dataset_to_string(const Dataset& dataset);
Dataset dataset_from_string(const std::string& text);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// |candidate edges| / |target edges| for one instance.
double candidate_ratio(const RefinementInstance& instance);

} // namespace treegae
