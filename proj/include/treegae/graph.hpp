#pragma once

#include "treegae/tensor.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace treegae {

/// Per-node feature layout: 7 Gaussian means followed by their 7 variances.
namespace feature {
inline constexpr std::size_t kRadius = 0;
inline constexpr std::size_t kPosX = 1;
inline constexpr std::size_t kPosY = 2;
inline constexpr std::size_t kPosZ = 3;
inline constexpr std::size_t kOrientX = 4;
inline constexpr std::size_t kOrientY = 5;
inline constexpr std::size_t kOrientZ = 6;
inline constexpr std::size_t kMeanCount = 7;
inline constexpr std::size_t kVarianceOffset = 7;
inline constexpr std::size_t kCount = 14;
} // namespace feature

/// One graph-refinement problem: noisy node features, an over-complete
/// candidate adjacency and the target (tree) adjacency it contains.
struct RefinementInstance {
    std::string id;
    Matrix features;            // N x 14
    Matrix candidate_adjacency; // N x N, binary, symmetric, zero diagonal
    Matrix target_adjacency;    // N x N, subset of candidates, a forest

    /// Noise-free means (N x 7) when the generator knows them. Used as the
    /// reference geometry in evaluation; absent for externally built graphs.
    std::optional<Matrix> true_means;

    std::size_t n() const { return features.rows(); }

    friend bool operator==(const RefinementInstance&, const RefinementInstance&) = default;
};

using Point3 = std::array<double, 3>;

/// Observed mean positions (columns 1..3).
std::vector<Point3> observed_positions(const RefinementInstance& instance);

/// Noise-free positions when known, otherwise the observed ones.
std::vector<Point3> reference_positions(const RefinementInstance& instance);

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks every structural invariant and reports all violations found.
ValidationReport validate(const RefinementInstance& instance);

/// D_ii = sum_j A_ij.
std::vector<double> degrees(const Matrix& adjacency);

/// D^-1 A with all-zero rows left as zero (isolated nodes).
Matrix row_normalize(const Matrix& adjacency);

/// Relabels nodes so that old node i becomes new node perm[i].
RefinementInstance permute(const RefinementInstance& instance, const std::vector<std::size_t>& perm);

/// Applies the same relabeling to a square node-indexed matrix.
Matrix permute_square(const Matrix& m, const std::vector<std::size_t>& perm);

/// Sorted unordered edge list (i < j) of a symmetric adjacency.
std::vector<std::pair<std::size_t, std::size_t>> edge_list(const Matrix& adjacency);

Matrix adjacency_from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

std::size_t connected_components(const Matrix& adjacency);

} // namespace treegae
