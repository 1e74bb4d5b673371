#include "treegae/graph.hpp"

#include "treegae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace treegae {

namespace {

std::vector<Point3> positions_from(const Matrix& m) {
    std::vector<Point3> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out[i] = {m(i, feature::kPosX), m(i, feature::kPosY), m(i, feature::kPosZ)};
    }
    return out;
}

void check_adjacency(const Matrix& a, std::size_t n, const std::string& name,
                     std::vector<std::string>& out) {
    if (a.rows() != n || a.cols() != n) {
        out.push_back(name + " adjacency has shape " + a.shape_string() + ", expected " +
                      std::to_string(n) + "x" + std::to_string(n));
        return;
    }
    bool binary = true;
    bool symmetric = true;
    bool zero_diagonal = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (a(i, i) != 0.0) {
            zero_diagonal = false;
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double v = a(i, j);
            if (v != 0.0 && v != 1.0) {
                binary = false;
            }
            if (v != a(j, i)) {
                symmetric = false;
            }
        }
    }
    if (!binary) {
        out.push_back(name + " adjacency not binary");
    }
    if (!symmetric) {
        out.push_back(name + " adjacency not symmetric");
    }
    if (!zero_diagonal) {
        out.push_back(name + " adjacency has self-loops");
    }
}

} // namespace

std::vector<Point3> observed_positions(const RefinementInstance& instance) {
    return positions_from(instance.features);
}

std::vector<Point3> reference_positions(const RefinementInstance& instance) {
    return instance.true_means ? positions_from(*instance.true_means) : positions_from(instance.features);
}

ValidationReport validate(const RefinementInstance& instance) {
    ValidationReport report;
    auto& v = report.violations;
    const std::size_t n = instance.features.rows();

    if (n == 0) {
        v.push_back("instance has no nodes");
    }
    if (instance.features.cols() != feature::kCount) {
        v.push_back("features have " + std::to_string(instance.features.cols()) + " columns, expected 14");
    } else {
        if (!instance.features.all_finite()) {
            v.push_back("features contain non-finite values");
        }
        for (std::size_t i = 0; i < n; ++i) {
            bool negative_variance = false;
            for (std::size_t c = feature::kVarianceOffset; c < feature::kCount; ++c) {
                negative_variance |= instance.features(i, c) < 0.0;
            }
            if (negative_variance) {
                v.push_back("node " + std::to_string(i) + " has negative variance");
            }
            const double ox = instance.features(i, feature::kOrientX);
            const double oy = instance.features(i, feature::kOrientY);
            const double oz = instance.features(i, feature::kOrientZ);
            const double norm = std::sqrt(ox * ox + oy * oy + oz * oz);
            if (!(norm >= 0.99 && norm <= 1.01)) {
                v.push_back("node " + std::to_string(i) + " orientation norm " + std::to_string(norm) +
                            " outside [0.99, 1.01]");
            }
        }
    }
    if (instance.true_means &&
        (instance.true_means->rows() != n || instance.true_means->cols() != feature::kMeanCount)) {
        v.push_back("true means have shape " + instance.true_means->shape_string());
    }

    const std::size_t before = v.size();
    check_adjacency(instance.candidate_adjacency, n, "candidate", v);
    check_adjacency(instance.target_adjacency, n, "target", v);
    if (v.size() != before) {
        return report;
    }

    bool contained = true;
    for (std::size_t i = 0; i < n && contained; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (instance.target_adjacency(i, j) == 1.0 && instance.candidate_adjacency(i, j) != 1.0) {
                contained = false;
                break;
            }
        }
    }
    if (!contained) {
        v.push_back("target edge not in candidates");
    }

    const std::size_t edges = edge_list(instance.target_adjacency).size();
    const std::size_t components = connected_components(instance.target_adjacency);
    if (edges != n - components) {
        v.push_back("target adjacency is not a forest (" + std::to_string(edges) + " edges, " +
                    std::to_string(components) + " components)");
    }
    return report;
}

std::vector<double> degrees(const Matrix& adjacency) {
    std::vector<double> d(adjacency.rows(), 0.0);
    for (std::size_t i = 0; i < adjacency.rows(); ++i) {
        for (double x : adjacency.row(i)) {
            d[i] += x;
        }
    }
    return d;
}

Matrix row_normalize(const Matrix& adjacency) {
    Matrix out = adjacency;
    const auto d = degrees(adjacency);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        if (d[i] > 0.0) {
            for (double& x : out.row(i)) {
                x /= d[i];
            }
        }
    }
    return out;
}

namespace {

void check_permutation(const std::vector<std::size_t>& perm, std::size_t n) {
    if (perm.size() != n) {
        throw ContractError("permutation has " + std::to_string(perm.size()) + " entries for " +
                            std::to_string(n) + " nodes");
    }
    std::vector<bool> seen(n, false);
    for (std::size_t p : perm) {
        if (p >= n || seen[p]) {
            throw ContractError("permutation is not a bijection");
        }
        seen[p] = true;
    }
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto src = m.row(i);
        std::copy(src.begin(), src.end(), out.row(perm[i]).begin());
    }
    return out;
}

} // namespace

Matrix permute_square(const Matrix& m, const std::vector<std::size_t>& perm) {
    if (m.rows() != m.cols()) {
        throw DimensionError("permute_square: " + m.shape_string() + " is not square");
    }
    check_permutation(perm, m.rows());
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(perm[i], perm[j]) = m(i, j);
        }
    }
    return out;
}

RefinementInstance permute(const RefinementInstance& instance, const std::vector<std::size_t>& perm) {
    check_permutation(perm, instance.n());
    RefinementInstance out;
    out.id = instance.id;
    out.features = permute_rows(instance.features, perm);
    out.candidate_adjacency = permute_square(instance.candidate_adjacency, perm);
    out.target_adjacency = permute_square(instance.target_adjacency, perm);
    if (instance.true_means) {
        out.true_means = permute_rows(*instance.true_means, perm);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> edge_list(const Matrix& adjacency) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < adjacency.rows(); ++i) {
        for (std::size_t j = i + 1; j < adjacency.cols(); ++j) {
            if (adjacency(i, j) != 0.0) {
                edges.emplace_back(i, j);
            }
        }
    }
    return edges;
}

Matrix adjacency_from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    Matrix a(n, n);
    for (auto [i, j] : edges) {
        if (i >= n || j >= n) {
            throw DimensionError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                 ") out of range for " + std::to_string(n) + " nodes");
        }
        if (i == j) {
            throw ContractError("self-loop on node " + std::to_string(i));
        }
        a(i, j) = 1.0;
        a(j, i) = 1.0;
    }
    return a;
}

std::size_t connected_components(const Matrix& adjacency) {
    const std::size_t n = adjacency.rows();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::size_t components = n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (adjacency(i, j) != 0.0 || adjacency(j, i) != 0.0) {
                const std::size_t a = find(i);
                const std::size_t b = find(j);
                if (a != b) {
                    parent[a] = b;
                    --components;
                }
            }
        }
    }
    return components;
}

} // namespace treegae
