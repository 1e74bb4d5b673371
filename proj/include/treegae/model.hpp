#pragma once

// Graph auto-encoder: a stack of two-weight graph convolutions
//     H' = act(H W0 + D^-1 A_I H W1)
// followed by an RBF pairwise decoder alpha_ij = exp(-|z_i - z_j|^2 / 2).

#include "treegae/graph.hpp"
#include "treegae/tensor.hpp"

#include <cstdint>
#include <vector>

namespace treegae {

enum class Activation { Identity, Relu };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct ModelConfig {
    std::size_t num_layers = 3;
    std::size_t hidden_dim = 32;
    std::size_t input_dim = feature::kCount;
    Activation hidden_activation = Activation::Relu;
    Activation final_activation = Activation::Identity;

    /// Throws ContractError on a zero dimension.
    void check() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
    Matrix w0; // self term, d_in x d_out
    Matrix w1; // neighbour term, d_in x d_out

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

using ModelParams = std::vector<LayerParams>;

/// Glorot-uniform weights. Draw order: layer 0..L-1, w0 before w1, each in
/// row-major order, from one mt19937_64 stream seeded with `seed`.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Throws DimensionError when the parameter shapes do not fit the config.
void check_params(const ModelParams& params, const ModelConfig& config);

/// Parameters recorded on a tape as gradient-tracked leaves.
struct ParamVars {
    std::vector<Var> w0;
    std::vector<Var> w1;
};

ParamVars record_params(Tape& tape, const ModelParams& params);

/// Differentiable encoder. Returns H^(0) .. H^(L); the last entry is Z.
std::vector<Var> encode(Tape& tape, const RefinementInstance& instance, const ParamVars& params,
                        const ModelConfig& config);

/// Differentiable decoder producing the N x N soft adjacency.
Var decode(Var embedding);

struct ForwardTrace {
    std::vector<Matrix> hidden; // H^(0) = X ... H^(L) = Z
    Matrix embedding;
    Matrix soft_adjacency;
};

/// Value-only encode (no gradients retained beyond the call).
std::vector<Matrix> encode(const RefinementInstance& instance, const ModelParams& params,
                           const ModelConfig& config);

Matrix decode(const Matrix& embedding);

ForwardTrace forward(const RefinementInstance& instance, const ModelParams& params, const ModelConfig& config);

/// Binary adjacency with alpha_ij >= threshold off the diagonal.
Matrix predict_edges(const Matrix& soft_adjacency, double threshold);

} // namespace treegae
