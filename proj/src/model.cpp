#include "treegae/model.hpp"

#include "treegae/errors.hpp"

#include <cmath>
#include <random>

namespace treegae {

const char* activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "identity";
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") {
        return Activation::Relu;
    }
    if (name == "identity") {
        return Activation::Identity;
    }
    throw ParseError("unknown activation '" + name + "'");
}

void ModelConfig::check() const {
    if (num_layers == 0 || hidden_dim == 0 || input_dim == 0) {
        throw ContractError("model config needs layers, hidden_dim and input_dim >= 1");
    }
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.check();
    std::mt19937_64 rng(seed);
    ModelParams params;
    params.reserve(config.num_layers);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        const std::size_t d_in = l == 0 ? config.input_dim : config.hidden_dim;
        const std::size_t d_out = config.hidden_dim;
        const double bound = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        LayerParams layer{Matrix(d_in, d_out), Matrix(d_in, d_out)};
        for (double& w : layer.w0.values()) {
            w = dist(rng);
        }
        for (double& w : layer.w1.values()) {
            w = dist(rng);
        }
        params.push_back(std::move(layer));
    }
    return params;
}

void check_params(const ModelParams& params, const ModelConfig& config) {
    config.check();
    if (params.size() != config.num_layers) {
        throw DimensionError("model has " + std::to_string(params.size()) + " layers, config expects " +
                             std::to_string(config.num_layers));
    }
    for (std::size_t l = 0; l < params.size(); ++l) {
        const std::size_t d_in = l == 0 ? config.input_dim : config.hidden_dim;
        const Matrix expected(d_in, config.hidden_dim);
        for (const Matrix* w : {&params[l].w0, &params[l].w1}) {
            if (!w->same_shape(expected)) {
                throw DimensionError("layer " + std::to_string(l) + " weight is " + w->shape_string() +
                                     ", config expects " + expected.shape_string());
            }
        }
    }
}

ParamVars record_params(Tape& tape, const ModelParams& params) {
    ParamVars vars;
    for (const auto& layer : params) {
        vars.w0.push_back(tape.leaf(layer.w0));
        vars.w1.push_back(tape.leaf(layer.w1));
    }
    return vars;
}

std::vector<Var> encode(Tape& tape, const RefinementInstance& instance, const ParamVars& params,
                        const ModelConfig& config) {
    config.check();
    if (params.w0.size() != config.num_layers || params.w1.size() != config.num_layers) {
        throw DimensionError("encode: parameter count does not match num_layers");
    }
    if (instance.candidate_adjacency.rows() != instance.n() || instance.candidate_adjacency.cols() != instance.n()) {
        throw DimensionError("encode: candidate adjacency " + instance.candidate_adjacency.shape_string() +
                             " for " + std::to_string(instance.n()) + " nodes");
    }
    const Var propagation = tape.leaf(row_normalize(instance.candidate_adjacency), false);
    std::vector<Var> hidden{tape.leaf(instance.features, false)};
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        const Var h = hidden.back();
        const Var self_term = matmul(h, params.w0[l]);
        const Var neighbour_term = matmul(matmul(propagation, h), params.w1[l]);
        const Var pre = add(self_term, neighbour_term);
        const bool last = l + 1 == config.num_layers;
        const Activation act = last ? config.final_activation : config.hidden_activation;
        hidden.push_back(act == Activation::Relu ? relu(pre) : pre);
    }
    return hidden;
}

Var decode(Var embedding) {
    return elementwise_exp(scale(pairwise_sq_dist(embedding), -0.5));
}

std::vector<Matrix> encode(const RefinementInstance& instance, const ModelParams& params,
                           const ModelConfig& config) {
    check_params(params, config);
    Tape tape;
    const auto vars = record_params(tape, params);
    std::vector<Matrix> hidden;
    for (Var h : encode(tape, instance, vars, config)) {
        hidden.push_back(h.value());
    }
    return hidden;
}

Matrix decode(const Matrix& embedding) {
    Tape tape;
    return decode(tape.leaf(embedding, false)).value();
}

ForwardTrace forward(const RefinementInstance& instance, const ModelParams& params, const ModelConfig& config) {
    ForwardTrace trace;
    trace.hidden = encode(instance, params, config);
    trace.embedding = trace.hidden.back();
    trace.soft_adjacency = decode(trace.embedding);
    return trace;
}

Matrix predict_edges(const Matrix& soft_adjacency, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ContractError("threshold must lie in (0, 1), got " + std::to_string(threshold));
    }
    if (soft_adjacency.rows() != soft_adjacency.cols()) {
        throw DimensionError("predict_edges: " + soft_adjacency.shape_string() + " is not square");
    }
    const std::size_t n = soft_adjacency.rows();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // Decide on the upper triangle only so the result is symmetric.
            const double v = soft_adjacency(i, j) >= threshold ? 1.0 : 0.0;
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

} // namespace treegae
