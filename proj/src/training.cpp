#include "treegae/training.hpp"

#include "treegae/errors.hpp"
#include "treegae/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace treegae {

void TrainConfig::check() const {
    if (!(learning_rate > 0.0)) {
        throw ContractError("learning_rate must be > 0");
    }
    if (batch_size == 0) {
        throw ContractError("batch_size must be >= 1");
    }
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
        throw ContractError("adam betas must lie in (0, 1)");
    }
    if (eval_every == 0) {
        throw ContractError("eval_every must be >= 1");
    }
}

namespace {

Matrix off_diagonal_mask(std::size_t n) {
    Matrix m(n, n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 0.0;
    }
    return m;
}

} // namespace

Var dice_loss(const Matrix& target, Var soft_adjacency, double loss_epsilon) {
    const Matrix& alpha = soft_adjacency.value();
    if (!target.same_shape(alpha) || target.rows() != target.cols()) {
        throw DimensionError("dice_loss: target " + target.shape_string() + " vs prediction " + alpha.shape_string());
    }
    Tape& tape = soft_adjacency.tape();
    const std::size_t n = target.rows();
    const Matrix mask = off_diagonal_mask(n);

    Matrix masked_target = target;
    double target_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            masked_target(i, j) *= mask(i, j);
            target_sq += masked_target(i, j) * masked_target(i, j);
        }
    }

    const Var off_diag_alpha = elementwise_mul(soft_adjacency, tape.leaf(mask, false));
    const Var overlap = sum_all(elementwise_mul(off_diag_alpha, tape.leaf(masked_target, false)));
    const Var alpha_sq = sum_all(elementwise_square(off_diag_alpha));
    const Var denominator = add_scalar(alpha_sq, target_sq + loss_epsilon);
    const Var ratio = divide(overlap, denominator);
    return add_scalar(scale(ratio, -2.0), 1.0);
}

double dice_loss(const Matrix& target, const Matrix& soft_adjacency, double loss_epsilon) {
    Tape tape;
    return dice_loss(target, tape.leaf(soft_adjacency, false), loss_epsilon).value()(0, 0);
}

AdamState AdamState::zeros_like(const ModelParams& params) {
    AdamState s;
    for (const auto& layer : params) {
        LayerParams z{Matrix(layer.w0.rows(), layer.w0.cols()), Matrix(layer.w1.rows(), layer.w1.cols())};
        s.first_moment.push_back(z);
        s.second_moment.push_back(std::move(z));
    }
    return s;
}

namespace {

void check_aligned(const ModelParams& a, const ModelParams& b, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string("adam_step: ") + what + " layer count mismatch");
    }
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (!a[l].w0.same_shape(b[l].w0) || !a[l].w1.same_shape(b[l].w1)) {
            throw DimensionError(std::string("adam_step: ") + what + " shape mismatch at layer " + std::to_string(l) +
                                 ": " + a[l].w0.shape_string() + " vs " + b[l].w0.shape_string());
        }
    }
}

void adam_update(Matrix& w, const Matrix& g, Matrix& m, Matrix& v, double step_size, const TrainConfig& c) {
    auto wv = w.values();
    auto gv = g.values();
    auto mv = m.values();
    auto vv = v.values();
    for (std::size_t i = 0; i < wv.size(); ++i) {
        mv[i] = c.adam_beta1 * mv[i] + (1.0 - c.adam_beta1) * gv[i];
        vv[i] = c.adam_beta2 * vv[i] + (1.0 - c.adam_beta2) * gv[i] * gv[i];
        wv[i] -= step_size * mv[i] / (std::sqrt(vv[i]) + c.adam_epsilon);
    }
}

} // namespace

void adam_step(ModelParams& params, const ModelParams& gradients, AdamState& state, const TrainConfig& config) {
    check_aligned(params, gradients, "gradient");
    check_aligned(params, state.first_moment, "first moment");
    check_aligned(params, state.second_moment, "second moment");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double step_size =
        config.learning_rate * std::sqrt(1.0 - std::pow(config.adam_beta2, t)) / (1.0 - std::pow(config.adam_beta1, t));
    for (std::size_t l = 0; l < params.size(); ++l) {
        adam_update(params[l].w0, gradients[l].w0, state.first_moment[l].w0, state.second_moment[l].w0, step_size,
                    config);
        adam_update(params[l].w1, gradients[l].w1, state.first_moment[l].w1, state.second_moment[l].w1, step_size,
                    config);
    }
}

LossAndGrad loss_and_gradient(const RefinementInstance& instance, const ModelParams& params,
                              const ModelConfig& model_config, double loss_epsilon) {
    check_params(params, model_config);
    Tape tape;
    const ParamVars vars = record_params(tape, params);
    const auto hidden = encode(tape, instance, vars, model_config);
    const Var loss = dice_loss(instance.target_adjacency, decode(hidden.back()), loss_epsilon);
    tape.backward(loss);

    LossAndGrad out;
    out.loss = loss.value()(0, 0);
    for (std::size_t l = 0; l < params.size(); ++l) {
        out.gradients.push_back({vars.w0[l].grad(), vars.w1[l].grad()});
    }
    return out;
}

double mean_dice_loss(std::span<const RefinementInstance> instances, const ModelParams& params,
                      const ModelConfig& model_config, double loss_epsilon) {
    if (instances.empty()) {
        throw ContractError("mean_dice_loss: empty set");
    }
    double total = 0.0;
    for (const auto& inst : instances) {
        total += dice_loss(inst.target_adjacency, forward(inst, params, model_config).soft_adjacency, loss_epsilon);
    }
    return total / static_cast<double>(instances.size());
}

double soft_dice_score(std::span<const RefinementInstance> instances, const ModelParams& params,
                       const ModelConfig& model_config, double loss_epsilon) {
    return 1.0 - mean_dice_loss(instances, params, model_config, loss_epsilon);
}

std::vector<std::size_t> epoch_order(std::size_t dataset_size, std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(std::uint64_t{epoch} >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(dataset_size);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

namespace {

void accumulate(ModelParams& into, const ModelParams& g) {
    for (std::size_t l = 0; l < into.size(); ++l) {
        for (auto [dst, src] : {std::pair{&into[l].w0, &g[l].w0}, std::pair{&into[l].w1, &g[l].w1}}) {
            auto d = dst->values();
            auto s = src->values();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += s[i];
            }
        }
    }
}

void scale_in_place(ModelParams& params, double c) {
    for (auto& layer : params) {
        for (double& x : layer.w0.values()) {
            x *= c;
        }
        for (double& x : layer.w1.values()) {
            x *= c;
        }
    }
}

} // namespace

EpochResult train_epoch(std::span<const RefinementInstance> dataset, TrainState& state,
                        const ModelConfig& model_config, const TrainConfig& config) {
    config.check();
    if (dataset.empty()) {
        throw ContractError("train_epoch: empty dataset");
    }
    if (state.adam.first_moment.empty()) {
        state.adam = AdamState::zeros_like(state.params);
    }
    const std::size_t epoch = state.epoch + 1;
    const auto order = epoch_order(dataset.size(), config.seed, epoch);

    EpochResult result;
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(stop));
        // Accumulate in id order so the sum does not depend on shuffle position.
        std::sort(batch.begin(), batch.end(),
                  [&](std::size_t a, std::size_t b) { return dataset[a].id < dataset[b].id; });

        ModelParams grad_sum = AdamState::zeros_like(state.params).first_moment;
        for (std::size_t idx : batch) {
            const auto lg = loss_and_gradient(dataset[idx], state.params, model_config, config.loss_epsilon);
            if (!std::isfinite(lg.loss)) {
                throw NumericError("non-finite loss on instance " + dataset[idx].id + " in epoch " +
                                   std::to_string(epoch));
            }
            loss_total += lg.loss;
            accumulate(grad_sum, lg.gradients);
        }
        scale_in_place(grad_sum, 1.0 / static_cast<double>(batch.size()));
        adam_step(state.params, grad_sum, state.adam, config);
        ++result.optimizer_steps;
    }
    state.epoch = epoch;
    result.mean_loss = loss_total / static_cast<double>(dataset.size());
    return result;
}

TrainResult train(std::span<const RefinementInstance> train_set, std::span<const RefinementInstance> validation_set,
                  const ModelConfig& model_config, const TrainConfig& config, std::optional<TrainState> initial,
                  std::optional<std::filesystem::path> checkpoint_path) {
    config.check();
    model_config.check();
    if (train_set.empty() || validation_set.empty()) {
        throw ContractError("train: training and validation sets must be nonempty");
    }
    std::set<std::string> train_ids;
    for (const auto& inst : train_set) {
        train_ids.insert(inst.id);
    }
    for (const auto& inst : validation_set) {
        if (train_ids.count(inst.id) != 0) {
            throw ContractError("train: instance '" + inst.id + "' is in both training and validation sets");
        }
    }

    TrainState state;
    if (initial) {
        state = std::move(*initial);
        check_params(state.params, model_config);
    } else {
        state.params = init_params(model_config, config.seed);
    }
    if (state.adam.first_moment.empty()) {
        state.adam = AdamState::zeros_like(state.params);
    }

    TrainResult result;
    result.best_params = state.params;
    result.history.checkpoint_path = checkpoint_path;

    while (state.epoch < config.epochs) {
        const auto t0 = std::chrono::steady_clock::now();
        const EpochResult er = train_epoch(train_set, state, model_config, config);
        EpochRecord rec;
        rec.epoch = state.epoch;
        rec.mean_train_loss = er.mean_loss;
        if (state.epoch % config.eval_every == 0 || state.epoch == config.epochs) {
            const double score = soft_dice_score(validation_set, state.params, model_config, config.loss_epsilon);
            rec.validation_dice = score;
            if (!result.history.best_validation_dice || score > *result.history.best_validation_dice) {
                result.history.best_validation_dice = score;
                result.history.best_epoch = state.epoch;
                result.best_params = state.params;
                if (checkpoint_path) {
                    save_checkpoint(Checkpoint{model_config, state.params, state.adam, config.seed, state.epoch},
                                    *checkpoint_path);
                }
            }
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.records.push_back(rec);
    }
    result.final_state = std::move(state);
    return result;
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream out;
    out << "epoch,mean_train_loss,val_dice,seconds\n";
    for (const auto& r : history.records) {
        out << r.epoch << ',' << format_real(r.mean_train_loss) << ',';
        if (r.validation_dice) {
            out << format_real(*r.validation_dice);
        }
        out << ',' << r.seconds << '\n';
    }
    return out.str();
}

} // namespace treegae
