#include "cli.hpp"

#include "treegae/errors.hpp"
#include "treegae/io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace treegae::cli {

nlohmann::json to_json(const RunConfig& c) {
    const auto& g = c.generator;
    const auto& t = c.train;
    return {
        {"seed", c.seed},
        {"generator",
         {{"max_depth", g.max_depth},
          {"branch_prob", g.branch_prob},
          {"nodes_per_branch_min", g.nodes_per_branch_min},
          {"nodes_per_branch_max", g.nodes_per_branch_max},
          {"step_length", g.step_length},
          {"radius_root", g.radius_root},
          {"radius_decay", g.radius_decay},
          {"angle_jitter", g.angle_jitter},
          {"branch_angle", g.branch_angle},
          {"feature_noise_sigma", g.feature_noise_sigma},
          {"knn_k", g.knn_k},
          {"min_nodes", g.min_nodes},
          {"max_nodes", g.max_nodes}}},
        {"dataset", {{"train", c.n_train}, {"val", c.n_val}, {"test", c.n_test}}},
        {"model", nlohmann::json::parse(model_config_json(c.model))},
        {"train",
         {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_epsilon", t.adam_epsilon},
          {"eval_every", t.eval_every},
          {"loss_epsilon", t.loss_epsilon}}},
        {"eval", {{"threshold", c.eval.threshold}, {"spacing", c.eval.spacing}, {"split", c.split}}},
        {"sweep", {{"sizes", c.sweep_sizes}, {"hidden", c.sweep_hidden}}},
        {"paths",
         {{"data", c.data}, {"out", c.out}, {"checkpoint", c.checkpoint}, {"init", c.init}, {"resume", c.resume}}},
    };
}

namespace {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& field) {
    if (j.contains(key)) {
        field = j.at(key).get<T>();
    }
}

} // namespace

void merge_json(RunConfig& c, const nlohmann::json& j) {
    try {
        take(j, "seed", c.seed);
        if (j.contains("generator")) {
            const auto& g = j["generator"];
            auto& o = c.generator;
            take(g, "max_depth", o.max_depth);
            take(g, "branch_prob", o.branch_prob);
            take(g, "nodes_per_branch_min", o.nodes_per_branch_min);
            take(g, "nodes_per_branch_max", o.nodes_per_branch_max);
            take(g, "step_length", o.step_length);
            take(g, "radius_root", o.radius_root);
            take(g, "radius_decay", o.radius_decay);
            take(g, "angle_jitter", o.angle_jitter);
            take(g, "branch_angle", o.branch_angle);
            take(g, "feature_noise_sigma", o.feature_noise_sigma);
            take(g, "knn_k", o.knn_k);
            take(g, "min_nodes", o.min_nodes);
            take(g, "max_nodes", o.max_nodes);
        }
        if (j.contains("dataset")) {
            take(j["dataset"], "train", c.n_train);
            take(j["dataset"], "val", c.n_val);
            take(j["dataset"], "test", c.n_test);
        }
        if (j.contains("model")) {
            nlohmann::json merged = to_json(c)["model"];
            merged.update(j["model"]);
            c.model = read_model_config(merged);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            auto& o = c.train;
            take(t, "learning_rate", o.learning_rate);
            take(t, "batch_size", o.batch_size);
            take(t, "epochs", o.epochs);
            take(t, "adam_beta1", o.adam_beta1);
            take(t, "adam_beta2", o.adam_beta2);
            take(t, "adam_epsilon", o.adam_epsilon);
            take(t, "eval_every", o.eval_every);
            take(t, "loss_epsilon", o.loss_epsilon);
        }
        if (j.contains("eval")) {
            take(j["eval"], "threshold", c.eval.threshold);
            take(j["eval"], "spacing", c.eval.spacing);
            take(j["eval"], "split", c.split);
        }
        if (j.contains("sweep")) {
            take(j["sweep"], "sizes", c.sweep_sizes);
            take(j["sweep"], "hidden", c.sweep_hidden);
        }
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            take(p, "data", c.data);
            take(p, "out", c.out);
            take(p, "checkpoint", c.checkpoint);
            take(p, "init", c.init);
            take(p, "resume", c.resume);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
}

std::uint64_t sweep_cell_seed(std::uint64_t base, std::size_t train_size, std::size_t hidden_units) {
    return base + 1000 * static_cast<std::uint64_t>(train_size) + static_cast<std::uint64_t>(hidden_units);
}

namespace {

/// Value of --config, if present, so file values can become flag defaults.
std::string find_config_path(int argc, const char* const* argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            return argv[i + 1];
        }
        if (a.rfind("--config=", 0) == 0) {
            return a.substr(9);
        }
    }
    return {};
}

void add_shared(CLI::App& cmd, RunConfig& c, std::string& config_path, const char* out_help) {
    cmd.add_option("--config", config_path, "JSON config file; explicit flags override its values");
    cmd.add_option("--seed", c.seed, "Base RNG seed");
    cmd.add_option("--out", c.out, out_help);
}

void add_generator_flags(CLI::App& cmd, RunConfig& c) {
    auto& g = c.generator;
    cmd.add_option("--max-depth", g.max_depth, "Maximum branching generation");
    cmd.add_option("--branch-prob", g.branch_prob, "Probability that a branch end bifurcates")
        ->check(CLI::Range(0.0, 1.0));
    cmd.add_option("--nodes-min", g.nodes_per_branch_min, "Minimum nodes per branch");
    cmd.add_option("--nodes-max", g.nodes_per_branch_max, "Maximum nodes per branch");
    cmd.add_option("--step-length", g.step_length, "Distance between consecutive nodes");
    cmd.add_option("--radius-root", g.radius_root, "Root branch radius");
    cmd.add_option("--radius-decay", g.radius_decay, "Radius factor per generation");
    cmd.add_option("--angle-jitter", g.angle_jitter, "Branch direction jitter (radians)");
    cmd.add_option("--branch-angle", g.branch_angle, "Half-angle between sibling branches (radians)");
    cmd.add_option("--noise-sigma", g.feature_noise_sigma, "Feature noise scale");
    cmd.add_option("--knn-k", g.knn_k, "Neighbours per node in the candidate graph");
    cmd.add_option("--min-nodes", g.min_nodes, "Regrow trees with fewer nodes (0: off)");
    cmd.add_option("--max-nodes", g.max_nodes, "Regrow trees with more nodes (0: off)");
}

void add_train_flags(CLI::App& cmd, RunConfig& c) {
    auto& t = c.train;
    cmd.add_option("--layers", c.model.num_layers, "Graph convolution layers");
    cmd.add_option("--hidden", c.model.hidden_dim, "Hidden units per layer");
    cmd.add_option("--lr", t.learning_rate, "Adam learning rate");
    cmd.add_option("--batch", t.batch_size, "Graphs per optimizer step");
    cmd.add_option("--epochs", t.epochs, "Total training epochs");
    cmd.add_option("--beta1", t.adam_beta1, "Adam first-moment decay");
    cmd.add_option("--beta2", t.adam_beta2, "Adam second-moment decay");
    cmd.add_option("--adam-eps", t.adam_epsilon, "Adam epsilon");
    cmd.add_option("--loss-eps", t.loss_epsilon, "Dice loss denominator epsilon");
    cmd.add_option("--eval-every", t.eval_every, "Epochs between validation passes");
}

void echo_config(const RunConfig& c, const fs::path& path) {
    write_text_file(path, to_json(c).dump(2) + "\n");
}

fs::path require_out_dir(const RunConfig& c) {
    if (c.out.empty()) {
        throw ContractError("--out is required");
    }
    const fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
    return dir;
}

Dataset require_dataset(const RunConfig& c) {
    if (c.data.empty()) {
        throw ContractError("--data is required");
    }
    return load_dataset(c.data);
}

void check_dataset_fits(const Dataset& d, const ModelConfig& config) {
    for (const auto& inst : d.instances) {
        if (inst.features.cols() != config.input_dim) {
            throw DimensionError("instance " + inst.id + " has " + std::to_string(inst.features.cols()) +
                                 " features but the model expects input_dim " + std::to_string(config.input_dim));
        }
    }
}

void validate_all(const Dataset& d) {
    for (const auto& inst : d.instances) {
        const auto report = validate(inst);
        if (!report.ok()) {
            throw ParseError("instance " + inst.id + " is invalid: " + report.violations.front());
        }
    }
}

int cmd_generate(const RunConfig& c, std::ostream& out) {
    if (c.out.empty()) {
        throw ContractError("--out is required");
    }
    const Dataset d = make_dataset(c.generator, c.n_train, c.n_val, c.n_test, c.seed);
    save_dataset(d, c.out);
    echo_config(c, c.out + ".config.json");
    double nodes = 0.0;
    double ratio = 0.0;
    for (const auto& inst : d.instances) {
        nodes += static_cast<double>(inst.n());
        ratio += candidate_ratio(inst);
    }
    const double count = std::max<double>(1.0, static_cast<double>(d.instances.size()));
    out << "instances " << d.instances.size() << "  mean_nodes " << nodes / count << "  candidate/target "
        << ratio / count << "\n";
    return kOk;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
    const Dataset d = require_dataset(c);
    validate_all(d);
    check_dataset_fits(d, c.model);
    const fs::path dir = require_out_dir(c);
    const auto train_set = d.split(Split::Train);
    const auto val_set = d.split(Split::Validation);
    if (train_set.empty() || val_set.empty()) {
        throw ContractError("dataset needs nonempty train and validation splits");
    }

    std::optional<TrainState> initial;
    if (!c.resume.empty()) {
        Checkpoint ck = load_checkpoint(c.resume);
        if (!(ck.config == c.model)) {
            throw DimensionError("resume checkpoint model config " + model_config_json(ck.config) +
                                 " differs from " + model_config_json(c.model));
        }
        initial = TrainState{ck.params, ck.optimizer.value_or(AdamState::zeros_like(ck.params)), ck.epoch};
    } else if (!c.init.empty()) {
        Checkpoint ck = load_checkpoint(c.init);
        check_params(ck.params, c.model);
        initial = TrainState{ck.params, AdamState::zeros_like(ck.params), 0};
    }

    out << "config layers=" << c.model.num_layers << " hidden=" << c.model.hidden_dim
        << " lr=" << c.train.learning_rate << " batch=" << c.train.batch_size << " epochs=" << c.train.epochs << "\n";
    echo_config(c, dir / "config.json");

    TrainConfig tc = c.train;
    tc.seed = c.seed;
    const fs::path best_path = dir / "checkpoint.json";
    TrainResult r = train(train_set, val_set, c.model, tc, initial, best_path);
    if (!r.history.best_epoch) {
        // No validation pass ran (e.g. --epochs 0): the starting weights are the result.
        save_checkpoint(Checkpoint{c.model, r.best_params, r.final_state.adam, c.seed, r.final_state.epoch}, best_path);
    }
    save_checkpoint(Checkpoint{c.model, r.final_state.params, r.final_state.adam, c.seed, r.final_state.epoch},
                    dir / "final.json");
    write_text_file(dir / "train_log.csv", history_csv(r.history));
    if (r.history.best_epoch) {
        out << "best epoch " << *r.history.best_epoch << "  val_dice " << *r.history.best_validation_dice << "\n";
    }
    out << "wrote " << best_path.string() << "\n";
    return kOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
    const Dataset d = require_dataset(c);
    validate_all(d);
    if (c.checkpoint.empty()) {
        throw ContractError("--checkpoint is required");
    }
    const Checkpoint ck = load_checkpoint(c.checkpoint);
    check_dataset_fits(d, ck.config);
    const auto instances = d.split(parse_split(c.split));
    if (instances.empty()) {
        throw ContractError("split '" + c.split + "' is empty");
    }
    const fs::path dir = require_out_dir(c);
    echo_config(c, dir / "config.json");
    const EvalReport report = evaluate(ck.params, ck.config, instances, c.eval);
    write_text_file(dir / "report.csv", report_csv(report));
    write_text_file(dir / "report.json", report_json(report));

    out << std::fixed << std::setprecision(3);
    out << "split " << c.split << " (" << instances.size() << " instances)\n";
    out << "d_FN " << report.d_fn.mean << "  d_FP " << report.d_fp.mean << "  d_err " << report.d_err.mean << " +- "
        << report.d_err.std << "\n";
    out << "edge precision " << report.edge_precision.mean << "  recall " << report.edge_recall.mean << "  dice "
        << report.edge_dice.mean << "\n";
    return kOk;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y);

int cmd_sweep(const RunConfig& c, std::ostream& out) {
    if (c.sweep_sizes.empty() || c.sweep_hidden.empty()) {
        throw ContractError("sweep needs at least one size and one hidden setting");
    }
    const std::size_t largest = *std::max_element(c.sweep_sizes.begin(), c.sweep_sizes.end());
    Dataset d = c.data.empty() ? make_dataset(c.generator, largest, c.n_val, 0, c.seed) : load_dataset(c.data);
    validate_all(d);
    check_dataset_fits(d, c.model);
    const auto train_pool = d.split(Split::Train);
    const auto val_set = d.split(Split::Validation);
    if (train_pool.size() < largest || val_set.empty()) {
        throw ContractError("sweep needs " + std::to_string(largest) + " training instances and a validation split");
    }
    const fs::path dir = require_out_dir(c);
    echo_config(c, dir / "config.json");

    std::vector<std::size_t> sizes = c.sweep_sizes;
    std::vector<std::size_t> hidden = c.sweep_hidden;
    std::sort(sizes.begin(), sizes.end());
    std::sort(hidden.begin(), hidden.end());

    std::ostringstream csv;
    csv << "train_size,hidden_units,val_dice,seed\n";
    for (std::size_t h : hidden) {
        std::vector<double> xs;
        std::vector<double> ys;
        for (std::size_t s : sizes) {
            ModelConfig mc = c.model;
            mc.hidden_dim = h;
            TrainConfig tc = c.train;
            tc.seed = sweep_cell_seed(c.seed, s, h);
            const std::span<const RefinementInstance> subset(train_pool.data(), s);
            const TrainResult r = train(subset, val_set, mc, tc);
            const double score = r.history.best_validation_dice
                                     ? *r.history.best_validation_dice
                                     : soft_dice_score(val_set, r.best_params, mc, tc.loss_epsilon);
            csv << s << ',' << h << ',' << format_real(score) << ',' << tc.seed << '\n';
            out << "train_size " << s << "  hidden " << h << "  val_dice " << score << "\n";
            xs.push_back(static_cast<double>(s));
            ys.push_back(score);
        }
        out << "hidden " << h << "  spearman(train_size, val_dice) " << spearman(xs, ys) << "\n";
    }
    write_text_file(dir / "sweep.csv", csv.str());
    out << "wrote " << (dir / "sweep.csv").string() << "\n";
    return kOk;
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
            ++j;
        }
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxx == 0.0 || syy == 0.0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig c;
    std::string config_path;
    try {
        config_path = find_config_path(argc, argv);
        if (!config_path.empty()) {
            merge_json(c, parse_json(read_text_file(config_path), config_path));
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    }

    CLI::App app{"Graph auto-encoder for tree refinement on synthetic airway-like graphs"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset file");
    add_shared(*gen, c, config_path, "Dataset file to write");
    gen->add_option("--train", c.n_train, "Training instances");
    gen->add_option("--val", c.n_val, "Validation instances");
    gen->add_option("--test", c.n_test, "Test instances");
    add_generator_flags(*gen, c);

    auto* trn = app.add_subcommand("train", "Train a model and write checkpoint.json, final.json and train_log.csv");
    add_shared(*trn, c, config_path, "Output directory");
    trn->add_option("--data", c.data, "Dataset file (train and validation splits are used)");
    trn->add_option("--init", c.init, "Start from these weights with fresh optimizer state (pre-training)");
    trn->add_option("--resume", c.resume, "Continue a run from a final.json checkpoint");
    add_train_flags(*trn, c);

    auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint and write report.csv and report.json");
    add_shared(*evl, c, config_path, "Output directory");
    evl->add_option("--data", c.data, "Dataset file");
    evl->add_option("--checkpoint", c.checkpoint, "Checkpoint to evaluate");
    evl->add_option("--split", c.split, "Split to evaluate: train, validation or test")
        ->check(CLI::IsMember({"train", "validation", "val", "test"}));
    evl->add_option("--threshold", c.eval.threshold, "Edge threshold on the soft adjacency")
        ->check(CLI::Range(0.0, 1.0));
    evl->add_option("--spacing", c.eval.spacing, "Centerline sample spacing");

    auto* swp = app.add_subcommand("sweep", "Validation dice versus training-set size and hidden units");
    add_shared(*swp, c, config_path, "Output directory");
    swp->add_option("--data", c.data, "Dataset file; generated from the generator flags when omitted");
    swp->add_option("--sizes", c.sweep_sizes, "Training-set sizes")->delimiter(',');
    swp->add_option("--hidden-units", c.sweep_hidden, "Hidden-unit settings")->delimiter(',');
    swp->add_option("--val", c.n_val, "Validation instances when generating");
    add_generator_flags(*swp, c);
    add_train_flags(*swp, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e, out, err);
        }
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (*gen) {
            return cmd_generate(c, out);
        }
        if (*trn) {
            return cmd_train(c, out);
        }
        if (*evl) {
            return cmd_eval(c, out);
        }
        return cmd_sweep(c, out);
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
}

} // namespace treegae::cli
