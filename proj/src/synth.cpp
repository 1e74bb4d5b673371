#include "treegae/synth.hpp"

#include "treegae/errors.hpp"
#include "treegae/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <optional>
#include <random>

namespace treegae {

void GeneratorConfig::check() const {
    if (!(branch_prob >= 0.0 && branch_prob <= 1.0)) {
        throw ContractError("branch_prob must lie in [0, 1]");
    }
    if (nodes_per_branch_min == 0 || nodes_per_branch_max < nodes_per_branch_min) {
        throw ContractError("nodes_per_branch range must be nonempty and start at >= 1");
    }
    if (!(step_length > 0.0) || !(radius_root > 0.0) || !(angle_jitter >= 0.0) || !(feature_noise_sigma >= 0.0) ||
        !(branch_angle >= 0.0)) {
        throw ContractError("generator lengths and noise scales must be positive");
    }
    if (!(radius_decay > 0.0 && radius_decay < 1.0)) {
        throw ContractError("radius_decay must lie in (0, 1)");
    }
    if (knn_k == 0) {
        throw ContractError("knn_k must be >= 1");
    }
    if (max_nodes != 0 && min_nodes > max_nodes) {
        throw ContractError("min_nodes exceeds max_nodes");
    }
}

namespace {

using Vec3 = std::array<double, 3>;

Vec3 operator+(Vec3 a, Vec3 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator*(double s, Vec3 a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(Vec3 a, Vec3 b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(Vec3 a) {
    const double n = norm(a);
    return {a[0] / n, a[1] / n, a[2] / n};
}

Vec3 gaussian3(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v;
    for (double& x : v) {
        x = n(rng);
    }
    return v;
}

// Random unit vector orthogonal to the unit vector d.
Vec3 random_perpendicular(Vec3 d, std::mt19937_64& rng) {
    for (;;) {
        Vec3 g = gaussian3(rng);
        g = g + (-dot(g, d)) * d;
        if (norm(g) > 1e-6) {
            return normalized(g);
        }
    }
}

// Tilts d by a random perpendicular offset of scale `sigma` (small-angle jitter).
Vec3 jitter(Vec3 d, double sigma, std::mt19937_64& rng) {
    if (sigma == 0.0) {
        return d;
    }
    Vec3 g = gaussian3(rng);
    g = g + (-dot(g, d)) * d;
    return normalized(d + sigma * g);
}

struct PendingBranch {
    std::optional<std::size_t> parent;
    Vec3 start;
    Vec3 direction;
    std::size_t generation = 0;
};

struct GrownTree {
    std::vector<double> radius;
    std::vector<Vec3> position;
    std::vector<Vec3> orientation;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
};

GrownTree grow(const GeneratorConfig& c, std::mt19937_64& rng) {
    GrownTree t;
    std::uniform_int_distribution<std::size_t> branch_len(c.nodes_per_branch_min, c.nodes_per_branch_max);
    std::bernoulli_distribution bifurcate(c.branch_prob);

    std::deque<PendingBranch> queue;
    queue.push_back({std::nullopt, {0.0, 0.0, 0.0}, {0.0, 0.0, -1.0}, 0});
    while (!queue.empty()) {
        const PendingBranch b = queue.front();
        queue.pop_front();
        const double r = c.radius_root * std::pow(c.radius_decay, static_cast<double>(b.generation));
        const std::size_t count = branch_len(rng);
        Vec3 pos = b.start;
        Vec3 dir = b.direction;
        std::optional<std::size_t> prev = b.parent;
        for (std::size_t k = 0; k < count; ++k) {
            if (k > 0) {
                dir = jitter(dir, 0.25 * c.angle_jitter, rng);
                pos = pos + c.step_length * dir;
            }
            const std::size_t id = t.radius.size();
            t.radius.push_back(r);
            t.position.push_back(pos);
            t.orientation.push_back(dir);
            if (prev) {
                t.edges.emplace_back(*prev, id);
            }
            prev = id;
        }
        if (b.generation >= c.max_depth) {
            continue;
        }
        const Vec3 tip = t.position[*prev];
        if (bifurcate(rng)) {
            const Vec3 u = random_perpendicular(dir, rng);
            const double ca = std::cos(c.branch_angle);
            const double sa = std::sin(c.branch_angle);
            for (double side : {1.0, -1.0}) {
                const Vec3 child = jitter(normalized(ca * dir + (side * sa) * u), c.angle_jitter, rng);
                queue.push_back({prev, tip + c.step_length * child, child, b.generation + 1});
            }
        } else {
            const Vec3 child = jitter(dir, c.angle_jitter, rng);
            queue.push_back({prev, tip + c.step_length * child, child, b.generation + 1});
        }
    }
    return t;
}

bool size_ok(const GeneratorConfig& c, std::size_t n) {
    return n >= c.min_nodes && (c.max_nodes == 0 || n <= c.max_nodes);
}

} // namespace

RefinementInstance generate_tree(const GeneratorConfig& config, std::uint64_t seed) {
    config.check();
    std::mt19937_64 rng(seed);
    GrownTree t = grow(config, rng);
    for (int attempt = 1; !size_ok(config, t.radius.size()); ++attempt) {
        if (attempt >= 10000) {
            throw ContractError("generator could not meet the node-count window");
        }
        t = grow(config, rng);
    }

    const std::size_t n = t.radius.size();
    const double sigma = config.feature_noise_sigma;
    const double var = sigma * sigma;
    std::normal_distribution<double> noise(0.0, 1.0);

    RefinementInstance inst;
    inst.features = Matrix(n, feature::kCount);
    Matrix truth(n, feature::kMeanCount);
    for (std::size_t i = 0; i < n; ++i) {
        truth(i, feature::kRadius) = t.radius[i];
        for (std::size_t d = 0; d < 3; ++d) {
            truth(i, feature::kPosX + d) = t.position[i][d];
            truth(i, feature::kOrientX + d) = t.orientation[i][d];
        }

        auto row = inst.features.row(i);
        row[feature::kRadius] = t.radius[i] * std::exp(sigma * noise(rng));
        for (std::size_t d = 0; d < 3; ++d) {
            row[feature::kPosX + d] = t.position[i][d] + sigma * noise(rng);
        }
        Vec3 o = t.orientation[i] + sigma * gaussian3(rng);
        o = norm(o) > 1e-9 ? normalized(o) : t.orientation[i];
        for (std::size_t d = 0; d < 3; ++d) {
            row[feature::kOrientX + d] = o[d];
        }

        const double radius_sd = sigma * t.radius[i];
        row[feature::kVarianceOffset + feature::kRadius] = radius_sd * radius_sd;
        for (std::size_t c = feature::kPosX; c < feature::kMeanCount; ++c) {
            row[feature::kVarianceOffset + c] = var;
        }
    }
    inst.true_means = std::move(truth);
    inst.target_adjacency = adjacency_from_edges(n, t.edges);
    inst.candidate_adjacency = inst.target_adjacency;
    return inst;
}

RefinementInstance build_overcomplete(RefinementInstance instance, std::size_t knn_k) {
    const std::size_t n = instance.n();
    if (knn_k == 0 || knn_k >= n) {
        throw ContractError("knn_k = " + std::to_string(knn_k) + " requires 1 <= k < N = " + std::to_string(n));
    }
    const auto pos = observed_positions(instance);
    Matrix candidates = instance.target_adjacency;
    std::vector<std::pair<double, std::size_t>> dist(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            double s = 0.0;
            for (std::size_t d = 0; d < 3; ++d) {
                const double delta = pos[i][d] - pos[j][d];
                s += delta * delta;
            }
            dist[m++] = {s, j};
        }
        // Ties broken by node index.
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(knn_k), dist.end());
        for (std::size_t k = 0; k < knn_k; ++k) {
            const std::size_t j = dist[k].second;
            candidates(i, j) = 1.0;
            candidates(j, i) = 1.0;
        }
    }
    instance.candidate_adjacency = std::move(candidates);
    return instance;
}

RefinementInstance generate_instance(const GeneratorConfig& config, std::uint64_t seed, std::string id) {
    RefinementInstance inst = build_overcomplete(generate_tree(config, seed), config.knn_k);
    inst.id = std::move(id);
    return inst;
}

const char* split_name(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& name) {
    if (name == "train") {
        return Split::Train;
    }
    if (name == "validation" || name == "val") {
        return Split::Validation;
    }
    if (name == "test") {
        return Split::Test;
    }
    throw ParseError("unknown split '" + name + "'");
}

std::vector<RefinementInstance> Dataset::split(Split s) const {
    std::vector<RefinementInstance> out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (splits[i] == s) {
            out.push_back(instances[i]);
        }
    }
    return out;
}

Dataset make_dataset(const GeneratorConfig& config, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                     std::uint64_t seed) {
    Dataset d;
    const std::size_t total = n_train + n_val + n_test;
    for (std::size_t i = 0; i < total; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "tree-%04zu", i);
        d.instances.push_back(generate_instance(config, seed + i, id));
        d.splits.push_back(i < n_train ? Split::Train : i < n_train + n_val ? Split::Validation : Split::Test);
    }
    return d;
}

namespace {

void write_rows(std::string& out, const Matrix& m) {
    out += "[";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out += i == 0 ? "\n        [" : ",\n        [";
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c != 0) {
                out += ", ";
            }
            out += format_real(m(i, c));
        }
        out += "]";
    }
    out += "]";
}

void write_edges(std::string& out, const Matrix& adjacency) {
    out += "[";
    bool first = true;
    for (auto [i, j] : edge_list(adjacency)) {
        if (!first) {
            out += ", ";
        }
        first = false;
        out += "[" + std::to_string(i) + ", " + std::to_string(j) + "]";
    }
    out += "]";
}

Matrix read_rows(const nlohmann::json& j, std::size_t n, std::size_t width, const std::string& context) {
    if (!j.is_array() || j.size() != n) {
        throw ParseError(context + ": expected " + std::to_string(n) + " rows");
    }
    Matrix m(n, width);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = j[i];
        if (!row.is_array() || row.size() != width) {
            throw ParseError(context + " row " + std::to_string(i) + ": expected " + std::to_string(width) +
                             " numbers");
        }
        for (std::size_t c = 0; c < width; ++c) {
            if (!row[c].is_number()) {
                throw ParseError(context + " row " + std::to_string(i) + " field " + std::to_string(c) +
                                 ": not a number");
            }
            m(i, c) = row[c].get<double>();
        }
    }
    return m;
}

Matrix read_edges(const nlohmann::json& j, std::size_t n, const std::string& context) {
    if (!j.is_array()) {
        throw ParseError(context + ": expected an edge list");
    }
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const auto& e = j[k];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
            throw ParseError(context + " edge " + std::to_string(k) + ": expected [i, j] with nonnegative integers");
        }
        const auto a = e[0].get<std::size_t>();
        const auto b = e[1].get<std::size_t>();
        if (a >= b || b >= n) {
            throw ParseError(context + " edge " + std::to_string(k) + ": need i < j < n");
        }
        edges.emplace_back(a, b);
    }
    return adjacency_from_edges(n, edges);
}

} // namespace

std::string dataset_to_string(const Dataset& dataset) {
    std::string out = "{\n  \"format_version\": 1,\n  \"instances\": [";
    for (std::size_t k = 0; k < dataset.instances.size(); ++k) {
        const auto& inst = dataset.instances[k];
        out += k == 0 ? "\n    {" : ",\n    {";
        out += "\"id\": " + nlohmann::json(inst.id).dump() + ", \"n\": " + std::to_string(inst.n()) +
               ", \"split\": \"" + split_name(dataset.splits[k]) + "\",\n      \"features\": ";
        write_rows(out, inst.features);
        out += ",\n      \"candidate_edges\": ";
        write_edges(out, inst.candidate_adjacency);
        out += ",\n      \"target_edges\": ";
        write_edges(out, inst.target_adjacency);
        if (inst.true_means) {
            out += ",\n      \"true_means\": ";
            write_rows(out, *inst.true_means);
        }
        out += "}";
    }
    out += "\n  ]\n}\n";
    return out;
}

Dataset dataset_from_string(const std::string& text) {
    const auto j = parse_json(text, "dataset");
    if (!j.is_object() || j.value("format_version", 0) != 1) {
        throw ParseError("dataset: missing or unsupported format_version (expected 1)");
    }
    if (!j.contains("instances") || !j["instances"].is_array()) {
        throw ParseError("dataset: missing instances array");
    }
    Dataset d;
    const auto& items = j["instances"];
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto& item = items[k];
        std::string ctx = "dataset instance " + std::to_string(k);
        try {
            RefinementInstance inst;
            inst.id = item.at("id").get<std::string>();
            ctx += " (" + inst.id + ")";
            const auto n = item.at("n").get<std::size_t>();
            inst.features = read_rows(item.at("features"), n, feature::kCount, ctx + " features");
            inst.candidate_adjacency = read_edges(item.at("candidate_edges"), n, ctx + " candidate_edges");
            inst.target_adjacency = read_edges(item.at("target_edges"), n, ctx + " target_edges");
            if (item.contains("true_means")) {
                inst.true_means = read_rows(item["true_means"], n, feature::kMeanCount, ctx + " true_means");
            }
            d.splits.push_back(parse_split(item.at("split").get<std::string>()));
            d.instances.push_back(std::move(inst));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(ctx + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()).rfind(ctx, 0) == 0 ? e.what() : ctx + ": " + e.what());
        } catch (const std::exception& e) {
            throw ParseError(ctx + ": " + e.what());
        }
    }
    return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    write_text_file(path, dataset_to_string(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
    return dataset_from_string(read_text_file(path));
}

double candidate_ratio(const RefinementInstance& instance) {
    const double targets = static_cast<double>(edge_list(instance.target_adjacency).size());
    const double candidates = static_cast<double>(edge_list(instance.candidate_adjacency).size());
    return targets == 0.0 ? 0.0 : candidates / targets;
}

} // namespace treegae
