#include "treegae/eval.hpp"

#include "treegae/errors.hpp"
#include "treegae/io.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace treegae {

namespace {

void require_square_pair(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b) || a.rows() != a.cols()) {
        throw DimensionError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
    }
}

double distance(const Point3& a, const Point3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double mean_min_distance(const PointSet& from, const PointSet& to) {
    double total = 0.0;
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) {
            best = std::min(best, distance(p, q));
        }
        total += best;
    }
    return total / static_cast<double>(from.size());
}

} // namespace

EdgeMetrics edge_metrics(const Matrix& predicted, const Matrix& target) {
    require_square_pair(predicted, target, "edge_metrics");
    std::size_t tp = 0;
    std::size_t n_pred = 0;
    std::size_t n_target = 0;
    for (std::size_t i = 0; i < predicted.rows(); ++i) {
        for (std::size_t j = i + 1; j < predicted.cols(); ++j) {
            const bool p = predicted(i, j) != 0.0;
            const bool t = target(i, j) != 0.0;
            n_pred += p;
            n_target += t;
            tp += p && t;
        }
    }
    EdgeMetrics m;
    m.precision = n_pred == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(n_pred);
    m.recall = n_target == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(n_target);
    m.dice = n_pred + n_target == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(n_pred + n_target);
    return m;
}

Matrix mask_to_candidates(const Matrix& predicted, const Matrix& candidates) {
    require_square_pair(predicted, candidates, "mask_to_candidates");
    Matrix out = predicted;
    auto o = out.values();
    auto c = candidates.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (c[i] == 0.0) {
            o[i] = 0.0;
        }
    }
    return out;
}

PointSet sample_edge_points(const Matrix& adjacency, std::span<const Point3> positions, double spacing) {
    if (!(spacing > 0.0)) {
        throw ContractError("sample_edge_points: spacing must be > 0");
    }
    if (adjacency.rows() != adjacency.cols() || adjacency.rows() != positions.size()) {
        throw DimensionError("sample_edge_points: adjacency " + adjacency.shape_string() + " for " +
                             std::to_string(positions.size()) + " positions");
    }
    const auto edges = edge_list(adjacency);
    PointSet points;
    if (edges.empty()) {
        points.assign(positions.begin(), positions.end());
        return points;
    }
    std::vector<bool> emitted(positions.size(), false);
    auto emit_node = [&](std::size_t i) {
        if (!emitted[i]) {
            emitted[i] = true;
            points.push_back(positions[i]);
        }
    };
    for (auto [i, j] : edges) {
        emit_node(i);
        const Point3& a = positions[i];
        const Point3& b = positions[j];
        const auto segments =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(distance(a, b) / spacing)));
        for (std::size_t k = 1; k < segments; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(segments);
            points.push_back({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])});
        }
        emit_node(j);
    }
    return points;
}

CenterlineDistance centerline_distance(const PointSet& extracted, const PointSet& reference) {
    if (extracted.empty() || reference.empty()) {
        throw ContractError("centerline_distance: point sets must be nonempty");
    }
    CenterlineDistance d;
    d.d_fp = mean_min_distance(extracted, reference);
    d.d_fn = mean_min_distance(reference, extracted);
    d.d_err = (d.d_fp + d.d_fn) / 2.0;
    return d;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) {
        return out;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - out.mean) * (v - out.mean);
        }
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

InstanceReport evaluate_prediction(const RefinementInstance& instance, const Matrix& predicted, double spacing) {
    InstanceReport row;
    row.id = instance.id;
    const EdgeMetrics dense = edge_metrics(predicted, instance.target_adjacency);
    row.edge_precision = dense.precision;
    row.edge_recall = dense.recall;
    row.edge_dice = dense.dice;
    const EdgeMetrics masked =
        edge_metrics(mask_to_candidates(predicted, instance.candidate_adjacency), instance.target_adjacency);
    row.masked_precision = masked.precision;
    row.masked_recall = masked.recall;
    row.masked_dice = masked.dice;

    const auto observed = observed_positions(instance);
    const auto truth = reference_positions(instance);
    const auto cd = centerline_distance(sample_edge_points(predicted, observed, spacing),
                                        sample_edge_points(instance.target_adjacency, truth, spacing));
    row.d_fp = cd.d_fp;
    row.d_fn = cd.d_fn;
    row.d_err = cd.d_err;
    return row;
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& config, std::span<const RefinementInstance> split,
                    const EvalSettings& settings) {
    if (split.empty()) {
        throw ContractError("evaluate: split is empty");
    }
    check_params(params, config);
    EvalReport report;
    for (const auto& inst : split) {
        const Matrix alpha = forward(inst, params, config).soft_adjacency;
        report.rows.push_back(evaluate_prediction(inst, predict_edges(alpha, settings.threshold), settings.spacing));
    }
    aggregate(report);
    return report;
}

void aggregate(EvalReport& report) {
    auto column = [&](double InstanceReport::*field) {
        std::vector<double> v;
        v.reserve(report.rows.size());
        for (const auto& r : report.rows) {
            v.push_back(r.*field);
        }
        return mean_std(v);
    };
    report.edge_precision = column(&InstanceReport::edge_precision);
    report.edge_recall = column(&InstanceReport::edge_recall);
    report.edge_dice = column(&InstanceReport::edge_dice);
    report.d_fn = column(&InstanceReport::d_fn);
    report.d_fp = column(&InstanceReport::d_fp);
    report.d_err = column(&InstanceReport::d_err);
    report.masked_precision = column(&InstanceReport::masked_precision);
    report.masked_recall = column(&InstanceReport::masked_recall);
    report.masked_dice = column(&InstanceReport::masked_dice);
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "id,edge_precision,edge_recall,edge_dice,d_fn,d_fp,d_err\n";
    for (const auto& r : report.rows) {
        out << r.id << ',' << format_real(r.edge_precision) << ',' << format_real(r.edge_recall) << ','
            << format_real(r.edge_dice) << ',' << format_real(r.d_fn) << ',' << format_real(r.d_fp) << ','
            << format_real(r.d_err) << '\n';
    }
    const MeanStd* cols[] = {&report.edge_precision, &report.edge_recall, &report.edge_dice,
                             &report.d_fn,           &report.d_fp,        &report.d_err};
    out << "mean";
    for (const auto* c : cols) {
        out << ',' << format_real(c->mean);
    }
    out << "\nstd";
    for (const auto* c : cols) {
        out << ',' << format_real(c->std);
    }
    out << '\n';
    return out.str();
}

std::string report_json(const EvalReport& report) {
    std::string out = "{\n  \"instances\": [";
    for (std::size_t k = 0; k < report.rows.size(); ++k) {
        const auto& r = report.rows[k];
        out += k == 0 ? "\n    {" : ",\n    {";
        out += "\"id\": " + nlohmann::json(r.id).dump();
        const std::pair<const char*, double> fields[] = {
            {"edge_precision", r.edge_precision}, {"edge_recall", r.edge_recall}, {"edge_dice", r.edge_dice},
            {"d_fn", r.d_fn}, {"d_fp", r.d_fp}, {"d_err", r.d_err},
            {"masked_edge_precision", r.masked_precision}, {"masked_edge_recall", r.masked_recall},
            {"masked_edge_dice", r.masked_dice}};
        for (const auto& [name, value] : fields) {
            out += std::string(", \"") + name + "\": " + format_real(value);
        }
        out += "}";
    }
    out += "\n  ],\n  \"aggregate\": {";
    const std::pair<const char*, const MeanStd*> aggs[] = {
        {"edge_precision", &report.edge_precision}, {"edge_recall", &report.edge_recall},
        {"edge_dice", &report.edge_dice}, {"d_fn", &report.d_fn}, {"d_fp", &report.d_fp},
        {"d_err", &report.d_err}, {"masked_edge_precision", &report.masked_precision},
        {"masked_edge_recall", &report.masked_recall}, {"masked_edge_dice", &report.masked_dice}};
    bool first = true;
    for (const auto& [name, ms] : aggs) {
        out += first ? "\n    \"" : ",\n    \"";
        first = false;
        out += std::string(name) + "\": {\"mean\": " + format_real(ms->mean) + ", \"std\": " + format_real(ms->std) +
               "}";
    }
    out += "\n  }\n}\n";
    return out;
}

} // namespace treegae
