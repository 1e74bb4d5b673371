#pragma once

#include "treegae/graph.hpp"
#include "treegae/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace treegae {

struct EdgeMetrics {
    double precision = 1.0;
    double recall = 1.0;
    double dice = 1.0;
};

/// Counts over unordered off-diagonal pairs. An empty prediction has
/// precision 1, an empty target has recall 1, and both empty give dice 1.
EdgeMetrics edge_metrics(const Matrix& predicted, const Matrix& target);

/// Zeroes predicted edges that are not candidate edges.
Matrix mask_to_candidates(const Matrix& predicted, const Matrix& candidates);

using PointSet = std::vector<Point3>;

/// Node positions of every node with an incident edge (each emitted once),
/// plus interior points so consecutive samples along an edge are at most
/// `spacing` apart. An edgeless graph yields all node positions.
PointSet sample_edge_points(const Matrix& adjacency, std::span<const Point3> positions, double spacing);

struct CenterlineDistance {
    double d_fp = 0.0; // extracted -> reference
    double d_fn = 0.0; // reference -> extracted
    double d_err = 0.0;
};

CenterlineDistance centerline_distance(const PointSet& extracted, const PointSet& reference);

struct InstanceReport {
    std::string id;
    double edge_precision = 0.0;
    double edge_recall = 0.0;
    double edge_dice = 0.0;
    double d_fn = 0.0;
    double d_fp = 0.0;
    double d_err = 0.0;
    // Same edge metrics after restricting predictions to candidate edges.
    double masked_precision = 0.0;
    double masked_recall = 0.0;
    double masked_dice = 0.0;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation, 0 for a single row
};

MeanStd mean_std(std::span<const double> values);

struct EvalReport {
    std::vector<InstanceReport> rows;
    MeanStd edge_precision, edge_recall, edge_dice, d_fn, d_fp, d_err;
    MeanStd masked_precision, masked_recall, masked_dice;
};

struct EvalSettings {
    double threshold = 0.5;
    double spacing = 0.5;
};

/// Per-instance report for a given prediction, reference geometry from the
/// target edges and true positions, extracted geometry from the prediction
/// and observed positions.
InstanceReport evaluate_prediction(const RefinementInstance& instance, const Matrix& predicted, double spacing);

EvalReport evaluate(const ModelParams& params, const ModelConfig& config, std::span<const RefinementInstance> split,
                    const EvalSettings& settings = {});

/// Fills the aggregate fields from the rows.
void aggregate(EvalReport& report);

/// Rows then `mean` and `std` rows; columns id,edge_precision,edge_recall,edge_dice,d_fn,d_fp,d_err.
std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);

} // namespace treegae
