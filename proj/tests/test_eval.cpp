#include "oracles.hpp"

#include "treegae/errors.hpp"
#include "treegae/eval.hpp"
#include "treegae/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace treegae;
using treegae::oracle::brute_mean_min;

namespace {

PointSet random_points(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    PointSet p(n);
    for (auto& x : p) {
        x = {d(rng), d(rng), d(rng)};
    }
    return p;
}

std::vector<RefinementInstance> tiny_split(std::size_t count, std::uint64_t seed) {
    GeneratorConfig g;
    g.max_depth = 2;
    g.min_nodes = 8;
    g.max_nodes = 20;
    g.knn_k = 3;
    return make_dataset(g, count, 0, 0, seed).instances;
}

} // namespace

TEST(EdgeMetrics, PerfectMatch) {
    const Matrix a = adjacency_from_edges(3, {{0, 1}, {1, 2}});
    const auto m = edge_metrics(a, a);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.dice, 1.0);
}

TEST(EdgeMetrics, EmptyPrediction) {
    const auto m = edge_metrics(Matrix(3, 3), adjacency_from_edges(3, {{0, 1}}));
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 0.0);
    EXPECT_EQ(m.dice, 0.0);
}

TEST(EdgeMetrics, HalfOverlap) {
    const auto m = edge_metrics(adjacency_from_edges(3, {{0, 1}, {0, 2}}), adjacency_from_edges(3, {{0, 1}, {1, 2}}));
    EXPECT_DOUBLE_EQ(m.precision, 0.5);
    EXPECT_DOUBLE_EQ(m.recall, 0.5);
    EXPECT_DOUBLE_EQ(m.dice, 0.5);
}

TEST(EdgeMetrics, BothEmptyAndShapeMismatch) {
    EXPECT_EQ(edge_metrics(Matrix(2, 2), Matrix(2, 2)).dice, 1.0);
    EXPECT_THROW(edge_metrics(Matrix(2, 2), Matrix(3, 3)), DimensionError);
}

TEST(MaskToCandidates, DropsNonCandidateEdges) {
    const Matrix pred = adjacency_from_edges(3, {{0, 1}, {0, 2}});
    EXPECT_EQ(mask_to_candidates(pred, adjacency_from_edges(3, {{0, 1}})), adjacency_from_edges(3, {{0, 1}}));
}

TEST(SampleEdgePoints, UnitEdgeAtHalfSpacing) {
    const std::vector<Point3> pos{{0, 0, 0}, {1, 0, 0}};
    const auto pts = sample_edge_points(adjacency_from_edges(2, {{0, 1}}), pos, 0.5);
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_NE(std::find(pts.begin(), pts.end(), Point3{0.5, 0, 0}), pts.end());
}

TEST(SampleEdgePoints, EdgelessGraphGivesNodePositions) {
    const std::vector<Point3> pos{{0, 0, 0}, {3, 1, 0}};
    const auto pts = sample_edge_points(Matrix(2, 2), pos, 0.5);
    EXPECT_EQ(pts.size(), 2u);
}

TEST(SampleEdgePoints, SharedNodeEmittedOnce) {
    const std::vector<Point3> pos{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    const auto pts = sample_edge_points(adjacency_from_edges(3, {{0, 1}, {1, 2}}), pos, 1.0);
    EXPECT_EQ(pts.size(), 3u);
    EXPECT_EQ(std::count(pts.begin(), pts.end(), Point3{1, 0, 0}), 1);
}

TEST(SampleEdgePoints, SpacingBoundAlongEdges) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pos = random_points(2, rng);
        const double spacing = 0.3;
        const auto pts = sample_edge_points(adjacency_from_edges(2, {{0, 1}}), pos, spacing);
        const double len = std::sqrt(std::pow(pos[1][0] - pos[0][0], 2) + std::pow(pos[1][1] - pos[0][1], 2) +
                                     std::pow(pos[1][2] - pos[0][2], 2));
        EXPECT_EQ(pts.size(), static_cast<std::size_t>(std::ceil(len / spacing)) + 1);
    }
}

TEST(SampleEdgePoints, NonPositiveSpacingRejected) {
    const std::vector<Point3> pos{{0, 0, 0}, {1, 0, 0}};
    EXPECT_THROW(sample_edge_points(Matrix(2, 2), pos, 0.0), ContractError);
}

TEST(CenterlineDistance, IdenticalSets) {
    const PointSet p{{0, 0, 0}, {1, 2, 3}};
    const auto d = centerline_distance(p, p);
    EXPECT_EQ(d.d_fp, 0.0);
    EXPECT_EQ(d.d_fn, 0.0);
    EXPECT_EQ(d.d_err, 0.0);
}

TEST(CenterlineDistance, SinglePair) {
    const auto d = centerline_distance({{0, 0, 0}}, {{2, 0, 0}});
    EXPECT_EQ(d.d_fp, 2.0);
    EXPECT_EQ(d.d_fn, 2.0);
    EXPECT_EQ(d.d_err, 2.0);
}

TEST(CenterlineDistance, ExtraExtractedPoint) {
    const auto d = centerline_distance({{0, 0, 0}, {1, 0, 0}}, {{0, 0, 0}});
    EXPECT_EQ(d.d_fp, 0.5);
    EXPECT_EQ(d.d_fn, 0.0);
    EXPECT_EQ(d.d_err, 0.25);
}

TEST(CenterlineDistance, EmptySetRejected) {
    EXPECT_THROW(centerline_distance({}, {{0, 0, 0}}), ContractError);
    EXPECT_THROW(centerline_distance({{0, 0, 0}}, {}), ContractError);
}

TEST(CenterlineDistance, MatchesBruteForceOracleExactly) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<std::size_t> size(1, 200);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_points(size(rng), rng);
        const auto b = random_points(size(rng), rng);
        const auto d = centerline_distance(a, b);
        EXPECT_EQ(d.d_fp, brute_mean_min(a, b));
        EXPECT_EQ(d.d_fn, brute_mean_min(b, a));
        EXPECT_NEAR(d.d_err, 0.5 * (d.d_fp + d.d_fn), 1e-12);
    }
}

TEST(CenterlineDistance, SwappingArgumentsSwapsDirections) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_points(30, rng);
        const auto b = random_points(17, rng);
        const auto ab = centerline_distance(a, b);
        const auto ba = centerline_distance(b, a);
        EXPECT_EQ(ab.d_fp, ba.d_fn);
        EXPECT_EQ(ab.d_fn, ba.d_fp);
        EXPECT_NEAR(ab.d_err, ba.d_err, 1e-12);
    }
}

TEST(CenterlineDistance, DuplicateExtractedPointNeverIncreasesFalsePositiveDistance) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        auto a = random_points(20, rng);
        const auto b = random_points(20, rng);
        const double before = centerline_distance(a, b).d_fp;
        // Duplicate the extracted point closest to the reference.
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = brute_mean_min({a[i]}, b);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        a.push_back(a[best]);
        EXPECT_LE(centerline_distance(a, b).d_fp, before + 1e-12);
    }
}

TEST(EvaluatePrediction, PerfectPredictionWithTruePositionsHasZeroError) {
    auto split = tiny_split(3, 5);
    for (auto& inst : split) {
        for (std::size_t i = 0; i < inst.n(); ++i) {
            for (std::size_t c = 0; c < feature::kMeanCount; ++c) {
                inst.features(i, c) = (*inst.true_means)(i, c);
            }
        }
        const auto r = evaluate_prediction(inst, inst.target_adjacency, 0.5);
        EXPECT_EQ(r.d_err, 0.0);
        EXPECT_EQ(r.edge_dice, 1.0);
    }
}

TEST(Evaluate, RowPerInstanceAndAggregatesRecomputable) {
    const auto split = tiny_split(5, 7);
    ModelConfig c;
    c.hidden_dim = 8;
    const auto report = evaluate(init_params(c, 3), c, split);
    ASSERT_EQ(report.rows.size(), split.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        EXPECT_EQ(r.id, split[i].id);
        EXPECT_NEAR(r.d_err, 0.5 * (r.d_fp + r.d_fn), 1e-12);
        EXPECT_GE(r.edge_dice, 0.0);
        EXPECT_LE(r.edge_dice, 1.0);
        sum += r.d_err;
    }
    const double mean = sum / static_cast<double>(report.rows.size());
    double ss = 0.0;
    for (const auto& r : report.rows) {
        ss += (r.d_err - mean) * (r.d_err - mean);
    }
    EXPECT_NEAR(report.d_err.mean, mean, 1e-12);
    EXPECT_NEAR(report.d_err.std, std::sqrt(ss / static_cast<double>(report.rows.size() - 1)), 1e-12);
}

TEST(Evaluate, DeterministicReports) {
    const auto split = tiny_split(3, 8);
    ModelConfig c;
    c.hidden_dim = 8;
    const auto p = init_params(c, 1);
    EXPECT_EQ(report_csv(evaluate(p, c, split)), report_csv(evaluate(p, c, split)));
    EXPECT_EQ(report_json(evaluate(p, c, split)), report_json(evaluate(p, c, split)));
}

TEST(MeanStd, SingleValueHasZeroStd) {
    const std::vector<double> v{3.0};
    EXPECT_EQ(mean_std(v).mean, 3.0);
    EXPECT_EQ(mean_std(v).std, 0.0);
    const std::vector<double> w{1.0, 3.0};
    EXPECT_EQ(mean_std(w).mean, 2.0);
    EXPECT_DOUBLE_EQ(mean_std(w).std, std::sqrt(2.0));
}

TEST(ReportCsv, HeaderAndSummaryRows) {
    const auto split = tiny_split(2, 9);
    ModelConfig c;
    c.hidden_dim = 4;
    const std::string csv = report_csv(evaluate(init_params(c, 0), c, split));
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], "id,edge_precision,edge_recall,edge_dice,d_fn,d_fp,d_err");
    EXPECT_EQ(lines[3].rfind("mean,", 0), 0u);
    EXPECT_EQ(lines[4].rfind("std,", 0), 0u);
}
