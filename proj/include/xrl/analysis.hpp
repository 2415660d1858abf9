#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xrl/clustering.hpp"
#include "xrl/dataset.hpp"
#include "xrl/embedding.hpp"

namespace xrl {

enum class ChartKind { scatter, bar };

// Renderer-agnostic chart payload produced by every analytic.
struct GraphData {
    ChartKind kind = ChartKind::scatter;
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<double> x;
    std::vector<double> y;       // empty for bar charts
    std::vector<double> values;  // color channel (scatter) or bar heights (bar)
    std::optional<std::vector<double>> error;
    // Per-element category used for colouring (scatter: the categorical value,
    // bar: the cluster stage). Empty when the colour channel is continuous.
    std::vector<int> groups;
    std::map<int, std::string> legend;
    bool colorbar = false;

    // Throws InputError naming the first broken invariant.
    void check() const;
};

nlohmann::json to_json(const GraphData& g);
GraphData graph_from_json(const nlohmann::json& j);

enum class OverlayField { episode_step, confidence, action, reward, return_to_go, critic_value, done };

std::string to_string(OverlayField field);
OverlayField overlay_field_from_string(const std::string& text);  // ConfigError on unknown names

GraphData embedding_overlay(const XRLDataset& dataset, const DerivedFields& derived, const EmbeddingMap& embedding,
                            OverlayField field);

enum class MetricKind { confidence, reward, expected_return, critic_value };

std::string to_string(MetricKind metric);
MetricKind metric_from_string(const std::string& text);

struct ClusterMetric {
    std::string metric_name;
    std::vector<double> mean;
    std::vector<double> stddev;  // population standard deviation
    std::vector<std::size_t> count;
    std::vector<Stage> stage_of;
};

ClusterMetric cluster_metric(const XRLDataset& dataset, const DerivedFields& derived,
                             const ClusterAssignment& clusters, MetricKind metric);

// Bar chart of a metric, one bar per cluster with std error bars, grouped by stage.
GraphData metric_chart(const ClusterMetric& metric);

// Up to `per_cluster` member indices per cluster, nearest to the cluster's
// feature centroid first (index order breaks ties).
std::map<int, std::vector<std::size_t>> cluster_representatives(const RealMatrix& features,
                                                                const ClusterAssignment& clusters,
                                                                int per_cluster = 3);

std::map<int, std::vector<std::size_t>> cluster_representatives(const XRLDataset& dataset,
                                                                const ClusterAssignment& clusters,
                                                                int per_cluster = 3);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // cells already formatted
};

// Columns: cluster, stage, count, then <metric>_mean, <metric>_std per metric.
Table cluster_metric_report(const std::vector<ClusterMetric>& metrics);

std::string to_csv(const Table& table);
nlohmann::json to_json(const Table& table);

}  // namespace xrl
