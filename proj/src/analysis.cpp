#include "xrl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "xrl/errors.hpp"

namespace xrl {
namespace {

std::string kind_name(ChartKind kind) { return kind == ChartKind::bar ? "bar" : "scatter"; }

std::vector<double> confidence_of(const XRLDataset& d) {
    if (!d.dist_probs) {
        throw ConfigError("confidence needs the dist_probs array, which this dataset does not have");
    }
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto row = d.dist_probs->row(i);
        out[i] = *std::max_element(row.begin(), row.end());
    }
    return out;
}

std::vector<double> critic_of(const XRLDataset& d) {
    if (!d.critic_values) {
        throw ConfigError("critic_value needs the critic_values array, which this dataset does not have");
    }
    return {d.critic_values->begin(), d.critic_values->end()};
}

// Shortest round-trip representation; stable across runs.
std::string format_number(double v) { return fmt::format("{}", v); }

}  // namespace

void GraphData::check() const {
    if (x.size() != values.size()) throw InputError("GraphData: x and values differ in length");
    if (!y.empty() && y.size() != x.size()) throw InputError("GraphData: y and x differ in length");
    if (kind == ChartKind::scatter && y.size() != x.size()) throw InputError("GraphData: scatter needs y");
    if (error) {
        if (error->size() != values.size()) throw InputError("GraphData: error and values differ in length");
        for (double e : *error) {
            if (!(e >= 0.0)) throw InputError("GraphData: negative error bar");
        }
    }
    if (!groups.empty() && groups.size() != values.size()) {
        throw InputError("GraphData: groups and values differ in length");
    }
}

nlohmann::json to_json(const GraphData& g) {
    nlohmann::json j;
    j["kind"] = kind_name(g.kind);
    j["title"] = g.title;
    j["x_label"] = g.x_label;
    j["y_label"] = g.y_label;
    j["x"] = g.x;
    j["y"] = g.y;
    j["values"] = g.values;
    j["error"] = g.error ? nlohmann::json(*g.error) : nlohmann::json(nullptr);
    j["groups"] = g.groups;
    nlohmann::json legend = nlohmann::json::object();
    for (const auto& [k, v] : g.legend) legend[std::to_string(k)] = v;
    j["legend"] = legend;
    j["colorbar"] = g.colorbar;
    return j;
}

GraphData graph_from_json(const nlohmann::json& j) {
    GraphData g;
    try {
        g.kind = j.at("kind").get<std::string>() == "bar" ? ChartKind::bar : ChartKind::scatter;
        g.title = j.at("title").get<std::string>();
        g.x_label = j.value("x_label", "");
        g.y_label = j.value("y_label", "");
        g.x = j.at("x").get<std::vector<double>>();
        g.y = j.at("y").get<std::vector<double>>();
        g.values = j.at("values").get<std::vector<double>>();
        if (!j.at("error").is_null()) g.error = j.at("error").get<std::vector<double>>();
        g.groups = j.value("groups", std::vector<int>{});
        for (const auto& [k, v] : j.at("legend").items()) g.legend[std::stoi(k)] = v.get<std::string>();
        g.colorbar = j.at("colorbar").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed chart JSON: ") + e.what());
    }
    g.check();
    return g;
}

std::string to_string(OverlayField f) {
    switch (f) {
        case OverlayField::episode_step:
            return "episode_step";
        case OverlayField::confidence:
            return "confidence";
        case OverlayField::action:
            return "action";
        case OverlayField::reward:
            return "reward";
        case OverlayField::return_to_go:
            return "return_to_go";
        case OverlayField::critic_value:
            return "critic_value";
        case OverlayField::done:
            return "done";
    }
    return "unknown";
}

OverlayField overlay_field_from_string(const std::string& text) {
    for (auto f : {OverlayField::episode_step, OverlayField::confidence, OverlayField::action, OverlayField::reward,
                   OverlayField::return_to_go, OverlayField::critic_value, OverlayField::done}) {
        if (to_string(f) == text) return f;
    }
    throw ConfigError("unknown overlay field '" + text + "'");
}

GraphData embedding_overlay(const XRLDataset& d, const DerivedFields& derived, const EmbeddingMap& e,
                            OverlayField field) {
    const std::size_t n = d.size();
    if (e.coords.rows() != n) {
        throw InputError("embedding has " + std::to_string(e.coords.rows()) + " points but the dataset has " +
                         std::to_string(n));
    }
    GraphData g;
    g.kind = ChartKind::scatter;
    g.x_label = "embedding x";
    g.y_label = "embedding y";
    g.x.resize(n);
    g.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        g.x[i] = e.coords(i, 0);
        g.y[i] = e.coords(i, 1);
    }

    bool categorical = false;
    switch (field) {
        case OverlayField::episode_step:
            g.values.assign(d.steps.begin(), d.steps.end());
            g.title = "Episode step";
            break;
        case OverlayField::confidence:
            g.values = confidence_of(d);
            g.title = "Greedy action confidence";
            break;
        case OverlayField::action:
            g.values.assign(d.actions.begin(), d.actions.end());
            g.title = "Action taken";
            categorical = true;
            for (int a = 0; a < d.meta.num_actions; ++a) g.legend[a] = fmt::format("action {}", a);
            break;
        case OverlayField::reward:
            g.values.assign(d.rewards.begin(), d.rewards.end());
            g.title = "Reward";
            break;
        case OverlayField::return_to_go:
            if (derived.returns_to_go.size() != n) throw InputError("derived fields do not match the dataset");
            g.values = derived.returns_to_go;
            g.title = "Return to go";
            break;
        case OverlayField::critic_value:
            g.values = critic_of(d);
            g.title = "Critic value";
            break;
        case OverlayField::done:
            g.values.assign(d.dones.begin(), d.dones.end());
            g.title = "Done";
            categorical = true;
            g.legend = {{0, "not done"}, {1, "done"}};
            break;
    }
    if (categorical) {
        g.groups.assign(g.values.begin(), g.values.end());
    } else {
        g.colorbar = true;
    }
    return g;
}

std::string to_string(MetricKind m) {
    switch (m) {
        case MetricKind::confidence:
            return "confidence";
        case MetricKind::reward:
            return "reward";
        case MetricKind::expected_return:
            return "expected_return";
        case MetricKind::critic_value:
            return "critic_value";
    }
    return "unknown";
}

MetricKind metric_from_string(const std::string& text) {
    for (auto m : {MetricKind::confidence, MetricKind::reward, MetricKind::expected_return, MetricKind::critic_value}) {
        if (to_string(m) == text) return m;
    }
    throw ConfigError("unknown cluster metric '" + text + "'");
}

ClusterMetric cluster_metric(const XRLDataset& d, const DerivedFields& derived, const ClusterAssignment& clusters,
                             MetricKind metric) {
    const std::size_t n = d.size();
    if (clusters.labels.size() != n) throw InputError("cluster labels do not match the dataset");

    std::vector<double> q;
    switch (metric) {
        case MetricKind::confidence:
            q = confidence_of(d);
            break;
        case MetricKind::reward:
            q.assign(d.rewards.begin(), d.rewards.end());
            break;
        case MetricKind::expected_return:
            if (derived.returns_to_go.size() != n) throw InputError("derived fields do not match the dataset");
            q = derived.returns_to_go;
            break;
        case MetricKind::critic_value:
            q = critic_of(d);
            break;
    }

    const auto c = static_cast<std::size_t>(clusters.num_clusters());
    ClusterMetric out;
    out.metric_name = to_string(metric);
    out.mean.assign(c, 0.0);
    out.stddev.assign(c, 0.0);
    out.count.assign(c, 0);
    out.stage_of = clusters.stage_of;
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(clusters.labels[i]);
        if (l >= c) throw InputError("cluster label out of range at datapoint " + std::to_string(i));
        ++out.count[l];
        out.mean[l] += q[i];
    }
    for (std::size_t l = 0; l < c; ++l) {
        if (out.count[l] > 0) out.mean[l] /= static_cast<double>(out.count[l]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = static_cast<std::size_t>(clusters.labels[i]);
        const double dev = q[i] - out.mean[l];
        out.stddev[l] += dev * dev;
    }
    for (std::size_t l = 0; l < c; ++l) {
        if (out.count[l] > 0) out.stddev[l] = std::sqrt(out.stddev[l] / static_cast<double>(out.count[l]));
    }
    return out;
}

GraphData metric_chart(const ClusterMetric& m) {
    GraphData g;
    g.kind = ChartKind::bar;
    g.title = "Mean " + m.metric_name + " per cluster";
    g.x_label = "cluster";
    g.y_label = m.metric_name;
    g.values = m.mean;
    g.error = m.stddev;
    for (std::size_t c = 0; c < m.mean.size(); ++c) {
        g.x.push_back(static_cast<double>(c));
        g.groups.push_back(static_cast<int>(m.stage_of.at(c)));
    }
    for (Stage s : {Stage::intermediate, Stage::initial, Stage::terminal}) {
        g.legend[static_cast<int>(s)] = to_string(s);
    }
    return g;
}

std::map<int, std::vector<std::size_t>> cluster_representatives(const RealMatrix& x,
                                                                const ClusterAssignment& clusters, int per_cluster) {
    if (per_cluster < 1) throw InputError("per_cluster must be at least 1");
    if (clusters.labels.size() != x.rows()) throw InputError("cluster labels do not match the feature matrix");

    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < x.rows(); ++i) members[clusters.labels[i]].push_back(i);

    std::map<int, std::vector<std::size_t>> out;
    for (auto& [id, rows] : members) {
        std::vector<double> centroid(x.cols(), 0.0);
        for (std::size_t i : rows) {
            for (std::size_t d = 0; d < x.cols(); ++d) centroid[d] += x(i, d);
        }
        for (double& v : centroid) v /= static_cast<double>(rows.size());

        std::vector<std::pair<double, std::size_t>> ranked;
        ranked.reserve(rows.size());
        for (std::size_t i : rows) ranked.emplace_back(squared_distance(x.row(i), centroid), i);
        const auto keep = std::min(ranked.size(), static_cast<std::size_t>(per_cluster));
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end());
        auto& picked = out[id];
        for (std::size_t r = 0; r < keep; ++r) picked.push_back(ranked[r].second);
    }
    return out;
}

std::map<int, std::vector<std::size_t>> cluster_representatives(const XRLDataset& d, const ClusterAssignment& clusters,
                                                                int per_cluster) {
    return cluster_representatives(build_feature_matrix(d, clusters.feature_spec), clusters, per_cluster);
}

Table cluster_metric_report(const std::vector<ClusterMetric>& metrics) {
    Table t;
    t.columns = {"cluster", "stage", "count"};
    for (const auto& m : metrics) {
        t.columns.push_back(m.metric_name + "_mean");
        t.columns.push_back(m.metric_name + "_std");
    }
    if (metrics.empty()) return t;

    const std::size_t c = metrics.front().mean.size();
    for (const auto& m : metrics) {
        if (m.mean.size() != c || m.stddev.size() != c || m.count.size() != c) {
            throw InputError("metrics disagree on the number of clusters");
        }
    }
    for (std::size_t id = 0; id < c; ++id) {
        std::vector<std::string> row = {std::to_string(id), to_string(metrics.front().stage_of.at(id)),
                                        std::to_string(metrics.front().count[id])};
        for (const auto& m : metrics) {
            row.push_back(format_number(m.mean[id]));
            row.push_back(format_number(m.stddev[id]));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string to_csv(const Table& t) {
    std::ostringstream out;
    auto write_row = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << cells[i];
        }
        out << '\n';
    };
    write_row(t.columns);
    for (const auto& r : t.rows) write_row(r);
    return out.str();
}

nlohmann::json to_json(const Table& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            const auto& col = t.columns[i];
            if (col == "stage") {
                obj[col] = r[i];
            } else if (col == "cluster" || col == "count") {
                obj[col] = std::stoll(r[i]);
            } else {
                obj[col] = std::stod(r[i]);
            }
        }
        rows.push_back(std::move(obj));
    }
    return rows;
}

}  // namespace xrl
