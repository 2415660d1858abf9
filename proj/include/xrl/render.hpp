#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include "xrl/analysis.hpp"
#include "xrl/samdp.hpp"

namespace xrl {

struct RenderConfig {
    int width = 800;
    int height = 600;
    std::string palette = "tab10";  // tab10 | dark2
    double point_size = 3.0;
    std::filesystem::path output_path;

    void check() const;
};

// SVG 1.1 text for a chart. Scatter charts get a legend (categorical colour
// channel) or a colorbar; bar charts get one bar per x with std error bars.
std::string chart_svg(const GraphData& data, const RenderConfig& config);

// Writes chart_svg() to config.output_path.
void render_chart(const GraphData& data, const RenderConfig& config);

// Graphviz DOT text. Nodes are `Cluster_<id>` shaped by stage; with `verbose`
// edges carry `a=<action> p=<prob>` labels.
std::string emit_dot(const SAMDPView& view, bool verbose);

struct GraphLayout {
    std::map<int, std::pair<double, double>> positions;  // node id -> [0, 1]^2
    double ideal_length = 0.0;
};

// Fruchterman-Reingold layout in the unit square: 200 iterations, seeded
// uniform start, temperature cooled linearly to zero.
GraphLayout layout_graph(const SAMDPView& view, std::uint64_t seed);

std::string graph_svg(const SAMDPView& view, const GraphLayout& layout, const RenderConfig& config, bool verbose);

// Lays out the view and writes its SVG to config.output_path.
GraphLayout render_graph(const SAMDPView& view, std::uint64_t seed, const RenderConfig& config, bool verbose);

}  // namespace xrl
