#include "xrl/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "xrl/errors.hpp"
#include "xrl/rng.hpp"

namespace xrl {
namespace {

constexpr int kLayoutIterations = 200;

constexpr std::array<const char*, 10> kTab10 = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr std::array<const char*, 8> kDark2 = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                               "#66a61e", "#e6ab02", "#a6761d", "#666666"};

// Viridis sampled at 9 evenly spaced stops.
constexpr std::array<std::array<int, 3>, 9> kViridis = {{{68, 1, 84},
                                                          {71, 44, 122},
                                                          {59, 81, 139},
                                                          {44, 113, 142},
                                                          {33, 144, 141},
                                                          {39, 173, 129},
                                                          {92, 200, 99},
                                                          {170, 220, 50},
                                                          {253, 231, 37}}};

std::string palette_color(const std::string& palette, std::size_t i) {
    if (palette == "dark2") return kDark2[i % kDark2.size()];
    return kTab10[i % kTab10.size()];
}

std::string viridis(double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    const double pos = t * static_cast<double>(kViridis.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, kViridis.size() - 1);
    const double f = pos - static_cast<double>(lo);
    std::array<int, 3> rgb{};
    for (std::size_t c = 0; c < 3; ++c) {
        rgb[c] = static_cast<int>(std::lround(kViridis[lo][c] * (1.0 - f) + kViridis[hi][c] * f));
    }
    return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&':
                out += "&amp;";
                break;
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '"':
                out += "&quot;";
                break;
            default:
                out.push_back(c);
        }
    }
    return out;
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    static Range of(const std::vector<double>& v) {
        Range r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (double x : v) {
            if (!std::isfinite(x)) continue;
            r.lo = std::min(r.lo, x);
            r.hi = std::max(r.hi, x);
        }
        if (!std::isfinite(r.lo)) return {0.0, 1.0};
        if (r.hi - r.lo < 1e-12) {
            r.lo -= 0.5;
            r.hi += 0.5;
        }
        return r;
    }
    double unit(double x) const { return (x - lo) / (hi - lo); }
};

struct Frame {
    double left = 70, right = 0, top = 50, bottom = 0;
    double plot_w() const { return right - left; }
    double plot_h() const { return bottom - top; }
};

void svg_open(std::ostringstream& out, const RenderConfig& cfg) {
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        cfg.width, cfg.height, cfg.width, cfg.height);
    out << fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", cfg.width, cfg.height);
}

void axes(std::ostringstream& out, const Frame& f, const GraphData& g, const Range& xr, const Range& yr,
          bool x_ticks) {
    out << fmt::format("<text x=\"{:.2f}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       (f.left + f.right) / 2, escape(g.title));
    out << fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                       "stroke=\"#333333\"/>\n",
                       f.left, f.top, f.plot_w(), f.plot_h());
    for (int t = 0; t <= 4; ++t) {
        const double v = yr.lo + (yr.hi - yr.lo) * t / 4.0;
        const double py = f.bottom - f.plot_h() * t / 4.0;
        out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
                           "text-anchor=\"end\">{:.3g}</text>\n",
                           f.left - 6, py + 3, v);
        if (x_ticks) {
            const double xv = xr.lo + (xr.hi - xr.lo) * t / 4.0;
            const double px = f.left + f.plot_w() * t / 4.0;
            out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
                               "text-anchor=\"middle\">{:.3g}</text>\n",
                               px, f.bottom + 14, xv);
        }
    }
    out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       (f.left + f.right) / 2, f.bottom + 34, escape(g.x_label));
    out << fmt::format("<text x=\"16\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                       "text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2f})\">{}</text>\n",
                       (f.top + f.bottom) / 2, (f.top + f.bottom) / 2, escape(g.y_label));
}

void legend(std::ostringstream& out, const Frame& f, const GraphData& g, const std::vector<int>& present,
            const RenderConfig& cfg) {
    double y = f.top + 10;
    out << "<g class=\"legend\">\n";
    for (std::size_t i = 0; i < present.size(); ++i) {
        const auto it = g.legend.find(present[i]);
        const std::string label = it != g.legend.end() ? it->second : std::to_string(present[i]);
        out << fmt::format("<rect class=\"legend-entry\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" "
                           "fill=\"{}\"/>\n",
                           f.right + 12, y, palette_color(cfg.palette, static_cast<std::size_t>(present[i])));
        out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                           f.right + 26, y + 9, escape(label));
        y += 16;
    }
    out << "</g>\n";
}

void colorbar(std::ostringstream& out, const Frame& f, const Range& vr) {
    out << "<defs><linearGradient id=\"cbar\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">\n";
    for (std::size_t s = 0; s < kViridis.size(); ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(kViridis.size() - 1);
        out << fmt::format("<stop offset=\"{:.3f}\" stop-color=\"{}\"/>\n", t, viridis(t));
    }
    out << "</linearGradient></defs>\n";
    out << fmt::format("<rect class=\"colorbar\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"14\" height=\"{:.2f}\" "
                       "fill=\"url(#cbar)\" stroke=\"#333333\"/>\n",
                       f.right + 16, f.top, f.plot_h());
    out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\">{:.4g}</text>\n",
                       f.right + 34, f.top + 8, vr.hi);
    out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\">{:.4g}</text>\n",
                       f.right + 34, f.bottom, vr.lo);
}

std::vector<int> distinct_groups(const std::vector<int>& groups) {
    std::set<int> s(groups.begin(), groups.end());
    return {s.begin(), s.end()};
}

std::string scatter_svg(const GraphData& g, const RenderConfig& cfg) {
    std::ostringstream out;
    svg_open(out, cfg);
    Frame f;
    f.right = cfg.width - 150.0;
    f.bottom = cfg.height - 50.0;
    const Range xr = Range::of(g.x);
    const Range yr = Range::of(g.y);
    const Range vr = Range::of(g.values);
    axes(out, f, g, xr, yr, true);

    out << "<g class=\"points\">\n";
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        const double px = f.left + xr.unit(g.x[i]) * f.plot_w();
        const double py = f.bottom - yr.unit(g.y[i]) * f.plot_h();
        const std::string color = g.groups.empty() ? viridis(vr.unit(g.values[i]))
                                                   : palette_color(cfg.palette, static_cast<std::size_t>(g.groups[i]));
        out << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"{}\" fill-opacity=\"0.8\"/>\n", px,
                           py, cfg.point_size, color);
    }
    out << "</g>\n";
    if (!g.groups.empty()) {
        legend(out, f, g, distinct_groups(g.groups), cfg);
    } else if (g.colorbar) {
        colorbar(out, f, vr);
    }
    out << "</svg>\n";
    return out.str();
}

std::string bar_svg(const GraphData& g, const RenderConfig& cfg) {
    std::ostringstream out;
    svg_open(out, cfg);
    Frame f;
    f.right = cfg.width - 150.0;
    f.bottom = cfg.height - 50.0;

    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        const double e = g.error ? (*g.error)[i] : 0.0;
        if (!std::isfinite(g.values[i])) continue;
        lo = std::min(lo, g.values[i] - e);
        hi = std::max(hi, g.values[i] + e);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const Range yr{lo, hi};
    const Range xr{0.0, static_cast<double>(g.values.size())};
    axes(out, f, g, xr, yr, false);

    const double slot = f.plot_w() / static_cast<double>(g.values.size());
    const double zero = f.bottom - yr.unit(0.0) * f.plot_h();
    out << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#333333\"/>\n", f.left,
                       zero, f.right, zero);
    out << "<g class=\"bars\">\n";
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        const double v = std::isfinite(g.values[i]) ? g.values[i] : 0.0;
        const double top = f.bottom - yr.unit(std::max(v, 0.0)) * f.plot_h();
        const double bottom = f.bottom - yr.unit(std::min(v, 0.0)) * f.plot_h();
        const double x0 = f.left + slot * (static_cast<double>(i) + 0.15);
        const std::string color =
            g.groups.empty() ? palette_color(cfg.palette, 0) : palette_color(cfg.palette, static_cast<std::size_t>(g.groups[i]));
        out << fmt::format("<rect class=\"bar\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
                           "fill=\"{}\"/>\n",
                           x0, top, slot * 0.7, bottom - top, color);
        if (g.error) {
            const double e = (*g.error)[i];
            const double cx = x0 + slot * 0.35;
            const double y1 = f.bottom - yr.unit(v + e) * f.plot_h();
            const double y2 = f.bottom - yr.unit(v - e) * f.plot_h();
            out << fmt::format("<line class=\"errorbar\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
                               "stroke=\"#000000\"/>\n",
                               cx, y1, cx, y2);
        }
        const double label = g.x.empty() ? static_cast<double>(i) : g.x[i];
        out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"9\" "
                           "text-anchor=\"middle\">{}</text>\n",
                           x0 + slot * 0.35, f.bottom + 14, label);
    }
    out << "</g>\n";
    if (!g.groups.empty()) legend(out, f, g, distinct_groups(g.groups), cfg);
    out << "</svg>\n";
    return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.empty()) throw ConfigError("render config has no output path");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string node_shape(Stage s) {
    switch (s) {
        case Stage::initial:
            return "doublecircle";
        case Stage::terminal:
            return "octagon";
        case Stage::intermediate:
            return "circle";
    }
    return "circle";
}

std::string edge_label(const SAMDPEdge& e) {
    if (e.action == kMergedAction) return fmt::format("p={:.2f}", e.probability);
    return fmt::format("a={} p={:.2f}", e.action, e.probability);
}

}  // namespace

void RenderConfig::check() const {
    if (width <= 0 || height <= 0) throw InputError("render width and height must be positive");
    if (palette != "tab10" && palette != "dark2") throw ConfigError("unknown palette '" + palette + "'");
    if (!(point_size > 0.0)) throw InputError("point size must be positive");
}

std::string chart_svg(const GraphData& data, const RenderConfig& config) {
    config.check();
    data.check();
    if (data.values.empty()) throw InputError("cannot render an empty chart");
    return data.kind == ChartKind::bar ? bar_svg(data, config) : scatter_svg(data, config);
}

void render_chart(const GraphData& data, const RenderConfig& config) {
    write_text(config.output_path, chart_svg(data, config));
}

std::string emit_dot(const SAMDPView& view, bool verbose) {
    std::ostringstream out;
    out << "digraph \"SAMDP " << to_string(view.kind) << "\" {\n";
    out << "  rankdir=LR\n";
    auto nodes = view.nodes;
    std::sort(nodes.begin(), nodes.end(), [](const SAMDPNode& a, const SAMDPNode& b) { return a.id < b.id; });
    for (const auto& n : nodes) {
        out << "  Cluster_" << n.id << " [shape=" << node_shape(n.stage) << "]\n";
    }
    auto edges = view.edges;
    std::sort(edges.begin(), edges.end());
    for (const auto& e : edges) {
        out << "  Cluster_" << e.from << " -> Cluster_" << e.to;
        if (verbose) out << " [label=\"" << edge_label(e) << "\"]";
        out << "\n";
    }
    out << "}\n";
    return out.str();
}

GraphLayout layout_graph(const SAMDPView& view, std::uint64_t seed) {
    GraphLayout layout;
    const std::size_t n = view.nodes.size();
    if (n == 0) throw InputError("cannot lay out a graph with no nodes");
    layout.ideal_length = std::sqrt(1.0 / static_cast<double>(n));
    if (n == 1) {
        layout.positions[view.nodes.front().id] = {0.5, 0.5};
        return layout;
    }

    std::map<int, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) slot[view.nodes[i].id] = i;
    std::set<std::pair<std::size_t, std::size_t>> springs;
    for (const auto& e : view.edges) {
        const auto a = slot.at(e.from), b = slot.at(e.to);
        if (a != b) springs.insert({std::min(a, b), std::max(a, b)});
    }

    Rng rng(seed);
    std::vector<double> px(n), py(n);
    for (std::size_t i = 0; i < n; ++i) {
        px[i] = rng.uniform();
        py[i] = rng.uniform();
    }

    const double k = layout.ideal_length;
    const double t0 = 0.1;
    std::vector<double> dx(n), dy(n);
    for (int iter = 0; iter < kLayoutIterations; ++iter) {
        std::fill(dx.begin(), dx.end(), 0.0);
        std::fill(dy.begin(), dy.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double ddx = px[i] - px[j], ddy = py[i] - py[j];
                double d = std::hypot(ddx, ddy);
                if (d < 1e-9) {
                    // Coincident nodes: push apart along a fixed direction.
                    ddx = 1e-9 * static_cast<double>(j - i);
                    ddy = 0.0;
                    d = std::fabs(ddx);
                }
                const double force = k * k / d;
                dx[i] += ddx / d * force;
                dy[i] += ddy / d * force;
                dx[j] -= ddx / d * force;
                dy[j] -= ddy / d * force;
            }
        }
        for (const auto& [a, b] : springs) {
            const double ddx = px[a] - px[b], ddy = py[a] - py[b];
            const double d = std::hypot(ddx, ddy);
            if (d < 1e-12) continue;
            const double force = d * d / k;
            dx[a] -= ddx / d * force;
            dy[a] -= ddy / d * force;
            dx[b] += ddx / d * force;
            dy[b] += ddy / d * force;
        }
        const double temperature = t0 * (1.0 - static_cast<double>(iter) / kLayoutIterations);
        for (std::size_t i = 0; i < n; ++i) {
            const double len = std::hypot(dx[i], dy[i]);
            if (len < 1e-12) continue;
            const double step = std::min(len, temperature);
            px[i] = std::clamp(px[i] + dx[i] / len * step, 0.0, 1.0);
            py[i] = std::clamp(py[i] + dy[i] / len * step, 0.0, 1.0);
        }
    }

    // Separate any nodes that the frame clamp pinned onto the same spot.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (px[i] == px[j] && py[i] == py[j]) {
                px[i] = std::clamp(px[i] + (px[i] < 0.5 ? 1e-3 : -1e-3) * static_cast<double>(i - j), 0.0, 1.0);
                j = static_cast<std::size_t>(-1);  // restart the scan for i
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) layout.positions[view.nodes[i].id] = {px[i], py[i]};
    return layout;
}

std::string graph_svg(const SAMDPView& view, const GraphLayout& layout, const RenderConfig& cfg, bool verbose) {
    cfg.check();
    std::ostringstream out;
    svg_open(out, cfg);
    const double margin = 40.0;
    const double w = cfg.width - 2 * margin, h = cfg.height - 2 * margin;
    auto at = [&](int id) {
        const auto [x, y] = layout.positions.at(id);
        return std::pair{margin + x * w, margin + y * h};
    };
    out << "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"6\" "
           "markerHeight=\"6\" orient=\"auto\"><path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#555555\"/></marker></defs>\n";
    out << fmt::format("<text x=\"{:.2f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
                       "text-anchor=\"middle\">SAMDP ({})</text>\n",
                       cfg.width / 2.0, escape(to_string(view.kind)));

    const double radius = 16.0;
    auto edges = view.edges;
    std::sort(edges.begin(), edges.end());
    out << "<g class=\"edges\">\n";
    for (const auto& e : edges) {
        const auto [x1, y1] = at(e.from);
        const auto [x2, y2] = at(e.to);
        const double d = std::max(std::hypot(x2 - x1, y2 - y1), 1e-9);
        const double ux = (x2 - x1) / d, uy = (y2 - y1) / d;
        out << fmt::format("<line class=\"edge\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#555555\" "
                           "stroke-width=\"{:.2f}\" marker-end=\"url(#arrow)\"/>\n",
                           x1 + ux * radius, y1 + uy * radius, x2 - ux * radius, y2 - uy * radius,
                           0.5 + 2.5 * e.probability);
        if (verbose) {
            out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"9\" "
                               "text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
                               (x1 + x2) / 2, (y1 + y2) / 2 - 3, escape(edge_label(e)));
        }
    }
    out << "</g>\n<g class=\"nodes\">\n";
    for (const auto& n : view.nodes) {
        const auto [x, y] = at(n.id);
        const std::string fill = palette_color(cfg.palette, static_cast<std::size_t>(n.stage));
        out << fmt::format("<g class=\"node\" id=\"Cluster_{}\">\n", n.id);
        if (n.stage == Stage::terminal) {
            std::string pts;
            for (int v = 0; v < 8; ++v) {
                const double ang = (v + 0.5) * std::numbers::pi / 4.0;
                pts += fmt::format("{:.2f},{:.2f} ", x + radius * std::cos(ang), y + radius * std::sin(ang));
            }
            pts.pop_back();
            out << fmt::format("<polygon points=\"{}\" fill=\"{}\" stroke=\"#222222\"/>\n", pts, fill);
        } else {
            out << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"{}\" stroke=\"#222222\"/>\n",
                               x, y, radius, fill);
            if (n.stage == Stage::initial) {
                out << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"none\" "
                                   "stroke=\"#222222\"/>\n",
                                   x, y, radius - 3.0);
            }
        }
        out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                           "text-anchor=\"middle\">{}</text>\n",
                           x, y + 4, n.id);
        out << "</g>\n";
    }
    out << "</g>\n</svg>\n";
    return out.str();
}

GraphLayout render_graph(const SAMDPView& view, std::uint64_t seed, const RenderConfig& config, bool verbose) {
    auto layout = layout_graph(view, seed);
    write_text(config.output_path, graph_svg(view, layout, config, verbose));
    return layout;
}

}  // namespace xrl
