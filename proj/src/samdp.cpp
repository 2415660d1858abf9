#include "xrl/samdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "xrl/errors.hpp"

namespace xrl {

SAMDPModel::SAMDPModel(int num_clusters, int num_actions, std::vector<Stage> stage_of)
    : clusters_(num_clusters), actions_(num_actions), stage_of_(std::move(stage_of)) {
    if (num_clusters < 1 || num_actions < 1) throw InputError("SAMDP needs at least one cluster and one action");
    if (stage_of_.size() != static_cast<std::size_t>(num_clusters)) {
        throw InputError("stage table does not match the cluster count");
    }
    const auto cells = static_cast<std::size_t>(num_clusters) * static_cast<std::size_t>(num_actions) *
                       static_cast<std::size_t>(num_clusters);
    counts_.assign(cells, 0);
    probs_.assign(cells, 0.0);
}

std::int64_t SAMDPModel::merged_count(int from, int to) const noexcept {
    std::int64_t n = 0;
    for (int a = 0; a < actions_; ++a) n += count(from, a, to);
    return n;
}

std::int64_t SAMDPModel::row_total(int from) const noexcept {
    std::int64_t n = 0;
    for (int a = 0; a < actions_; ++a) {
        for (int t = 0; t < clusters_; ++t) n += count(from, a, t);
    }
    return n;
}

std::int64_t SAMDPModel::total_transitions() const noexcept {
    std::int64_t n = 0;
    for (auto c : counts_) n += c;
    return n;
}

std::pair<int, double> SAMDPModel::best_action(int from, int to) const noexcept {
    int best = -1;
    double p = 0.0;
    for (int a = 0; a < actions_; ++a) {
        if (count(from, a, to) > 0 && prob(from, a, to) > p) {
            p = prob(from, a, to);
            best = a;
        }
    }
    return {best, p};
}

void SAMDPModel::add(int from, int action, int to, std::int64_t n) {
    if (from < 0 || from >= clusters_ || to < 0 || to >= clusters_ || action < 0 || action >= actions_) {
        throw InputError("SAMDP transition index out of range");
    }
    counts_[index(from, action, to)] += n;
}

void SAMDPModel::normalize() {
    for (int f = 0; f < clusters_; ++f) {
        for (int a = 0; a < actions_; ++a) {
            std::int64_t total = 0;
            for (int t = 0; t < clusters_; ++t) total += count(f, a, t);
            for (int t = 0; t < clusters_; ++t) {
                probs_[index(f, a, t)] =
                    total > 0 ? static_cast<double>(count(f, a, t)) / static_cast<double>(total) : 0.0;
            }
        }
    }
}

SAMDPModel build_samdp(const XRLDataset& d, const DerivedFields& derived, const ClusterAssignment& clusters) {
    const std::size_t n = d.size();
    if (clusters.labels.size() != n) throw InputError("cluster labels do not match the dataset");
    if (derived.episode_ids.size() != n) throw InputError("derived fields do not match the dataset");

    SAMDPModel model(clusters.num_clusters(), d.meta.num_actions, clusters.stage_of);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (derived.episode_ids[i] != derived.episode_ids[i + 1]) continue;
        model.add(clusters.labels[i], d.actions[i], clusters.labels[i + 1]);
    }
    model.normalize();
    return model;
}

std::string to_string(ViewKind kind) {
    switch (kind) {
        case ViewKind::complete:
            return "complete";
        case ViewKind::simplified:
            return "simplified";
        case ViewKind::likely:
            return "likely";
        case ViewKind::path:
            return "path";
        case ViewKind::terminal_paths:
            return "terminal-paths";
    }
    return "unknown";
}

ViewKind view_kind_from_string(const std::string& text) {
    for (auto k : {ViewKind::complete, ViewKind::simplified, ViewKind::likely, ViewKind::path,
                   ViewKind::terminal_paths}) {
        if (to_string(k) == text) return k;
    }
    throw InputError("unknown SAMDP view kind '" + text + "'");
}

void SAMDPView::check() const {
    std::vector<int> ids;
    for (const auto& n : nodes) ids.push_back(n.id);
    for (const auto& e : edges) {
        if (!std::binary_search(ids.begin(), ids.end(), e.from) || !std::binary_search(ids.begin(), ids.end(), e.to)) {
            throw InputError("SAMDP view edge references a missing node");
        }
        if (!(e.probability > 0.0 && e.probability <= 1.0)) {
            throw InputError("SAMDP view edge probability outside (0, 1]");
        }
    }
}

namespace {

std::vector<SAMDPNode> all_nodes(const SAMDPModel& m) {
    std::vector<SAMDPNode> nodes;
    for (int c = 0; c < m.num_clusters(); ++c) nodes.push_back({c, m.stage(c)});
    return nodes;
}

void check_endpoints(const SAMDPModel& m, int from, int to) {
    if (from < 0 || from >= m.num_clusters() || to < 0 || to >= m.num_clusters()) {
        throw InputError("path endpoints must be cluster ids in [0, " + std::to_string(m.num_clusters()) + ")");
    }
    if (m.stage(from) == Stage::terminal) {
        throw InputError("cluster " + std::to_string(from) + " is terminal and has no outgoing transitions");
    }
}

void finish_path(const SAMDPModel& m, SAMDPPath& path) {
    path.hops.clear();
    path.probability = 1.0;
    for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
        const auto [action, p] = m.best_action(path.nodes[i], path.nodes[i + 1]);
        path.hops.push_back({path.nodes[i], path.nodes[i + 1], action, p});
        path.probability *= p;
    }
    path.reachable = true;
}

}  // namespace

SAMDPView make_view(const SAMDPModel& m, ViewKind kind, const ViewOptions& options) {
    SAMDPView view;
    view.kind = kind;
    view.nodes = all_nodes(m);
    const int c = m.num_clusters();
    auto keep = [&](const SAMDPEdge& e) {
        if (e.probability >= options.min_prob) view.edges.push_back(e);
    };

    switch (kind) {
        case ViewKind::complete:
            for (int f = 0; f < c; ++f) {
                for (int t = 0; t < c; ++t) {
                    if (t == f) continue;
                    for (int a = 0; a < m.num_actions(); ++a) {
                        if (m.count(f, a, t) > 0) keep({f, t, a, m.prob(f, a, t), m.count(f, a, t)});
                    }
                }
            }
            break;
        case ViewKind::simplified:
            for (int f = 0; f < c; ++f) {
                const auto total = m.row_total(f);
                for (int t = 0; t < c; ++t) {
                    const auto n = m.merged_count(f, t);
                    if (t == f || n == 0) continue;
                    keep({f, t, kMergedAction, static_cast<double>(n) / static_cast<double>(total), n});
                }
            }
            break;
        case ViewKind::likely:
            for (int f = 0; f < c; ++f) {
                for (int a = 0; a < m.num_actions(); ++a) {
                    int best = -1;
                    for (int t = 0; t < c; ++t) {
                        if (m.count(f, a, t) > 0 && (best < 0 || m.prob(f, a, t) > m.prob(f, a, best))) best = t;
                    }
                    if (best >= 0 && best != f) keep({f, best, a, m.prob(f, a, best), m.count(f, a, best)});
                }
            }
            break;
        case ViewKind::path:
        case ViewKind::terminal_paths:
            throw InputError("use path_view / terminal_paths_view for '" + to_string(kind) + "'");
    }
    std::sort(view.edges.begin(), view.edges.end());
    return view;
}

SAMDPPath best_path(const SAMDPModel& m, int from, int to) {
    check_endpoints(m, from, to);
    SAMDPPath path;
    if (from == to) {
        path.reachable = true;
        path.probability = 1.0;
        return path;
    }

    const int c = m.num_clusters();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<std::size_t>(c), inf);
    std::vector<int> prev(static_cast<std::size_t>(c), -1);
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    dist[static_cast<std::size_t>(from)] = 0.0;
    queue.emplace(0.0, from);
    while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        if (u == to) break;
        for (int v = 0; v < c; ++v) {
            if (v == u) continue;
            const auto [action, p] = m.best_action(u, v);
            if (action < 0) continue;
            const double nd = d - std::log(p);
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                prev[static_cast<std::size_t>(v)] = u;
                queue.emplace(nd, v);
            }
        }
    }
    if (std::isinf(dist[static_cast<std::size_t>(to)])) {
        path.reachable = false;
        path.probability = 0.0;
        return path;
    }
    for (int v = to; v != -1; v = prev[static_cast<std::size_t>(v)]) path.nodes.push_back(v);
    std::reverse(path.nodes.begin(), path.nodes.end());
    finish_path(m, path);
    return path;
}

std::vector<SAMDPPath> all_paths(const SAMDPModel& m, int from, int to, int max_hops) {
    if (max_hops < 1) throw InputError("max_hops must be at least 1");
    check_endpoints(m, from, to);
    std::vector<SAMDPPath> out;
    if (from == to) {
        SAMDPPath identity;
        identity.reachable = true;
        identity.probability = 1.0;
        out.push_back(identity);
        return out;
    }

    const int c = m.num_clusters();
    std::vector<std::vector<int>> next(static_cast<std::size_t>(c));
    for (int f = 0; f < c; ++f) {
        for (int t = 0; t < c; ++t) {
            if (t != f && m.merged_count(f, t) > 0) next[static_cast<std::size_t>(f)].push_back(t);
        }
    }

    std::vector<int> stack{from};
    std::vector<bool> on_path(static_cast<std::size_t>(c), false);
    on_path[static_cast<std::size_t>(from)] = true;
    auto dfs = [&](auto&& self, int u) -> void {
        if (u == to) {
            SAMDPPath p;
            p.nodes = stack;
            finish_path(m, p);
            out.push_back(std::move(p));
            return;
        }
        if (static_cast<int>(stack.size()) - 1 >= max_hops) return;
        for (int v : next[static_cast<std::size_t>(u)]) {
            if (on_path[static_cast<std::size_t>(v)]) continue;
            on_path[static_cast<std::size_t>(v)] = true;
            stack.push_back(v);
            self(self, v);
            stack.pop_back();
            on_path[static_cast<std::size_t>(v)] = false;
        }
    };
    dfs(dfs, from);

    std::sort(out.begin(), out.end(), [](const SAMDPPath& a, const SAMDPPath& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        return a.nodes < b.nodes;
    });
    return out;
}

SAMDPView terminal_paths_view(const SAMDPModel& m, bool per_action) {
    const int c = m.num_clusters();
    std::vector<bool> reaches(static_cast<std::size_t>(c), false);
    std::vector<int> frontier;
    for (int id = 0; id < c; ++id) {
        if (m.stage(id) == Stage::terminal) {
            reaches[static_cast<std::size_t>(id)] = true;
            frontier.push_back(id);
        }
    }
    if (frontier.empty()) throw StagingError("SAMDP has no terminal clusters");

    while (!frontier.empty()) {
        const int t = frontier.back();
        frontier.pop_back();
        for (int f = 0; f < c; ++f) {
            if (f != t && !reaches[static_cast<std::size_t>(f)] && m.merged_count(f, t) > 0) {
                reaches[static_cast<std::size_t>(f)] = true;
                frontier.push_back(f);
            }
        }
    }

    SAMDPView view;
    view.kind = ViewKind::terminal_paths;
    for (int id = 0; id < c; ++id) {
        if (reaches[static_cast<std::size_t>(id)]) view.nodes.push_back({id, m.stage(id)});
    }
    for (int f = 0; f < c; ++f) {
        for (int t = 0; t < c; ++t) {
            if (f == t || !reaches[static_cast<std::size_t>(t)] || m.merged_count(f, t) == 0) continue;
            if (per_action) {
                for (int a = 0; a < m.num_actions(); ++a) {
                    if (m.count(f, a, t) > 0) view.edges.push_back({f, t, a, m.prob(f, a, t), m.count(f, a, t)});
                }
            } else {
                const auto [action, p] = m.best_action(f, t);
                view.edges.push_back({f, t, action, p, m.count(f, action, t)});
            }
        }
    }
    std::sort(view.edges.begin(), view.edges.end());
    return view;
}

SAMDPView path_view(const SAMDPModel& m, const SAMDPPath& path) {
    SAMDPView view;
    view.kind = ViewKind::path;
    std::vector<int> ids = path.nodes;
    std::sort(ids.begin(), ids.end());
    for (int id : ids) view.nodes.push_back({id, m.stage(id)});
    for (const auto& h : path.hops) {
        view.edges.push_back({h.from, h.to, h.action, h.probability, m.count(h.from, h.action, h.to)});
    }
    std::sort(view.edges.begin(), view.edges.end());
    return view;
}

nlohmann::json to_json(const SAMDPView& view) {
    nlohmann::json j;
    j["kind"] = to_string(view.kind);
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : view.nodes) j["nodes"].push_back({{"id", n.id}, {"stage", to_string(n.stage)}});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : view.edges) {
        j["edges"].push_back({{"from", e.from},
                              {"to", e.to},
                              {"action", e.action == kMergedAction ? nlohmann::json(nullptr) : nlohmann::json(e.action)},
                              {"probability", e.probability},
                              {"count", e.count}});
    }
    return j;
}

nlohmann::json to_json(const SAMDPPath& path) {
    nlohmann::json j;
    j["reachable"] = path.reachable;
    j["probability"] = path.probability;
    j["path"] = path.nodes;
    j["hops"] = nlohmann::json::array();
    for (const auto& h : path.hops) {
        j["hops"].push_back({{"from", h.from}, {"to", h.to}, {"action", h.action}, {"probability", h.probability}});
    }
    return j;
}

}  // namespace xrl
