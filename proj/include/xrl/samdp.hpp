#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xrl/clustering.hpp"
#include "xrl/dataset.hpp"

namespace xrl {

// Semi-aggregated MDP over clusters: observed transition counts indexed
// (from-cluster, action, to-cluster) and their per-(from, action) frequencies.
class SAMDPModel {
public:
    SAMDPModel() = default;
    SAMDPModel(int num_clusters, int num_actions, std::vector<Stage> stage_of);

    int num_clusters() const noexcept { return clusters_; }
    int num_actions() const noexcept { return actions_; }
    const std::vector<Stage>& stage_of() const noexcept { return stage_of_; }
    Stage stage(int cluster) const { return stage_of_.at(static_cast<std::size_t>(cluster)); }

    std::int64_t count(int from, int action, int to) const noexcept { return counts_[index(from, action, to)]; }
    double prob(int from, int action, int to) const noexcept { return probs_[index(from, action, to)]; }

    // Transitions from `from` to `to` summed over actions.
    std::int64_t merged_count(int from, int to) const noexcept;
    std::int64_t row_total(int from) const noexcept;
    std::int64_t total_transitions() const noexcept;

    // max_a prob(from, a, to) with its action (lowest action on ties); action -1 if no mass.
    std::pair<int, double> best_action(int from, int to) const noexcept;

    void add(int from, int action, int to, std::int64_t n = 1);
    // Recomputes probabilities from counts.
    void normalize();

private:
    std::size_t index(int from, int action, int to) const noexcept {
        return (static_cast<std::size_t>(from) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(action)) *
                   static_cast<std::size_t>(clusters_) +
               static_cast<std::size_t>(to);
    }

    int clusters_ = 0;
    int actions_ = 0;
    std::vector<Stage> stage_of_;
    std::vector<std::int64_t> counts_;
    std::vector<double> probs_;
};

// Counts every consecutive in-episode pair (i, i + 1), self transitions included.
SAMDPModel build_samdp(const XRLDataset& dataset, const DerivedFields& derived, const ClusterAssignment& clusters);

enum class ViewKind { complete, simplified, likely, path, terminal_paths };

std::string to_string(ViewKind kind);
ViewKind view_kind_from_string(const std::string& text);

inline constexpr int kMergedAction = -1;

struct SAMDPEdge {
    int from = 0;
    int to = 0;
    int action = kMergedAction;  // kMergedAction when aggregated over actions
    double probability = 0.0;
    std::int64_t count = 0;

    auto operator<=>(const SAMDPEdge&) const = default;
};

struct SAMDPNode {
    int id = 0;
    Stage stage = Stage::intermediate;

    bool operator==(const SAMDPNode&) const = default;
};

struct SAMDPView {
    ViewKind kind = ViewKind::complete;
    std::vector<SAMDPNode> nodes;  // ascending id
    std::vector<SAMDPEdge> edges;  // lexicographic (from, to, action)

    void check() const;
};

struct ViewOptions {
    double min_prob = 0.0;  // edges below this probability are dropped
};

// complete / simplified / likely. Self-loops are never shown.
SAMDPView make_view(const SAMDPModel& model, ViewKind kind, const ViewOptions& options = {});

struct PathHop {
    int from = 0;
    int to = 0;
    int action = 0;
    double probability = 0.0;
};

struct SAMDPPath {
    std::vector<int> nodes;  // empty for the identity path or when unreachable
    std::vector<PathHop> hops;
    double probability = 0.0;
    bool reachable = false;
};

// Most probable path with per-hop weight -ln(max_a p(from, a, to)).
SAMDPPath best_path(const SAMDPModel& model, int from, int to);

// Every simple path of at most `max_hops` hops, most probable first, ties by
// lexicographic node sequence.
std::vector<SAMDPPath> all_paths(const SAMDPModel& model, int from, int to, int max_hops = 10);

// Edges on some route into a terminal cluster. With `per_action` each action
// gets its own edge; otherwise edges carry the best action and its probability.
SAMDPView terminal_paths_view(const SAMDPModel& model, bool per_action = false);

SAMDPView path_view(const SAMDPModel& model, const SAMDPPath& path);

nlohmann::json to_json(const SAMDPView& view);
nlohmann::json to_json(const SAMDPPath& path);

}  // namespace xrl
