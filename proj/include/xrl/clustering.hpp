#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xrl/dataset.hpp"
#include "xrl/matrix.hpp"

namespace xrl {

struct KMeansOptions {
    int max_iterations = 300;
    double tolerance = 1e-6;  // max centroid displacement
};

struct KMeansResult {
    std::vector<int> labels;
    RealMatrix centroids;
    double inertia = 0.0;
    // Inertia after every assignment step, initial assignment first.
    std::vector<double> inertia_history;
    int iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations. Nearest-centroid ties go to
// the lowest centroid index; an empty cluster is reseeded at the point farthest
// from its assigned centroid.
KMeansResult kmeans(const RealMatrix& features, int k, std::uint64_t seed, const KMeansOptions& options = {});

struct MeanShiftResult {
    std::vector<int> labels;
    RealMatrix modes;
    std::vector<std::size_t> support;  // points within bandwidth of each mode
    double bandwidth = 0.0;
};

// Flat-kernel mean shift seeded from every point. Modes closer than
// bandwidth / 2 are merged (the better-supported one survives) and points take
// the label of their nearest surviving mode.
MeanShiftResult meanshift(const RealMatrix& features, double bandwidth);

// Mean distance from each point of a seeded subsample (at most 1000 points) to
// its ceil(quantile * N)-th nearest neighbour, counting the point itself.
// Returns 1e-3 when that mean is zero (coincident points).
double estimate_bandwidth(const RealMatrix& features, double quantile, std::uint64_t seed);

inline constexpr double kBandwidthFallback = 1e-3;

enum class Stage { intermediate, initial, terminal };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& text);

// Ids are contiguous: [0, k) intermediate, then initial, then terminal.
struct ClusterAssignment {
    std::vector<int> labels;
    int k_intermediate = 0;
    int n_initial = 0;
    int n_terminal = 0;
    std::vector<Stage> stage_of;  // indexed by cluster id
    std::vector<std::string> feature_spec;
    std::uint64_t seed = 0;

    int num_clusters() const noexcept { return k_intermediate + n_initial + n_terminal; }
};

struct StagedClusterOptions {
    std::optional<double> initial_bandwidth;   // estimated when absent
    std::optional<double> terminal_bandwidth;  // estimated when absent
    double bandwidth_quantile = 0.3;
    KMeansOptions kmeans;
};

// Steps == 0 rows are clustered with mean shift (initial stage), done rows with
// mean shift independently (terminal stage), everything else with k-means. A
// single-step episode's only record is both; it is staged as terminal.
ClusterAssignment generate_clusters(const XRLDataset& dataset, const DerivedFields& derived,
                                    const RealMatrix& features, int k, std::uint64_t seed,
                                    const StagedClusterOptions& options = {});

ClusterAssignment generate_clusters(const XRLDataset& dataset, const DerivedFields& derived,
                                    const std::vector<std::string>& feature_spec, int k, std::uint64_t seed,
                                    const StagedClusterOptions& options = {});

// Lists every broken ClusterAssignment invariant against the dataset masks.
std::vector<std::string> check_assignment(const XRLDataset& dataset, const ClusterAssignment& clusters);

void save_clusters(const ClusterAssignment& clusters, const std::filesystem::path& path);
ClusterAssignment load_clusters(const std::filesystem::path& path);

}  // namespace xrl
