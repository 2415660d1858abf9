#include "xrl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "xrl/embedding.hpp"
#include "xrl/errors.hpp"
#include "xrl/rng.hpp"
#include "xrl/xrld.hpp"

namespace xrl {
namespace {

constexpr int kMeanShiftMaxIterations = 300;
constexpr std::size_t kBandwidthSample = 1000;

void require_finite(const RealMatrix& m) {
    for (double v : m.values()) {
        if (!std::isfinite(v)) throw InputError("feature matrix contains non-finite values");
    }
}

// Returns inertia; labels/distances are overwritten.
double assign(const RealMatrix& x, const RealMatrix& centroids, std::vector<int>& labels, std::vector<double>& dist) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            const double d = squared_distance(x.row(i), centroids.row(c));
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        labels[i] = best;
        dist[i] = best_d;
        inertia += best_d;
    }
    return inertia;
}

RealMatrix kmeanspp(const RealMatrix& x, int k, Rng& rng) {
    const std::size_t n = x.rows();
    RealMatrix centroids(static_cast<std::size_t>(k), x.cols());
    std::size_t first = rng.below(n);
    std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());

    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(x.row(i), centroids.row(0));

    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += closest[i];
                if (acc > target && closest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (closest[pick] == 0.0 && pick > 0) --pick;
        } else {
            pick = rng.below(n);
        }
        std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(static_cast<std::size_t>(c)).begin());
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(x.row(i), centroids.row(static_cast<std::size_t>(c))));
        }
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const RealMatrix& x, int k, std::uint64_t seed, const KMeansOptions& opt) {
    const std::size_t n = x.rows();
    if (k <= 0) throw InputError("k must be positive");
    if (static_cast<std::size_t>(k) > n) {
        throw InputError("k = " + std::to_string(k) + " exceeds the number of points (" + std::to_string(n) + ")");
    }
    require_finite(x);

    Rng rng(seed);
    KMeansResult r;
    r.centroids = kmeanspp(x, k, rng);
    r.labels.assign(n, 0);
    std::vector<double> dist(n);
    r.inertia = assign(x, r.centroids, r.labels, dist);
    r.inertia_history.push_back(r.inertia);

    const std::size_t dims = x.cols();
    std::vector<std::size_t> counts(static_cast<std::size_t>(k));
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        RealMatrix next(static_cast<std::size_t>(k), dims, 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(r.labels[i]);
            ++counts[c];
            auto row = next.row(c);
            for (std::size_t d = 0; d < dims; ++d) row[d] += x(i, d);
        }
        bool reseeded = false;
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] > 0) {
                for (double& v : next.row(c)) v /= static_cast<double>(counts[c]);
                continue;
            }
            // Empty: move to the point farthest from its own centroid.
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            taken[far] = true;
            std::copy(x.row(far).begin(), x.row(far).end(), next.row(c).begin());
            reseeded = true;
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            shift = std::max(shift, std::sqrt(squared_distance(next.row(c), r.centroids.row(c))));
        }
        r.centroids = std::move(next);
        r.inertia = assign(x, r.centroids, r.labels, dist);
        r.inertia_history.push_back(r.inertia);
        r.iterations = iter + 1;
        if (shift < opt.tolerance && !reseeded) {
            break;
        }
    }
    return r;
}

MeanShiftResult meanshift(const RealMatrix& x, double bandwidth) {
    const std::size_t n = x.rows();
    if (n == 0) throw InputError("mean shift needs at least one point");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InputError("bandwidth must be positive");
    require_finite(x);

    const std::size_t dims = x.cols();
    const double bw2 = bandwidth * bandwidth;
    const double stop = 1e-3 * bandwidth;

    struct Candidate {
        std::vector<double> mode;
        std::size_t support;
        std::size_t seed;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(n);
    std::vector<double> mean(dims);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> mode(x.row(s).begin(), x.row(s).end());
        std::size_t support = 0;
        for (int iter = 0; iter < kMeanShiftMaxIterations; ++iter) {
            std::fill(mean.begin(), mean.end(), 0.0);
            support = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (squared_distance(x.row(i), mode) <= bw2) {
                    ++support;
                    for (std::size_t d = 0; d < dims; ++d) mean[d] += x(i, d);
                }
            }
            if (support == 0) break;
            for (double& v : mean) v /= static_cast<double>(support);
            const double moved = std::sqrt(squared_distance(mean, mode));
            mode = mean;
            if (moved < stop) break;
        }
        support = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (squared_distance(x.row(i), mode) <= bw2) ++support;
        }
        candidates.push_back({std::move(mode), support, s});
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.support > b.support; });
    const double merge2 = 0.25 * bw2;
    std::vector<const Candidate*> kept;
    for (const auto& c : candidates) {
        const bool near = std::any_of(kept.begin(), kept.end(),
                                      [&](const Candidate* k) { return squared_distance(k->mode, c.mode) < merge2; });
        if (!near) kept.push_back(&c);
    }

    std::vector<int> labels(n, 0);
    std::vector<std::size_t> members(kept.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < kept.size(); ++m) {
            const double d = squared_distance(x.row(i), kept[m]->mode);
            if (d < best) {
                best = d;
                labels[i] = static_cast<int>(m);
            }
        }
        ++members[static_cast<std::size_t>(labels[i])];
    }

    // Drop modes that attracted no points and compact the ids.
    std::vector<int> remap(kept.size(), -1);
    MeanShiftResult r;
    r.bandwidth = bandwidth;
    std::vector<double> flat;
    for (std::size_t m = 0; m < kept.size(); ++m) {
        if (members[m] == 0) continue;
        remap[m] = static_cast<int>(r.support.size());
        r.support.push_back(kept[m]->support);
        flat.insert(flat.end(), kept[m]->mode.begin(), kept[m]->mode.end());
    }
    for (int& l : labels) l = remap[static_cast<std::size_t>(l)];
    r.labels = std::move(labels);
    r.modes = RealMatrix(r.support.size(), dims, std::move(flat));
    return r;
}

double estimate_bandwidth(const RealMatrix& x, double quantile, std::uint64_t seed) {
    const std::size_t n = x.rows();
    if (n < 2) throw InputError("bandwidth estimation needs at least two points");
    if (!(quantile > 0.0 && quantile <= 1.0)) throw InputError("quantile must lie in (0, 1]");
    require_finite(x);

    std::vector<std::size_t> sample(n);
    std::iota(sample.begin(), sample.end(), std::size_t{0});
    if (n > kBandwidthSample) {
        Rng rng(seed);
        // Partial Fisher-Yates: the first kBandwidthSample slots form the sample.
        for (std::size_t i = 0; i < kBandwidthSample; ++i) {
            const std::size_t j = i + rng.below(n - i);
            std::swap(sample[i], sample[j]);
        }
        sample.resize(kBandwidthSample);
        std::sort(sample.begin(), sample.end());
    }

    const auto rank = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(n))));
    const std::size_t kth = std::max<std::size_t>(rank, 1) - 1;
    std::vector<double> dist(n);
    double total = 0.0;
    for (std::size_t s : sample) {
        for (std::size_t j = 0; j < n; ++j) dist[j] = squared_distance(x.row(s), x.row(j));
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kth), dist.end());
        total += std::sqrt(dist[kth]);
    }
    const double mean = total / static_cast<double>(sample.size());
    return mean > 0.0 ? mean : kBandwidthFallback;
}

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::intermediate:
            return "intermediate";
        case Stage::initial:
            return "initial";
        case Stage::terminal:
            return "terminal";
    }
    return "unknown";
}

Stage stage_from_string(const std::string& text) {
    if (text == "intermediate") return Stage::intermediate;
    if (text == "initial") return Stage::initial;
    if (text == "terminal") return Stage::terminal;
    throw FormatError("unknown stage '" + text + "'");
}

namespace {

RealMatrix select_rows(const RealMatrix& x, const std::vector<std::size_t>& rows) {
    RealMatrix out(rows.size(), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(x.row(rows[r]).begin(), x.row(rows[r]).end(), out.row(r).begin());
    }
    return out;
}

MeanShiftResult cluster_boundary(const RealMatrix& x, std::optional<double> bandwidth, double quantile,
                                 std::uint64_t seed) {
    if (!bandwidth) {
        bandwidth = x.rows() >= 2 ? estimate_bandwidth(x, quantile, seed) : kBandwidthFallback;
    }
    return meanshift(x, *bandwidth);
}

}  // namespace

ClusterAssignment generate_clusters(const XRLDataset& d, const DerivedFields& derived, const RealMatrix& features,
                                    int k, std::uint64_t seed, const StagedClusterOptions& opt) {
    const std::size_t n = d.size();
    if (features.rows() != n) throw InputError("feature matrix rows do not match the dataset");
    if (derived.episode_ids.size() != n) throw InputError("derived fields do not match the dataset");
    if (k < 1) throw InputError("k must be positive");

    std::vector<std::size_t> initial, terminal, middle;
    for (std::size_t i = 0; i < n; ++i) {
        if (d.dones[i] != 0) {
            terminal.push_back(i);
        } else if (d.steps[i] == 0) {
            initial.push_back(i);
        } else {
            middle.push_back(i);
        }
    }
    if (terminal.empty()) throw StagingError("dataset has no terminal (done) datapoints");
    if (initial.empty()) throw StagingError("dataset has no initial datapoints outside single-step episodes");
    if (static_cast<std::size_t>(k) > middle.size()) {
        throw InputError("k = " + std::to_string(k) + " exceeds the " + std::to_string(middle.size()) +
                         " intermediate datapoints");
    }

    const auto km = kmeans(select_rows(features, middle), k, seed, opt.kmeans);
    const auto ms_initial =
        cluster_boundary(select_rows(features, initial), opt.initial_bandwidth, opt.bandwidth_quantile, seed);
    const auto ms_terminal =
        cluster_boundary(select_rows(features, terminal), opt.terminal_bandwidth, opt.bandwidth_quantile, seed);

    ClusterAssignment a;
    a.labels.assign(n, -1);
    a.k_intermediate = k;
    a.n_initial = static_cast<int>(ms_initial.modes.rows());
    a.n_terminal = static_cast<int>(ms_terminal.modes.rows());
    a.seed = seed;
    for (std::size_t r = 0; r < middle.size(); ++r) a.labels[middle[r]] = km.labels[r];
    for (std::size_t r = 0; r < initial.size(); ++r) a.labels[initial[r]] = k + ms_initial.labels[r];
    for (std::size_t r = 0; r < terminal.size(); ++r) {
        a.labels[terminal[r]] = k + a.n_initial + ms_terminal.labels[r];
    }
    a.stage_of.assign(static_cast<std::size_t>(k), Stage::intermediate);
    a.stage_of.insert(a.stage_of.end(), static_cast<std::size_t>(a.n_initial), Stage::initial);
    a.stage_of.insert(a.stage_of.end(), static_cast<std::size_t>(a.n_terminal), Stage::terminal);

    std::vector<std::size_t> counts(static_cast<std::size_t>(a.num_clusters()), 0);
    for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
    if (std::find(counts.begin(), counts.end(), std::size_t{0}) != counts.end()) {
        throw InputError("k-means left an empty cluster; the intermediate rows have fewer than k distinct values");
    }
    return a;
}

ClusterAssignment generate_clusters(const XRLDataset& d, const DerivedFields& derived,
                                    const std::vector<std::string>& feature_spec, int k, std::uint64_t seed,
                                    const StagedClusterOptions& opt) {
    auto a = generate_clusters(d, derived, build_feature_matrix(d, feature_spec), k, seed, opt);
    a.feature_spec = feature_spec;
    return a;
}

std::vector<std::string> check_assignment(const XRLDataset& d, const ClusterAssignment& a) {
    std::vector<std::string> problems;
    const int c = a.num_clusters();
    if (a.labels.size() != d.size()) {
        problems.push_back("label count differs from dataset size");
        return problems;
    }
    if (a.stage_of.size() != static_cast<std::size_t>(c)) {
        problems.push_back("stage table size differs from cluster count");
        return problems;
    }
    for (int id = 0; id < c; ++id) {
        const Stage expected = id < a.k_intermediate                 ? Stage::intermediate
                               : id < a.k_intermediate + a.n_initial ? Stage::initial
                                                                     : Stage::terminal;
        if (a.stage_of[static_cast<std::size_t>(id)] != expected) {
            problems.push_back("cluster " + std::to_string(id) + " breaks the id ordering");
        }
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(c), 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const int l = a.labels[i];
        if (l < 0 || l >= c) {
            problems.push_back("datapoint " + std::to_string(i) + " has out-of-range label");
            continue;
        }
        ++counts[static_cast<std::size_t>(l)];
        const Stage s = a.stage_of[static_cast<std::size_t>(l)];
        if (d.dones[i] != 0 && s != Stage::terminal) {
            problems.push_back("done datapoint " + std::to_string(i) + " is not in a terminal cluster");
        } else if (d.dones[i] == 0 && d.steps[i] == 0 && s != Stage::initial) {
            problems.push_back("start datapoint " + std::to_string(i) + " is not in an initial cluster");
        } else if (d.dones[i] == 0 && d.steps[i] != 0 && s != Stage::intermediate) {
            problems.push_back("datapoint " + std::to_string(i) + " is not in an intermediate cluster");
        }
    }
    for (int id = 0; id < c; ++id) {
        if (counts[static_cast<std::size_t>(id)] == 0) problems.push_back("cluster " + std::to_string(id) + " is empty");
    }
    return problems;
}

void save_clusters(const ClusterAssignment& a, const std::filesystem::path& path) {
    std::vector<std::string> stages;
    for (Stage s : a.stage_of) stages.push_back(to_string(s));
    std::vector<std::int32_t> labels(a.labels.begin(), a.labels.end());
    xrld::Container c;
    c.meta = {{"kind", "clusters"},
              {"k_intermediate", a.k_intermediate},
              {"n_initial", a.n_initial},
              {"n_terminal", a.n_terminal},
              {"stages", stages},
              {"feature_spec", a.feature_spec},
              {"seed", a.seed}};
    c.arrays.push_back(xrld::make_array("labels", std::span<const std::int32_t>(labels), {labels.size()}));
    xrld::write_file(c, path);
}

ClusterAssignment load_clusters(const std::filesystem::path& path) {
    const auto c = xrld::read_file(path);
    if (c.meta.value("kind", "") != "clusters") {
        throw FormatError(path.string() + " is not a cluster assignment file");
    }
    ClusterAssignment a;
    try {
        a.k_intermediate = c.meta.at("k_intermediate").get<int>();
        a.n_initial = c.meta.at("n_initial").get<int>();
        a.n_terminal = c.meta.at("n_terminal").get<int>();
        for (const auto& s : c.meta.at("stages")) a.stage_of.push_back(stage_from_string(s.get<std::string>()));
        a.feature_spec = c.meta.at("feature_spec").get<std::vector<std::string>>();
        a.seed = c.meta.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("cluster header is incomplete: ") + e.what());
    }
    const auto labels = xrld::as_i32(c.at("labels"));
    a.labels.assign(labels.begin(), labels.end());
    if (a.stage_of.size() != static_cast<std::size_t>(a.num_clusters())) {
        throw CorruptionError("cluster stage table does not match the cluster counts");
    }
    return a;
}

}  // namespace xrl
